#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "vitlp/model.hpp"
#include "vitlp/objectives.hpp"
#include "vitlp/segmenter.hpp"

namespace vitlp {

class RunConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Flat `key = value` settings. Keys are dotted (`model.d`, `optim.lr`, ...);
// `#` starts a comment line.
struct RunConfig {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values[key] = value; }
  // Fills in `key` only when it is absent.
  void set_default(const std::string& key, const std::string& value) { values.emplace(key, value); }

  std::string get(const std::string& key, const std::string& fallback) const;
  long get_int(const std::string& key, long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // `other` wins on conflicts.
  void merge(const RunConfig& other);

  std::string format() const;
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

ModelConfig model_config(const RunConfig& rc);
SegmentConfig segment_config(const RunConfig& rc);
AdamWConfig optimizer_config(const RunConfig& rc);

// Writes the model and segment settings back under their dotted keys.
void store(RunConfig& rc, const ModelConfig& mc);
void store(RunConfig& rc, const SegmentConfig& sc);
void store(RunConfig& rc, const AdamWConfig& ac);

}  // namespace vitlp
