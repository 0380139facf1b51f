#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitlp/tensor.hpp"

namespace vitlp {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat container of named arrays. On disk:
//
//   VITLP-CHECKPOINT 1
//   meta <key> <value>          (zero or more)
//   tensor <name> <rank> <d0> ... <dn>
//   end
//   <payload: every tensor's values as little-endian float64, manifest order>
struct Checkpoint {
  static constexpr int kVersion = 1;

  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  const Tensor* find(const std::string& name) const;
};

}  // namespace vitlp
