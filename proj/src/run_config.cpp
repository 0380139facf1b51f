#include "vitlp/run_config.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace vitlp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw RunConfigError("config key " + key + ": not a number: " + text);
  return v;
}

}  // namespace

std::string format_double(double v) {
  std::string out;
  for (int p = 1; p <= 17; ++p) {
    std::ostringstream t;
    t << std::setprecision(p) << v;
    out = t.str();
    if (std::stod(out) == v) break;
  }
  return out;
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

long RunConfig::get_int(const std::string& key, long fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : parse_number<long>(key, it->second);
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : parse_number<std::uint64_t>(key, it->second);
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : parse_number<double>(key, it->second);
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw RunConfigError("config key " + key + ": not a boolean: " + it->second);
}

void RunConfig::merge(const RunConfig& other) {
  for (const auto& [k, v] : other.values) values[k] = v;
}

std::string RunConfig::format() const {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig rc;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw RunConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw RunConfigError("config line " + std::to_string(lineno) + ": empty key");
    rc.values[key] = trim(t.substr(eq + 1));
  }
  return rc;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write config " + path.string());
  os << format();
}

ModelConfig model_config(const RunConfig& rc) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : rc.values)
    if (k.rfind("model.", 0) == 0) kv[k.substr(6)] = v;
  try {
    return ModelConfig::from_map(kv);
  } catch (const std::invalid_argument& e) {
    throw RunConfigError(std::string("model config: ") + e.what());
  }
}

SegmentConfig segment_config(const RunConfig& rc) {
  SegmentConfig sc;
  sc.max_targets = static_cast<int>(rc.get_int("seg.max_targets", sc.max_targets));
  sc.alpha_p = rc.get_double("seg.alpha_p", sc.alpha_p);
  sc.validate();
  return sc;
}

AdamWConfig optimizer_config(const RunConfig& rc) {
  AdamWConfig c;
  c.lr = rc.get_double("optim.lr", c.lr);
  c.beta1 = rc.get_double("optim.beta1", c.beta1);
  c.beta2 = rc.get_double("optim.beta2", c.beta2);
  c.eps = rc.get_double("optim.eps", c.eps);
  c.weight_decay = rc.get_double("optim.weight_decay", c.weight_decay);
  c.horizon = rc.get_int("optim.horizon", c.horizon);
  return c;
}

void store(RunConfig& rc, const ModelConfig& mc) {
  for (const auto& [k, v] : mc.to_map()) rc.set("model." + k, v);
}

void store(RunConfig& rc, const SegmentConfig& sc) {
  rc.set("seg.max_targets", std::to_string(sc.max_targets));
  rc.set("seg.alpha_p", format_double(sc.alpha_p));
}

void store(RunConfig& rc, const AdamWConfig& ac) {
  rc.set("optim.lr", format_double(ac.lr));
  rc.set("optim.beta1", format_double(ac.beta1));
  rc.set("optim.beta2", format_double(ac.beta2));
  rc.set("optim.eps", format_double(ac.eps));
  rc.set("optim.weight_decay", format_double(ac.weight_decay));
  rc.set("optim.horizon", std::to_string(ac.horizon));
}

}  // namespace vitlp
