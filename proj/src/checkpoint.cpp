#include "vitlp/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace vitlp {

namespace {

void write_le_double(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFFu);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

double read_le_double(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw FormatError("checkpoint payload truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os << "VITLP-CHECKPOINT " << kVersion << '\n';
  for (const auto& [k, v] : meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw FormatError("checkpoint meta entries must be single-line, key without spaces: " + k);
    }
    os << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& [name, t] : tensors) {
    os << "tensor " << name << ' ' << t.rank();
    for (auto d : t.shape()) os << ' ' << d;
    os << '\n';
  }
  os << "end\n";
  for (const auto& [name, t] : tensors)
    for (double v : t.data()) write_le_double(os, v);
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty checkpoint");
  {
    std::istringstream hs(line);
    std::string magic;
    int version = 0;
    hs >> magic >> version;
    if (magic != "VITLP-CHECKPOINT") throw FormatError("not a checkpoint file: " + path.string());
    if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  std::vector<std::pair<std::string, Shape>> manifest;
  bool ended = false;
  while (std::getline(is, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ck.meta[key] = value;
    } else if (kind == "tensor") {
      std::string name;
      std::size_t rank = 0;
      ls >> name >> rank;
      Shape shape(rank);
      for (auto& d : shape) ls >> d;
      if (!ls || rank == 0) throw FormatError("bad tensor header: " + line);
      manifest.emplace_back(name, shape);
    } else {
      throw FormatError("unexpected manifest line: " + line);
    }
  }
  if (!ended) throw FormatError("checkpoint manifest missing 'end'");
  for (auto& [name, shape] : manifest) {
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = read_le_double(is);
    ck.tensors.emplace_back(name, Tensor::from(shape, std::move(values)));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint payload");
  return ck;
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

}  // namespace vitlp
