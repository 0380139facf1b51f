#include "vitlp/segmenter.hpp"

#include <algorithm>
#include <cmath>

namespace vitlp {

void SegmentConfig::validate() const {
  if (max_targets < 4) throw ConfigError("segment length M must be at least 4");
  if (!(alpha_p > 0.0 && alpha_p < 1.0)) throw ConfigError("prefix ratio must lie in (0,1)");
  const double p = alpha_p * max_targets;
  if (std::abs(p - std::round(p)) > 1e-9) throw ConfigError("alpha_p * M must be an integer");
  if (std::lround(p) < 1) throw ConfigError("alpha_p * M must be at least 1");
}

int SegmentConfig::prefix_len() const { return static_cast<int>(std::lround(alpha_p * max_targets)); }

int SegmentConfig::continuation_targets() const { return max_targets - prefix_len(); }

std::size_t segment_count(std::size_t len, const SegmentConfig& cfg) {
  cfg.validate();
  const auto m = static_cast<std::size_t>(cfg.max_targets);
  if (len <= m) return 1;
  const auto c = static_cast<std::size_t>(cfg.continuation_targets());
  return 1 + (len - m + c - 1) / c;
}

Segment make_segment(const Vocabulary& vocab, SegmentMode mode, std::vector<SeqEntry> prefix,
                     std::vector<SeqEntry> targets) {
  Segment s;
  s.mode = mode;
  s.mode_token = mode == SegmentMode::Beginning ? vocab.bos() : vocab.cont();
  s.loss_mask.assign(1 + prefix.size(), false);
  s.loss_mask.resize(1 + prefix.size() + targets.size(), true);
  s.prefix = std::move(prefix);
  s.targets = std::move(targets);
  return s;
}

std::vector<SeqEntry> next_prefix(const Segment& prev, const SegmentConfig& cfg) {
  if (prev.targets.empty()) throw std::invalid_argument("next_prefix: previous segment has no targets");
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(cfg.prefix_len()), prev.targets.size());
  return {prev.targets.end() - static_cast<std::ptrdiff_t>(take), prev.targets.end()};
}

std::vector<Segment> split(const Vocabulary& vocab, const GlobalSequence& seq, const SegmentConfig& cfg) {
  cfg.validate();
  if (seq.tokens.empty()) throw std::invalid_argument("split: empty sequence");
  const auto entries = seq.entries();
  const std::size_t len = entries.size();
  const auto m = static_cast<std::size_t>(cfg.max_targets);
  const auto c = static_cast<std::size_t>(cfg.continuation_targets());

  std::vector<Segment> out;
  std::size_t pos = std::min(m, len);
  out.push_back(make_segment(vocab, SegmentMode::Beginning, {}, {entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(pos)}));
  while (pos < len) {
    const std::size_t end = std::min(pos + c, len);
    auto prefix = next_prefix(out.back(), cfg);
    out.push_back(make_segment(vocab, SegmentMode::Continuation, std::move(prefix),
                               {entries.begin() + static_cast<std::ptrdiff_t>(pos),
                                entries.begin() + static_cast<std::ptrdiff_t>(end)}));
    pos = end;
  }
  out.back().targets.push_back({vocab.eos(), std::nullopt});
  out.back().loss_mask.push_back(true);
  return out;
}

GlobalSequence reassemble(const Vocabulary& vocab, const std::vector<Segment>& segments, const SegmentConfig& cfg) {
  if (segments.empty()) throw std::invalid_argument("reassemble: no segments");
  std::vector<SeqEntry> all;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& s = segments[i];
    if (i == 0) {
      if (s.mode != SegmentMode::Beginning || !s.prefix.empty()) {
        throw ContinuityError("first segment must be a Beginning segment without prefix");
      }
    } else {
      if (s.mode != SegmentMode::Continuation) throw ContinuityError("segment " + std::to_string(i) + " is not a continuation");
      if (s.prefix != next_prefix(segments[i - 1], cfg)) {
        throw ContinuityError("prefix of segment " + std::to_string(i) + " does not match the previous suffix");
      }
    }
    all.insert(all.end(), s.targets.begin(), s.targets.end());
  }
  if (!all.empty() && all.back().token == vocab.eos()) all.pop_back();
  return GlobalSequence::from_entries(all);
}

std::string format_segment(const Vocabulary& vocab, const Segment& s) {
  auto entry = [&](const SeqEntry& e) {
    std::string t = vocab.text(e.token);
    if (e.box) {
      t += '@' + std::to_string(e.box->x1) + ',' + std::to_string(e.box->y1) + ',' + std::to_string(e.box->x2) + ',' +
           std::to_string(e.box->y2);
    }
    return t;
  };
  auto join = [&](const std::vector<SeqEntry>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ' ';
      out += entry(v[i]);
    }
    return out;
  };
  return std::string(s.mode == SegmentMode::Beginning ? "BOS" : "CONT") + '|' + join(s.prefix) + '|' + join(s.targets);
}

}  // namespace vitlp
