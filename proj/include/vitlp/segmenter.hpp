#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "vitlp/codec.hpp"

namespace vitlp {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContinuityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SegmentConfig {
  int max_targets = 64;  // M
  double alpha_p = 0.25;

  void validate() const;
  int prefix_len() const;            // α_p·M
  int continuation_targets() const;  // (1 − α_p)·M
};

enum class SegmentMode { Beginning, Continuation };

struct Segment {
  SegmentMode mode = SegmentMode::Beginning;
  int mode_token = 0;
  std::vector<SeqEntry> prefix;
  std::vector<SeqEntry> targets;
  // One flag per position of [mode token, prefix..., targets...].
  std::vector<bool> loss_mask;

  bool operator==(const Segment&) const = default;
};

// Number of segments a sequence of `len` tokens splits into.
std::size_t segment_count(std::size_t len, const SegmentConfig& cfg);

std::vector<Segment> split(const Vocabulary& vocab, const GlobalSequence& seq, const SegmentConfig& cfg);

// Segments may come from split() or from generation; a trailing [EOS] on the
// last segment is stripped.
GlobalSequence reassemble(const Vocabulary& vocab, const std::vector<Segment>& segments, const SegmentConfig& cfg);

std::vector<SeqEntry> next_prefix(const Segment& prev, const SegmentConfig& cfg);

Segment make_segment(const Vocabulary& vocab, SegmentMode mode, std::vector<SeqEntry> prefix,
                     std::vector<SeqEntry> targets);

// `MODE|prefix entries|target entries`, entries space-separated, [LOC]
// entries written as `[LOC]@x1,y1,x2,y2`.
std::string format_segment(const Vocabulary& vocab, const Segment& s);

}  // namespace vitlp
