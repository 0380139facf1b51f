#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vitlp/geometry.hpp"

namespace vitlp {

class EncodingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MalformedSequenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Special { Pad, Bos, Cont, Eos, Loc, DocCls, Vqa, AnsYes, AnsNo, Sep };

// Character-level vocabulary augmented with [LOC] and task tokens. Ids are
// dense: specials first, then the alphabet, then class-label tokens.
class Vocabulary {
 public:
  static constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyz0123456789.,:-?";
  static constexpr int kNumSpecials = 10;
  static constexpr int kVersion = 1;

  explicit Vocabulary(int num_classes = 4);

  int size() const { return static_cast<int>(texts_.size()); }
  int num_classes() const { return num_classes_; }

  int id(Special s) const { return static_cast<int>(s); }
  int loc() const { return id(Special::Loc); }
  int bos() const { return id(Special::Bos); }
  int cont() const { return id(Special::Cont); }
  int eos() const { return id(Special::Eos); }

  bool in_alphabet(char c) const;
  int char_id(char c) const;
  bool is_char(int id) const;
  char to_char(int id) const;

  int class_token(int k) const;
  bool is_class(int id) const;
  int class_index(int id) const;

  const std::string& text(int id) const;
  int from_text(std::string_view text) const;

  std::string manifest() const;
  static Vocabulary from_manifest(const std::string& text);

  bool operator==(const Vocabulary& o) const { return texts_ == o.texts_; }

 private:
  int num_classes_;
  std::vector<std::string> texts_;
  std::map<std::string, int, std::less<>> index_;
};

struct WordBox {
  std::string word;
  BBox box;
  bool operator==(const WordBox&) const = default;
};

// One position of a global sequence: a token, plus its coordinates when the
// token is [LOC].
struct SeqEntry {
  int token = 0;
  std::optional<BBox> box;
  bool operator==(const SeqEntry&) const = default;
};

// Interleaved text-layout stream with every word's box collapsed into a
// single [LOC] token; coordinates ride alongside in loc_targets.
struct GlobalSequence {
  std::vector<int> tokens;
  std::map<std::size_t, BBox> loc_targets;

  std::size_t size() const { return tokens.size(); }
  std::vector<SeqEntry> entries() const;
  static GlobalSequence from_entries(const std::vector<SeqEntry>& entries);
  // Throws MalformedSequenceError when [LOC] positions and loc_targets disagree.
  void validate(const Vocabulary& vocab) const;
  bool operator==(const GlobalSequence&) const = default;
};

std::vector<int> tokenize_word(const Vocabulary& vocab, std::string_view word);
std::string detokenize(const Vocabulary& vocab, const std::vector<int>& ids);

// Row-major reading order: band = y1 / median word height, then x1.
void sort_reading_order(std::vector<WordBox>& words);

GlobalSequence encode_document(const Vocabulary& vocab, const std::vector<WordBox>& words);

struct DecodeResult {
  std::vector<WordBox> words;
  // Every word closed by a [LOC], including those whose box was rejected.
  std::vector<std::string> texts;
  // Trailing characters not closed by a [LOC], reported rather than dropped.
  std::optional<std::string> unterminated;
  // Lenient mode only: problems that were skipped over.
  std::vector<std::string> diagnostics;
};

enum class DecodeMode { Strict, Lenient };

DecodeResult decode_sequence(const Vocabulary& vocab, const GlobalSequence& seq,
                             DecodeMode mode = DecodeMode::Strict);

// (|w|+1)/(|w|+4) with |w| the mean token count per word.
double compression_ratio(const std::vector<WordBox>& words);

// `token[\tx1 y1 x2 y2]`, one position per line.
std::string format_sequence(const Vocabulary& vocab, const GlobalSequence& seq);
GlobalSequence parse_sequence(const Vocabulary& vocab, const std::string& text);
std::string format_entry(const Vocabulary& vocab, const SeqEntry& e);

}  // namespace vitlp
