#include "vitlp/codec.hpp"

#include <algorithm>
#include <sstream>

namespace vitlp {

namespace {

constexpr std::string_view kSpecialTexts[Vocabulary::kNumSpecials] = {
    "[PAD]", "[BOS]", "[CONT]", "[EOS]", "[LOC]", "[DOC_CLS]", "[VQA]", "[ANS_YES]", "[ANS_NO]", "[SEP]"};

std::string class_text(int k) { return "[CLS_" + std::to_string(k) + "]"; }

}  // namespace

Vocabulary::Vocabulary(int num_classes) : num_classes_(num_classes) {
  if (num_classes < 1) throw std::invalid_argument("vocabulary needs at least one class token");
  for (auto s : kSpecialTexts) texts_.emplace_back(s);
  for (char c : kAlphabet) texts_.emplace_back(1, c);
  for (int k = 0; k < num_classes; ++k) texts_.push_back(class_text(k));
  for (int i = 0; i < size(); ++i) index_.emplace(texts_[static_cast<std::size_t>(i)], i);
}

bool Vocabulary::in_alphabet(char c) const { return kAlphabet.find(c) != std::string_view::npos; }

int Vocabulary::char_id(char c) const {
  const auto pos = kAlphabet.find(c);
  if (pos == std::string_view::npos) throw EncodingError(std::string("character outside alphabet: '") + c + "'");
  return kNumSpecials + static_cast<int>(pos);
}

bool Vocabulary::is_char(int id) const {
  return id >= kNumSpecials && id < kNumSpecials + static_cast<int>(kAlphabet.size());
}

char Vocabulary::to_char(int id) const {
  if (!is_char(id)) throw EncodingError("token " + std::to_string(id) + " is not a character");
  return kAlphabet[static_cast<std::size_t>(id - kNumSpecials)];
}

int Vocabulary::class_token(int k) const {
  if (k < 0 || k >= num_classes_) throw EncodingError("class index out of range: " + std::to_string(k));
  return kNumSpecials + static_cast<int>(kAlphabet.size()) + k;
}

bool Vocabulary::is_class(int id) const {
  const int first = kNumSpecials + static_cast<int>(kAlphabet.size());
  return id >= first && id < first + num_classes_;
}

int Vocabulary::class_index(int id) const {
  if (!is_class(id)) throw EncodingError("token " + std::to_string(id) + " is not a class token");
  return id - (kNumSpecials + static_cast<int>(kAlphabet.size()));
}

const std::string& Vocabulary::text(int id) const {
  if (id < 0 || id >= size()) throw EncodingError("token id out of range: " + std::to_string(id));
  return texts_[static_cast<std::size_t>(id)];
}

int Vocabulary::from_text(std::string_view text) const {
  auto it = index_.find(text);
  if (it == index_.end()) throw EncodingError("unknown token text: " + std::string(text));
  return it->second;
}

std::string Vocabulary::manifest() const {
  std::ostringstream os;
  os << "VITLP-VOCAB " << kVersion << '\n';
  os << "classes " << num_classes_ << '\n';
  for (int i = 0; i < size(); ++i) os << i << '\t' << texts_[static_cast<std::size_t>(i)] << '\n';
  return os.str();
}

Vocabulary Vocabulary::from_manifest(const std::string& text) {
  std::istringstream is(text);
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "VITLP-VOCAB" || version != kVersion) throw EncodingError("bad vocabulary manifest header");
  std::string key;
  int classes = 0;
  is >> key >> classes;
  if (key != "classes") throw EncodingError("vocabulary manifest missing class count");
  Vocabulary v(classes);
  std::string line;
  std::getline(is, line);
  int expected = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw EncodingError("bad vocabulary line: " + line);
    const int id = std::stoi(line.substr(0, tab));
    if (id != expected || v.text(id) != line.substr(tab + 1)) {
      throw EncodingError("vocabulary manifest disagrees with this build at id " + std::to_string(id));
    }
    ++expected;
  }
  if (expected != v.size()) throw EncodingError("vocabulary manifest has wrong token count");
  return v;
}

std::vector<SeqEntry> GlobalSequence::entries() const {
  std::vector<SeqEntry> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    SeqEntry e{tokens[i], std::nullopt};
    if (auto it = loc_targets.find(i); it != loc_targets.end()) e.box = it->second;
    out.push_back(e);
  }
  return out;
}

GlobalSequence GlobalSequence::from_entries(const std::vector<SeqEntry>& entries) {
  GlobalSequence s;
  s.tokens.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.box) s.loc_targets.emplace(s.tokens.size(), *e.box);
    s.tokens.push_back(e.token);
  }
  return s;
}

void GlobalSequence::validate(const Vocabulary& vocab) const {
  std::size_t locs = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= vocab.size()) {
      throw MalformedSequenceError("token id out of range at position " + std::to_string(i));
    }
    const bool is_loc = tokens[i] == vocab.loc();
    const bool has_box = loc_targets.contains(i);
    if (is_loc != has_box) {
      throw MalformedSequenceError(is_loc ? "[LOC] without coordinates at position " + std::to_string(i)
                                          : "coordinates at non-[LOC] position " + std::to_string(i));
    }
    if (has_box && !loc_targets.at(i).valid()) {
      throw MalformedSequenceError("invalid box at position " + std::to_string(i));
    }
    locs += is_loc ? 1 : 0;
  }
  if (locs != loc_targets.size()) throw MalformedSequenceError("loc_targets refer to positions past the sequence");
}

std::vector<int> tokenize_word(const Vocabulary& vocab, std::string_view word) {
  std::vector<int> ids;
  ids.reserve(word.size());
  for (char c : word) ids.push_back(vocab.char_id(c));
  return ids;
}

std::string detokenize(const Vocabulary& vocab, const std::vector<int>& ids) {
  std::string s;
  s.reserve(ids.size());
  for (int id : ids) s.push_back(vocab.to_char(id));
  return s;
}

void sort_reading_order(std::vector<WordBox>& words) {
  if (words.empty()) return;
  std::vector<int> heights;
  heights.reserve(words.size());
  for (const auto& w : words) heights.push_back(w.box.y2 - w.box.y1);
  std::nth_element(heights.begin(), heights.begin() + static_cast<std::ptrdiff_t>(heights.size() / 2), heights.end());
  const int band = std::max(1, heights[heights.size() / 2]);
  std::stable_sort(words.begin(), words.end(), [band](const WordBox& a, const WordBox& b) {
    const int ba = a.box.y1 / band, bb = b.box.y1 / band;
    if (ba != bb) return ba < bb;
    return a.box.x1 < b.box.x1;
  });
}

GlobalSequence encode_document(const Vocabulary& vocab, const std::vector<WordBox>& words) {
  if (words.empty()) throw EncodingError("cannot encode an empty document");
  GlobalSequence seq;
  for (const auto& w : words) {
    if (w.word.empty()) throw EncodingError("empty word");
    if (!w.box.valid()) throw RangeError("invalid box for word '" + w.word + "'");
    for (int id : tokenize_word(vocab, w.word)) seq.tokens.push_back(id);
    seq.loc_targets.emplace(seq.tokens.size(), w.box);
    seq.tokens.push_back(vocab.loc());
  }
  return seq;
}

DecodeResult decode_sequence(const Vocabulary& vocab, const GlobalSequence& seq, DecodeMode mode) {
  DecodeResult out;
  std::string pending;
  auto fail = [&](const std::string& msg) {
    if (mode == DecodeMode::Strict) throw MalformedSequenceError(msg);
    out.diagnostics.push_back(msg);
  };
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    const int t = seq.tokens[i];
    if (vocab.is_char(t)) {
      pending.push_back(vocab.to_char(t));
      continue;
    }
    if (t != vocab.loc()) {
      fail("unexpected token " + (t >= 0 && t < vocab.size() ? vocab.text(t) : std::to_string(t)) + " at position " +
           std::to_string(i));
      continue;
    }
    auto it = seq.loc_targets.find(i);
    if (pending.empty()) {
      fail("[LOC] closes an empty word at position " + std::to_string(i));
      continue;
    }
    out.texts.push_back(pending);
    if (it == seq.loc_targets.end() || !it->second.valid()) {
      fail("[LOC] without valid coordinates at position " + std::to_string(i));
      pending.clear();
      continue;
    }
    out.words.push_back({pending, it->second});
    pending.clear();
  }
  if (!pending.empty()) out.unterminated = pending;
  return out;
}

double compression_ratio(const std::vector<WordBox>& words) {
  if (words.empty()) throw EncodingError("compression_ratio of an empty document");
  std::size_t chars = 0;
  for (const auto& w : words) chars += w.word.size();
  // (|w|+1)/(|w|+4) with |w| = chars/N, scaled by N to stay in integers.
  const std::size_t n = words.size();
  return static_cast<double>(chars + n) / static_cast<double>(chars + 4 * n);
}

std::string format_entry(const Vocabulary& vocab, const SeqEntry& e) {
  std::string s = vocab.text(e.token);
  if (e.box) {
    s += '\t';
    s += std::to_string(e.box->x1) + ' ' + std::to_string(e.box->y1) + ' ' + std::to_string(e.box->x2) + ' ' +
         std::to_string(e.box->y2);
  }
  return s;
}

std::string format_sequence(const Vocabulary& vocab, const GlobalSequence& seq) {
  std::string out;
  for (const auto& e : seq.entries()) {
    out += format_entry(vocab, e);
    out += '\n';
  }
  return out;
}

GlobalSequence parse_sequence(const Vocabulary& vocab, const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<SeqEntry> entries;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    SeqEntry e;
    e.token = vocab.from_text(line.substr(0, tab));
    if (tab != std::string::npos) {
      std::istringstream cs(line.substr(tab + 1));
      BBox b;
      if (!(cs >> b.x1 >> b.y1 >> b.x2 >> b.y2)) throw MalformedSequenceError("bad coordinate line: " + line);
      e.box = b;
    }
    entries.push_back(e);
  }
  auto seq = GlobalSequence::from_entries(entries);
  seq.validate(vocab);
  return seq;
}

}  // namespace vitlp
