#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitlp/codec.hpp"
#include "vitlp/image.hpp"
#include "vitlp/objectives.hpp"

namespace vitlp {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Page styles double as document classes.
enum class LayoutStyle { Paragraph = 0, TwoColumn = 1, Table = 2, List = 3 };
inline constexpr int kNumStyles = 4;
std::string style_name(LayoutStyle s);
LayoutStyle parse_style(const std::string& name);

enum WordTag { kTagHeader = 0, kTagBody = 1, kTagKey = 2, kTagValue = 3 };
inline constexpr int kNumTags = 4;

inline constexpr int kGlyphW = 3;
inline constexpr int kGlyphH = 5;

struct PageSpec {
  std::uint64_t seed = 0;
  int width = 64;
  int height = 64;
  int min_words = 3;
  int max_words = 24;
  int glyph_scale = 1;
  LayoutStyle style = LayoutStyle::Paragraph;
};

struct RenderedPage {
  PageSpec spec;
  Image image;
  std::vector<WordBox> words;  // reading order
  std::vector<int> tags;       // one per word
  int class_id = 0;
  std::vector<QaTarget> qa;
};

// Ink mask (1 = ink) of kGlyphH·scale rows × kGlyphW·scale columns.
std::vector<std::uint8_t> render_glyph(char c, int scale = 1);

RenderedPage generate_page(const PageSpec& spec);

struct CorpusOptions {
  int n = 100;
  std::uint64_t seed = 7;
  int width = 64;
  int height = 64;
  int glyph_scale = 1;
  std::array<double, kNumStyles> mix{1.0, 1.0, 1.0, 1.0};
};

std::vector<RenderedPage> make_corpus(const CorpusOptions& opts);

// Annotation text: `word x1 y1 x2 y2 tag` per word plus `#key value` metadata
// and `#qa` lines.
std::string format_annotation(const RenderedPage& page);
RenderedPage parse_annotation(const std::string& text, Image image);

// SHA-1 over "blob <len>\0<content>", hex encoded.
std::string git_blob_hash(const std::string& content);

struct CorpusFiles {
  std::string manifest;
  std::string hash;
};

// Writes pages/page_NNNN.{pgm,txt} and corpus.txt under `dir`.
CorpusFiles write_corpus(const std::filesystem::path& dir, const std::vector<RenderedPage>& pages,
                         const CorpusOptions& opts);
std::vector<RenderedPage> read_corpus(const std::filesystem::path& dir, std::string* hash = nullptr);

}  // namespace vitlp
