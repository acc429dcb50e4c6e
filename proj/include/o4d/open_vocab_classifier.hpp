#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "o4d/embedding_matrix.hpp"
#include "o4d/fusion_4d.hpp"

namespace o4d {

inline constexpr const char* kNoLabelName = "no label";

// K ordered class prompts with unit-norm text embeddings.
struct PromptSet {
  std::vector<std::string> classes;
  EmbeddingMatrix embeddings;

  int num_classes() const { return static_cast<int>(classes.size()); }
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual int dim() const = 0;
  virtual std::vector<float> encode(const std::string& prompt) const = 0;
};

// Maps each fixture class name to its part centroid and any other string to a
// reproducible pseudo-random unit vector.
class StubTextEncoder final : public TextEncoder {
 public:
  StubTextEncoder(int dim, std::vector<std::string> fixture_classes);

  int dim() const override { return dim_; }
  std::vector<float> encode(const std::string& prompt) const override;

 private:
  int dim_;
  std::vector<std::string> fixture_classes_;
};

struct VocabularyEntry {
  std::string text;
  std::vector<float> vector;

  friend bool operator==(const VocabularyEntry&, const VocabularyEntry&) = default;
};

// Binary layout: "O4DV", u32 D, u32 count, then count records of
// (u32 byte length, UTF-8 bytes, D x f32).
std::string serialize_vocabulary(int dim, std::span<const VocabularyEntry> entries);
std::vector<VocabularyEntry> parse_vocabulary(const std::string& bytes, int* dim_out = nullptr);
void write_vocabulary_file(const std::filesystem::path& path, int dim,
                           std::span<const VocabularyEntry> entries);
std::vector<VocabularyEntry> read_vocabulary_file(const std::filesystem::path& path,
                                                  int* dim_out = nullptr);

// Exact-string lookup into a vocabulary file.
class VocabularyTextEncoder final : public TextEncoder {
 public:
  explicit VocabularyTextEncoder(const std::filesystem::path& path);
  VocabularyTextEncoder(int dim, std::span<const VocabularyEntry> entries);

  int dim() const override { return dim_; }
  // Throws UnknownPromptError for strings not in the vocabulary.
  std::vector<float> encode(const std::string& prompt) const override;

 private:
  int dim_ = 0;
  std::map<std::string, std::vector<float>> table_;
};

// Throws ValidationError for an empty or duplicated prompt list.
PromptSet embed_prompts(const TextEncoder& encoder, std::span<const std::string> prompts);

// L_t x K logits for one frame, stored row-major.
struct LogitsMatrix {
  int frame = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double& at(std::size_t l, std::size_t k) { return values[l * cols + k]; }
  double at(std::size_t l, std::size_t k) const { return values[l * cols + k]; }
};

// Cosine similarity of every mask embedding with every prompt embedding.
// Throws DimensionError when D differs.
LogitsMatrix compute_logits(const FrameProposalSet& proposals, const PromptSet& prompts);

// Per class column: x * (x - min) / (max - min). Columns with max == min are
// returned unchanged.
LogitsMatrix equalize_logits(LogitsMatrix logits);

struct LabelField {
  int frame = 0;
  int num_classes = 0;                // K; label K means no label
  std::vector<std::uint16_t> labels;  // one per point
  std::vector<double> scores;         // winning accumulated logit

  friend bool operator==(const LabelField&, const LabelField&) = default;
};

// Y = M x P accumulated per point, argmax with ties to the lowest class, and
// the no-label class K wherever max_k Y < tau.
LabelField segment_frame(const FrameProposalSet& proposals, const LogitsMatrix& logits,
                         double tau);

// Label file: per frame, u32 P_t followed by P_t u16 labels. The JSON sidecar
// (path + ".json") lists the class strings with index K = "no label".
struct LabelFile {
  std::vector<std::string> classes;  // includes the trailing "no label"
  std::vector<std::vector<std::uint16_t>> frames;

  friend bool operator==(const LabelFile&, const LabelFile&) = default;
};

std::string serialize_label_frame(std::span<const std::uint16_t> labels);
std::string serialize_labels(const LabelFile& file);
LabelFile parse_labels(const std::string& bytes, std::vector<std::string> classes);
std::filesystem::path label_sidecar_path(const std::filesystem::path& path);
void write_label_file(const std::filesystem::path& path, const LabelFile& file);
LabelFile read_label_file(const std::filesystem::path& path);

LabelFile to_label_file(std::span<const LabelField> fields, std::span<const std::string> classes);

}  // namespace o4d
