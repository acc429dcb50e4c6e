#include "o4d/open_vocab_classifier.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include <json.hpp>

#include "o4d/binary_io.hpp"
#include "o4d/errors.hpp"

namespace o4d {

StubTextEncoder::StubTextEncoder(int dim, std::vector<std::string> fixture_classes)
    : dim_(dim), fixture_classes_(std::move(fixture_classes)) {
  if (dim_ <= 0) throw ValidationError("text embedding dimension must be positive");
}

std::vector<float> StubTextEncoder::encode(const std::string& prompt) const {
  const auto it = std::find(fixture_classes_.begin(), fixture_classes_.end(), prompt);
  if (it != fixture_classes_.end()) {
    return fixture_centroid(static_cast<int>(it - fixture_classes_.begin()), dim_);
  }
  return pseudo_random_unit(fnv1a64(prompt), dim_);
}

namespace {
constexpr char kVocabMagic[4] = {'O', '4', 'D', 'V'};
}

std::string serialize_vocabulary(int dim, std::span<const VocabularyEntry> entries) {
  ByteWriter out;
  out.put_bytes(std::string_view(kVocabMagic, 4));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(dim));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.vector.size() != static_cast<std::size_t>(dim)) {
      throw DimensionError("vocabulary entry length does not match D");
    }
    out.put_string(e.text);
    out.put_array(std::span<const float>(e.vector));
  }
  return out.take();
}

std::vector<VocabularyEntry> parse_vocabulary(const std::string& bytes, int* dim_out) {
  ByteReader in(bytes);
  if (in.get_bytes(4) != std::string_view(kVocabMagic, 4)) {
    throw FormatError("not a vocabulary file (bad magic)");
  }
  const auto dim = in.get<std::uint32_t>();
  const auto count = in.get<std::uint32_t>();
  if (dim == 0) throw FormatError("vocabulary file declares D = 0");
  std::vector<VocabularyEntry> entries(count);
  for (auto& e : entries) {
    e.text = in.get_string();
    e.vector.resize(dim);
    in.get_array(std::span<float>(e.vector));
  }
  if (!in.at_end()) throw FormatError("trailing bytes after vocabulary records");
  if (dim_out) *dim_out = static_cast<int>(dim);
  return entries;
}

void write_vocabulary_file(const std::filesystem::path& path, int dim,
                           std::span<const VocabularyEntry> entries) {
  write_file_bytes(path, serialize_vocabulary(dim, entries));
}

std::vector<VocabularyEntry> read_vocabulary_file(const std::filesystem::path& path,
                                                  int* dim_out) {
  return parse_vocabulary(read_file_bytes(path), dim_out);
}

VocabularyTextEncoder::VocabularyTextEncoder(const std::filesystem::path& path) {
  const auto entries = read_vocabulary_file(path, &dim_);
  *this = VocabularyTextEncoder(dim_, entries);
}

VocabularyTextEncoder::VocabularyTextEncoder(int dim, std::span<const VocabularyEntry> entries)
    : dim_(dim) {
  for (const auto& e : entries) {
    if (e.vector.size() != static_cast<std::size_t>(dim)) {
      throw DimensionError("vocabulary entry length does not match D");
    }
    auto v = e.vector;
    normalize(v);
    table_[e.text] = std::move(v);
  }
}

std::vector<float> VocabularyTextEncoder::encode(const std::string& prompt) const {
  const auto it = table_.find(prompt);
  if (it == table_.end()) throw UnknownPromptError("unknown prompt: \"" + prompt + "\"");
  return it->second;
}

PromptSet embed_prompts(const TextEncoder& encoder, std::span<const std::string> prompts) {
  if (prompts.empty()) throw ValidationError("prompt list is empty");
  std::set<std::string> seen;
  PromptSet set;
  set.embeddings = EmbeddingMatrix(0, static_cast<std::size_t>(encoder.dim()));
  for (const auto& p : prompts) {
    if (!seen.insert(p).second) throw ValidationError("duplicate prompt: \"" + p + "\"");
    if (p == kNoLabelName) throw ValidationError("\"no label\" is reserved");
    auto v = encoder.encode(p);
    normalize(v);
    set.classes.push_back(p);
    set.embeddings.append_row(v);
  }
  return set;
}

LogitsMatrix compute_logits(const FrameProposalSet& proposals, const PromptSet& prompts) {
  const auto& q = proposals.embeddings;
  if (q.rows() > 0 && q.cols() != prompts.embeddings.cols()) {
    throw DimensionError("mask embeddings have D = " + std::to_string(q.cols()) +
                         " but prompts have D = " + std::to_string(prompts.embeddings.cols()));
  }
  LogitsMatrix out;
  out.frame = proposals.frame;
  out.rows = q.rows();
  out.cols = static_cast<std::size_t>(prompts.num_classes());
  out.values.resize(out.rows * out.cols);
  for (std::size_t l = 0; l < out.rows; ++l) {
    for (std::size_t k = 0; k < out.cols; ++k) {
      out.at(l, k) = cosine(q.row(l), prompts.embeddings.row(k));
    }
  }
  return out;
}

LogitsMatrix equalize_logits(LogitsMatrix logits) {
  for (std::size_t k = 0; k < logits.cols; ++k) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < logits.rows; ++l) {
      lo = std::min(lo, logits.at(l, k));
      hi = std::max(hi, logits.at(l, k));
    }
    if (!(hi > lo)) continue;
    for (std::size_t l = 0; l < logits.rows; ++l) {
      const double x = logits.at(l, k);
      logits.at(l, k) = (x - lo) / (hi - lo) * x;
    }
  }
  return logits;
}

LabelField segment_frame(const FrameProposalSet& proposals, const LogitsMatrix& logits,
                         double tau) {
  if (logits.rows != proposals.masks.size()) {
    throw DimensionError("logits row count does not match the number of masks");
  }
  const std::size_t k_classes = logits.cols;
  if (k_classes >= std::numeric_limits<std::uint16_t>::max()) {
    throw ValidationError("too many classes for 16-bit labels");
  }
  const std::size_t n_points = proposals.point_count;
  std::vector<double> y(n_points * k_classes, 0.0);
  for (std::size_t l = 0; l < proposals.masks.size(); ++l) {
    for (const auto p : proposals.masks[l].point_indices) {
      if (p >= n_points) throw ValidationError("mask point index out of range");
      double* row = &y[static_cast<std::size_t>(p) * k_classes];
      for (std::size_t k = 0; k < k_classes; ++k) row[k] += logits.at(l, k);
    }
  }

  LabelField out;
  out.frame = proposals.frame;
  out.num_classes = static_cast<int>(k_classes);
  out.labels.resize(n_points);
  out.scores.resize(n_points);
  for (std::size_t p = 0; p < n_points; ++p) {
    std::size_t best = 0;
    double best_score = k_classes > 0 ? y[p * k_classes] : 0.0;
    for (std::size_t k = 1; k < k_classes; ++k) {
      if (y[p * k_classes + k] > best_score) {
        best_score = y[p * k_classes + k];
        best = k;
      }
    }
    out.scores[p] = best_score;
    out.labels[p] = static_cast<std::uint16_t>(best_score < tau ? k_classes : best);
  }
  return out;
}

std::string serialize_label_frame(std::span<const std::uint16_t> labels) {
  ByteWriter out;
  out.put<std::uint32_t>(static_cast<std::uint32_t>(labels.size()));
  out.put_array(labels);
  return out.take();
}

std::string serialize_labels(const LabelFile& file) {
  std::string out;
  for (const auto& f : file.frames) out += serialize_label_frame(f);
  return out;
}

LabelFile parse_labels(const std::string& bytes, std::vector<std::string> classes) {
  LabelFile file;
  file.classes = std::move(classes);
  ByteReader in(bytes);
  while (!in.at_end()) {
    const auto n = in.get<std::uint32_t>();
    std::vector<std::uint16_t> labels(n);
    in.get_array(std::span<std::uint16_t>(labels));
    for (auto l : labels) {
      if (!file.classes.empty() && l >= file.classes.size()) {
        throw FormatError("label " + std::to_string(l) + " has no class name in the sidecar");
      }
    }
    file.frames.push_back(std::move(labels));
  }
  return file;
}

std::filesystem::path label_sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

void write_label_file(const std::filesystem::path& path, const LabelFile& file) {
  write_file_bytes(path, serialize_labels(file));
  nlohmann::json sidecar;
  sidecar["classes"] = file.classes;
  sidecar["no_label"] = file.classes.empty() ? 0 : file.classes.size() - 1;
  sidecar["frames"] = file.frames.size();
  write_file_bytes(label_sidecar_path(path), sidecar.dump(2));
}

LabelFile read_label_file(const std::filesystem::path& path) {
  std::vector<std::string> classes;
  try {
    const auto sidecar = nlohmann::json::parse(read_file_bytes(label_sidecar_path(path)));
    classes = sidecar.at("classes").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(label_sidecar_path(path).string() + ": " + e.what());
  }
  return parse_labels(read_file_bytes(path), std::move(classes));
}

LabelFile to_label_file(std::span<const LabelField> fields, std::span<const std::string> classes) {
  LabelFile file;
  file.classes.assign(classes.begin(), classes.end());
  file.classes.emplace_back(kNoLabelName);
  for (const auto& f : fields) file.frames.push_back(f.labels);
  return file;
}

}  // namespace o4d
