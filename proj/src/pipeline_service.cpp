#include "o4d/pipeline_service.hpp"

#include <chrono>
#include <memory>

#include "o4d/binary_io.hpp"
#include "o4d/errors.hpp"
#include "o4d/parallel.hpp"
#include "o4d/scene_model.hpp"

namespace o4d {

using nlohmann::json;

ValidationConfig PipelineConfig::validation_config(Resolution res) const {
  ValidationConfig v = ValidationConfig::defaults_for(res);
  v.connectivity = connectivity;
  if (min_component_area_px) v.min_component_area_px = *min_component_area_px;
  return v;
}

json PipelineConfig::to_json() const {
  json j;
  j["resolution"] = resolution ? json::array({resolution->height, resolution->width}) : json();
  j["splat"] = {{"radius_px", splat.splat_radius_px}, {"depth_epsilon", splat.depth_epsilon}};
  j["validation"] = {{"enabled", validation_enabled},
                     {"connectivity", to_string(connectivity)},
                     {"min_component_area_px",
                      min_component_area_px ? json(*min_component_area_px) : json()}};
  j["fusion"] = {{"strategy", to_string(strategy)}, {"equalize", equalize}};
  j["tau"] = tau;
  json lost = json::array();
  for (const auto& c : lost_cells) lost.push_back({{"track", c.track_id}, {"t", c.t}, {"v", c.v}});
  j["tracks"] = {{"source", track_source == TrackSource::oracle ? "oracle" : "file"},
                 {"path", tracks_path.string()},
                 {"granularity", granularity},
                 {"lost_cells", lost}};
  json flips = json::array();
  for (const auto& f : stub_flips) {
    flips.push_back({{"t", f.t}, {"v", f.v}, {"parts", {f.part_a, f.part_b}}});
  }
  j["embedding"] = {{"mode", embedding_source == EmbeddingSource::stub ? "stub" : "file"},
                    {"path", embeddings_path.string()},
                    {"dim", dim},
                    {"stub_flips", flips}};
  j["text"] = {{"mode", text_source == TextSource::stub ? "stub" : "file"},
               {"path", vocabulary_path.string()}};
  return j;
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  try {
    if (j.contains("resolution") && !j["resolution"].is_null()) {
      c.resolution = Resolution{j["resolution"].at(0).get<int>(), j["resolution"].at(1).get<int>()};
    }
    if (j.contains("splat")) {
      const auto& s = j["splat"];
      c.splat.splat_radius_px = s.value("radius_px", c.splat.splat_radius_px);
      c.splat.depth_epsilon = s.value("depth_epsilon", c.splat.depth_epsilon);
    }
    if (j.contains("validation")) {
      const auto& v = j["validation"];
      c.validation_enabled = v.value("enabled", c.validation_enabled);
      c.connectivity = parse_connectivity(v.value("connectivity", std::string("eight")));
      if (v.contains("min_component_area_px") && !v["min_component_area_px"].is_null()) {
        c.min_component_area_px = v["min_component_area_px"].get<int>();
      }
    }
    if (j.contains("fusion")) {
      c.strategy = parse_fusion_strategy(j["fusion"].value("strategy", std::string("attention")));
      c.equalize = j["fusion"].value("equalize", true);
    }
    c.tau = j.value("tau", c.tau);
    if (j.contains("tracks")) {
      const auto& t = j["tracks"];
      const auto source = t.value("source", std::string("oracle"));
      if (source == "oracle") {
        c.track_source = TrackSource::oracle;
      } else if (source == "file") {
        c.track_source = TrackSource::file;
      } else {
        throw ValidationError("unknown tracks.source '" + source + "'");
      }
      c.tracks_path = t.value("path", std::string());
      c.granularity = t.value("granularity", 1);
      if (t.contains("lost_cells")) {
        for (const auto& l : t["lost_cells"]) {
          c.lost_cells.push_back({l.at("track").get<int>(), l.at("t").get<int>(), l.at("v").get<int>()});
        }
      }
    }
    if (j.contains("embedding")) {
      const auto& e = j["embedding"];
      const auto mode = e.value("mode", std::string("stub"));
      if (mode == "stub") {
        c.embedding_source = EmbeddingSource::stub;
      } else if (mode == "file") {
        c.embedding_source = EmbeddingSource::file;
      } else {
        throw ValidationError("unknown embedding.mode '" + mode + "'");
      }
      c.embeddings_path = e.value("path", std::string());
      c.dim = e.value("dim", c.dim);
      if (e.contains("stub_flips")) {
        for (const auto& f : e["stub_flips"]) {
          c.stub_flips.push_back({f.at("t").get<int>(), f.at("v").get<int>(),
                                  f.at("parts").at(0).get<int>(), f.at("parts").at(1).get<int>()});
        }
      }
    }
    if (j.contains("text")) {
      const auto mode = j["text"].value("mode", std::string("stub"));
      if (mode == "stub") {
        c.text_source = TextSource::stub;
      } else if (mode == "file") {
        c.text_source = TextSource::file;
      } else {
        throw ValidationError("unknown text.mode '" + mode + "'");
      }
      c.vocabulary_path = j["text"].value("path", std::string());
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed pipeline config: ") + e.what());
  }
  c.splat.validate();
  if (c.granularity < 1) throw ValidationError("tracks.granularity must be >= 1");
  if (c.dim <= 0) throw ValidationError("embedding.dim must be positive");
  return c;
}

void PipelineConfig::resolve_paths(const std::filesystem::path& base) {
  for (auto* p : {&tracks_path, &embeddings_path, &vocabulary_path}) {
    if (!p->empty() && p->is_relative()) *p = std::filesystem::weakly_canonical(base / *p);
  }
}

PipelineConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file_bytes(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  auto config = PipelineConfig::from_json(j);
  config.resolve_paths(path.has_parent_path() ? path.parent_path() : ".");
  return config;
}

PipelineConfig FusedAsset::config() const { return PipelineConfig::from_json(json::parse(config_json)); }

double FusedAsset::build_milliseconds() const {
  double total = 0.0;
  for (const auto& t : timings) total += t.milliseconds;
  return total;
}

namespace {

constexpr char kAssetMagic[8] = {'O', '4', 'D', 'F', 'U', 'S', 'E', 'D'};
constexpr std::uint32_t kAssetVersion = 1;

std::string serialize_hashed_section(const FusedAsset& a) {
  ByteWriter out;
  out.put_string(a.config_json);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(a.part_names.size()));
  for (const auto& n : a.part_names) out.put_string(n);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(a.num_frames));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(a.num_views));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(a.dim));
  if (a.frames.size() != static_cast<std::size_t>(a.num_frames) || a.points.size() != a.frames.size()) {
    throw ValidationError("fused asset frame count mismatch");
  }
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    const auto& f = a.frames[t];
    const auto& pts = a.points[t];
    if (pts.positions.size() != f.point_count || pts.colors.size() != f.point_count) {
      throw ValidationError("fused asset point data does not match P_t");
    }
    if (f.embeddings.rows() != f.masks.size() ||
        (f.embeddings.rows() > 0 && f.embeddings.cols() != static_cast<std::size_t>(a.dim))) {
      throw ValidationError("fused asset embeddings do not match L_t x D");
    }
    out.put<std::uint32_t>(static_cast<std::uint32_t>(f.frame));
    out.put<std::uint32_t>(f.point_count);
    for (const auto& p : pts.positions) out.put_array(std::span<const float>(p));
    for (const auto& c : pts.colors) out.put_array(std::span<const float>(c));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(f.masks.size()));
    for (const auto& m : f.masks) {
      out.put<std::uint32_t>(static_cast<std::uint32_t>(m.track_id));
      out.put<std::uint32_t>(static_cast<std::uint32_t>(m.view));
      out.put_varint(m.point_indices.size());
      std::uint32_t prev = 0;
      for (std::size_t i = 0; i < m.point_indices.size(); ++i) {
        const auto idx = m.point_indices[i];
        if (i > 0 && idx <= prev) throw ValidationError("mask indices must be strictly increasing");
        out.put_varint(i == 0 ? idx : idx - prev);
        prev = idx;
      }
    }
    out.put_array(std::span<const float>(f.embeddings.data()));
  }
  return out.take();
}

json timings_to_json(const std::vector<StageTiming>& timings) {
  json j = json::array();
  for (const auto& t : timings) j.push_back({{"stage", t.stage}, {"ms", t.milliseconds}});
  return j;
}

}  // namespace

std::uint64_t compute_content_hash(const FusedAsset& asset) {
  return fnv1a64(serialize_hashed_section(asset));
}

std::string serialize_fused_asset(const FusedAsset& asset) {
  const std::string hashed = serialize_hashed_section(asset);
  ByteWriter out;
  out.put_bytes(std::string_view(kAssetMagic, 8));
  out.put<std::uint32_t>(kAssetVersion);
  out.put_bytes(hashed);
  out.put_string(timings_to_json(asset.timings).dump());
  out.put<std::uint64_t>(fnv1a64(hashed));
  return out.take();
}

FusedAsset parse_fused_asset(std::string_view bytes) {
  ByteReader in(bytes);
  if (in.get_bytes(8) != std::string_view(kAssetMagic, 8)) {
    throw FormatError("not a fused asset (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kAssetVersion) {
    throw FormatError("unsupported fused asset version " + std::to_string(version));
  }
  const std::size_t hashed_begin = in.position();

  FusedAsset a;
  a.config_json = in.get_string();
  const auto n_names = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_names; ++i) a.part_names.push_back(in.get_string());
  a.num_frames = static_cast<int>(in.get<std::uint32_t>());
  a.num_views = static_cast<int>(in.get<std::uint32_t>());
  a.dim = static_cast<int>(in.get<std::uint32_t>());
  for (int t = 0; t < a.num_frames; ++t) {
    FrameProposalSet f;
    FramePoints pts;
    f.frame = static_cast<int>(in.get<std::uint32_t>());
    f.point_count = in.get<std::uint32_t>();
    if (static_cast<std::size_t>(f.point_count) * 24 > in.remaining()) {
      throw FormatError("fused asset truncated in frame " + std::to_string(t));
    }
    pts.positions.resize(f.point_count);
    pts.colors.resize(f.point_count);
    for (auto& p : pts.positions) in.get_array(std::span<float>(p));
    for (auto& c : pts.colors) in.get_array(std::span<float>(c));
    const auto n_masks = in.get<std::uint32_t>();
    for (std::uint32_t l = 0; l < n_masks; ++l) {
      Mask3D m;
      m.frame = f.frame;
      m.track_id = static_cast<int>(in.get<std::uint32_t>());
      m.view = static_cast<int>(in.get<std::uint32_t>());
      const auto count = in.get_varint();
      if (count > f.point_count) throw FormatError("mask larger than its frame");
      m.point_indices.resize(count);
      std::uint64_t prev = 0;
      for (std::uint64_t i = 0; i < count; ++i) {
        const auto d = in.get_varint();
        const std::uint64_t idx = i == 0 ? d : prev + d;
        if ((i > 0 && d == 0) || idx >= f.point_count) {
          throw FormatError("invalid mask index in frame " + std::to_string(t));
        }
        m.point_indices[i] = static_cast<std::uint32_t>(idx);
        prev = idx;
      }
      f.masks.push_back(std::move(m));
    }
    f.embeddings = EmbeddingMatrix(n_masks, static_cast<std::size_t>(a.dim));
    in.get_array(std::span<float>(f.embeddings.data()));
    a.frames.push_back(std::move(f));
    a.points.push_back(std::move(pts));
  }
  const std::size_t hashed_end = in.position();
  try {
    for (const auto& t : json::parse(in.get_string())) {
      a.timings.push_back({t.at("stage").get<std::string>(), t.at("ms").get<double>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("fused asset timing section: ") + e.what());
  }
  a.content_hash = in.get<std::uint64_t>();
  if (!in.at_end()) throw FormatError("trailing bytes after fused asset");
  if (fnv1a64(bytes.substr(hashed_begin, hashed_end - hashed_begin)) != a.content_hash) {
    throw FormatError("fused asset content hash mismatch");
  }
  return a;
}

void save_fused_asset(const FusedAsset& asset, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_fused_asset(asset));
}

FusedAsset load_fused_asset(const std::filesystem::path& path) {
  return parse_fused_asset(read_file_bytes(path));
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Runs fn, timing it and rethrowing any library error as a StageError.
template <typename Fn>
auto run_stage(const char* name, std::vector<StageTiming>& timings, Fn&& fn) {
  const auto start = Clock::now();
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      timings.push_back({name, ms_since(start)});
    } else {
      auto result = fn();
      timings.push_back({name, ms_since(start)});
      return result;
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

FusedAsset build_asset(const std::filesystem::path& manifest, const PipelineConfig& config,
                       const std::optional<std::filesystem::path>& out) {
  std::vector<StageTiming> timings;

  const SequenceAsset scene = run_stage("render", timings, [&] {
    SequenceAsset s = load_sequence(manifest, config.splat);
    if (config.resolution && !(*config.resolution == s.resolution())) {
      throw ValidationError("config resolution does not match the cameras");
    }
    return s;
  });

  TrackSet tracks = run_stage("tracks", timings, [&] {
    if (config.track_source == TrackSource::file) return ingest_tracks(config.tracks_path, scene);
    return oracle_tracks(scene, OracleOptions{config.granularity, config.lost_cells});
  });

  if (config.validation_enabled) {
    tracks = run_stage("validation", timings, [&] {
      return validate_and_augment(tracks, scene, config.validation_config(scene.resolution()));
    });
  }

  std::unique_ptr<EmbeddingProvider> provider;
  const auto banks = run_stage("embedding", timings, [&] {
    if (config.embedding_source == EmbeddingSource::file) {
      provider = std::make_unique<FileEmbeddingProvider>(config.embeddings_path);
    } else {
      provider = std::make_unique<StubEmbeddingProvider>(config.dim, config.stub_flips);
    }
    return build_memory_banks(tracks, scene, *provider);
  });

  const auto fused = run_stage("fusion", timings,
                               [&] { return fuse_memory_banks(banks, config.strategy); });

  FusedAsset asset;
  run_stage("assembly", timings, [&] {
    asset.config_json = config.to_json().dump();
    asset.part_names = scene.part_names();
    asset.num_frames = scene.num_frames();
    asset.num_views = scene.num_views();
    asset.dim = provider->dim();
    asset.frames.resize(static_cast<std::size_t>(scene.num_frames()));
    parallel_for(asset.frames.size(), [&](std::size_t t) {
      asset.frames[t] = assemble_frame(static_cast<int>(t), tracks, fused, scene);
    });
    for (const auto& f : scene.frames()) asset.points.push_back({f.points, f.colors});
    asset.content_hash = compute_content_hash(asset);
  });

  asset.timings = timings;
  if (out) {
    run_stage("write", asset.timings, [&] { save_fused_asset(asset, *out); });
  }
  return asset;
}

LabelFile QueryResult::label_file() const {
  LabelFile f;
  f.classes = classes;
  for (const auto& lf : frames) f.frames.push_back(lf.labels);
  return f;
}

QueryEngine::QueryEngine(const FusedAsset& asset) : asset_(asset) {
  const PipelineConfig config = asset.config();
  equalize_ = config.equalize;
  if (config.text_source == TextSource::file) {
    encoder_ = std::make_unique<VocabularyTextEncoder>(config.vocabulary_path);
    if (encoder_->dim() != asset.dim) {
      throw DimensionError("vocabulary D = " + std::to_string(encoder_->dim()) +
                           " does not match asset D = " + std::to_string(asset.dim));
    }
  } else {
    encoder_ = std::make_unique<StubTextEncoder>(asset.dim, asset.part_names);
  }
}

QueryResult QueryEngine::run(std::span<const std::string> prompts, double tau) const {
  const auto start = Clock::now();
  const PromptSet prompt_set = embed_prompts(*encoder_, prompts);
  QueryResult result;
  result.classes = prompt_set.classes;
  result.classes.emplace_back(kNoLabelName);
  result.frames.resize(asset_.frames.size());
  parallel_for(asset_.frames.size(), [&](std::size_t t) {
    const auto& proposals = asset_.frames[t];
    LogitsMatrix logits = compute_logits(proposals, prompt_set);
    if (equalize_) logits = equalize_logits(std::move(logits));
    result.frames[t] = segment_frame(proposals, logits, tau);
  });
  result.query_ms = ms_since(start);
  return result;
}

QueryResult query(const FusedAsset& asset, std::span<const std::string> prompts, double tau) {
  return QueryEngine(asset).run(prompts, tau);
}

}  // namespace o4d
