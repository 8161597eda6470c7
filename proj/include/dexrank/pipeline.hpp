#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dexrank/catalog.hpp"
#include "dexrank/core.hpp"
#include "dexrank/dba.hpp"
#include "dexrank/dex.hpp"
#include "dexrank/diffusion.hpp"
#include "dexrank/kreciprocal.hpp"
#include "dexrank/metrics.hpp"

namespace dexrank {

struct FuseStage {};
struct TrackletStage {};
struct AqeStage {
  std::size_t k = 20;
};
struct AlphaQeStage {
  std::size_t k = 20;
  double alpha = 2.0;
};

using StageParams = std::variant<FuseStage, TrackletStage, DexParams, AqeStage, AlphaQeStage,
                                 DbaParams, KRParams, DiffusionParams>;

struct Stage {
  StageParams params;

  std::string_view name() const;
  bool is_expansion() const;  // fuse, dex, aqe, alpha_qe, dba
  bool is_reranker() const;   // kreciprocal, diffusion
};

// Parameter defaults for a stage name ("fuse", "tracklet_rerank", "dex",
// "aqe", "alpha_qe", "dba", "kreciprocal", "diffusion").
Stage make_stage(std::string_view name);

// fuse -> dex (k 20, alpha 2) -> dba (k 10) -> kreciprocal (60 / 30 / 0.5).
std::vector<Stage> default_stages();

// Throws kStageOrderError unless: fuse (if any) comes first; every
// expansion precedes every ranking stage; at most one of kreciprocal and
// diffusion; tracklet_rerank (if any) is last; no stage repeats.
void validate_stages(const std::vector<Stage>& stages);

struct PipelineInputs {
  std::vector<std::filesystem::path> query;    // one embedding header per ensemble member
  std::vector<std::filesystem::path> gallery;
  std::optional<std::filesystem::path> query_meta;
  std::optional<std::filesystem::path> gallery_meta;
};

struct PipelineConfig {
  std::vector<Stage> stages = default_stages();
  PipelineInputs inputs;
  std::optional<std::filesystem::path> output_dir;
  EvalOptions eval;
  std::size_t submission_depth = 100;
  std::uint64_t seed = 0;
  // Filled when loading a manifest: input file -> sha256 it must still have.
  std::map<std::filesystem::path, std::string> expected_hashes;
};

// Relative input paths resolve against `base_dir`. Accepts either a config
// document or a run manifest (whose "config" member is used).
PipelineConfig config_from_json(const nlohmann::ordered_json& doc,
                                const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);
// Fully resolved form, every parameter spelled out. The output directory is
// left out so the document only describes what is computed.
nlohmann::ordered_json config_to_json(const PipelineConfig& cfg);

/// In-memory data a stage chain runs on.
struct PipelineData {
  EnsembleInput query;
  EnsembleInput gallery;
  std::optional<CatalogMeta> query_meta;
  std::optional<CatalogMeta> gallery_meta;
};

struct StageOutput {
  EmbeddingMatrix query;    // after expansion stages
  EmbeddingMatrix gallery;
  RankList ranks;           // full gallery permutation per query
};

StageOutput run_stages(const std::vector<Stage>& stages, const PipelineData& data);

struct PipelineResult {
  RankList ranks;
  std::optional<EvalReport> report;
  std::string submission;
  std::string manifest;
};

// Loads inputs (verifying recorded hashes when the config came from a
// manifest), runs the chain and, when output_dir is set, writes
// submission.txt, manifest.json and (with identity labels) report.json and
// report.txt there.
PipelineResult run_pipeline(const PipelineConfig& cfg);

}  // namespace dexrank
