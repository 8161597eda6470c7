#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "dexrank/io.hpp"
#include "dexrank/pipeline.hpp"
#include "dexrank/synth.hpp"
#include "support/oracles.hpp"
#include "support/util.hpp"

using namespace dexrank;
using testutil::code_of;
using testutil::TempDir;
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::vector<Stage> chain(std::initializer_list<const char*> names) {
  std::vector<Stage> out;
  for (const char* n : names) out.push_back(make_stage(n));
  return out;
}

SynthDataset small_set(std::size_t models) {
  SynthSpec s;
  s.n_ids = 15;
  s.images_min = 2;
  s.images_max = 4;
  s.d = 16;
  s.n_models = models;
  s.scale_jitter = models > 1 ? 0.4 : 0.0;
  s.seed = 3;
  return generate(s);
}

// Writes the data set under `dir` and returns a config document that names it.
ordered_json write_inputs(const SynthDataset& ds, const fs::path& dir) {
  ordered_json cfg;
  for (std::size_t m = 0; m < ds.query.size(); ++m) {
    const std::string q = "query_m" + std::to_string(m) + ".json";
    const std::string g = "gallery_m" + std::to_string(m) + ".json";
    save_embeddings(ds.query[m], dir / q);
    save_embeddings(ds.gallery[m], dir / g);
    cfg["inputs"]["query"].push_back(q);
    cfg["inputs"]["gallery"].push_back(g);
  }
  save_metadata(ds.query_meta, dir / "query_meta.csv");
  save_metadata(ds.gallery_meta, dir / "gallery_meta.csv");
  cfg["inputs"]["query_meta"] = "query_meta.csv";
  cfg["inputs"]["gallery_meta"] = "gallery_meta.csv";
  return cfg;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("stage order rules") {
    CHECK_NOTHROW(validate_stages(default_stages()));
    CHECK_NOTHROW(validate_stages({}));
    CHECK_NOTHROW(validate_stages(chain({"fuse", "dex", "diffusion", "tracklet_rerank"})));
    CHECK_NOTHROW(validate_stages(chain({"aqe", "dba"})));
    for (auto bad : {chain({"dex", "fuse"}), chain({"kreciprocal", "dba"}),
                     chain({"kreciprocal", "diffusion"}), chain({"tracklet_rerank", "dex"}),
                     chain({"tracklet_rerank", "kreciprocal"}), chain({"dex", "dex"})}) {
      CHECK(code_of([&] { validate_stages(bad); }) == ErrorCode::kStageOrderError);
    }
    CHECK(code_of([] { make_stage("magic"); }) == ErrorCode::kInvalidConfig);
  }

  TEST_CASE("ensembles need a leading fuse") {
    const SynthDataset ds = small_set(2);
    const PipelineData data{ds.query, ds.gallery, ds.query_meta, ds.gallery_meta};
    CHECK(code_of([&] { run_stages(chain({"dex"}), data); }) == ErrorCode::kStageOrderError);
    CHECK(run_stages(chain({"fuse"}), data).query.dim() == 16);
  }

  TEST_CASE("an empty chain is the plain cosine ranking") {
    const SynthDataset ds = small_set(1);
    const PipelineData data{ds.query, ds.gallery, ds.query_meta, ds.gallery_meta};
    const RankList plain = rank_topk(cosine_similarity(ds.query[0], ds.gallery[0]));
    const StageOutput out = run_stages({}, data);
    for (std::size_t i = 0; i < plain.size(); ++i) CHECK(out.ranks[i].indices == plain[i].indices);
    const StageOutput fused = run_stages(chain({"fuse"}), data);
    for (std::size_t i = 0; i < plain.size(); ++i) {
      CHECK(fused.ranks[i].indices == plain[i].indices);
    }
  }

  TEST_CASE("tracklet_rerank pulls whole tracklets together") {
    const SynthDataset ds = small_set(1);
    const PipelineData data{ds.query, ds.gallery, ds.query_meta, ds.gallery_meta};
    for (auto stages : {chain({"tracklet_rerank"}), chain({"kreciprocal", "tracklet_rerank"}),
                        chain({"diffusion", "tracklet_rerank"})}) {
      const StageOutput out = run_stages(stages, data);
      for (const Ranking& r : out.ranks) {
        std::size_t changes = 0;
        for (std::size_t p = 1; p < r.size(); ++p) {
          changes += ds.gallery_tracklets.group_of(r.indices[p]) !=
                     ds.gallery_tracklets.group_of(r.indices[p - 1]);
        }
        CHECK(changes + 1 == ds.gallery_tracklets.size());
      }
    }
    const PipelineData bare{ds.query, ds.gallery, std::nullopt, std::nullopt};
    CHECK(code_of([&] { run_stages(chain({"dex"}), bare); }) == ErrorCode::kInvalidConfig);
  }

  TEST_CASE("config parsing") {
    const ordered_json doc = ordered_json::parse(R"({
      "stages": ["fuse", {"stage": "dex", "k": 7, "alpha": 1.5},
                 {"stage": "diffusion", "mode": "mutual", "k": 12}],
      "inputs": {"query": "q.json", "gallery": ["g.json"], "gallery_meta": "/abs/g.csv"},
      "outputs": {"dir": "out"},
      "eval": {"cmc": [1, 3], "map_at_denominator": "capped"},
      "submission_depth": 50
    })");
    const PipelineConfig cfg = config_from_json(doc, "/base");
    REQUIRE(cfg.stages.size() == 3);
    CHECK(std::get<DexParams>(cfg.stages[1].params).k == 7);
    CHECK(std::get<DexParams>(cfg.stages[1].params).alpha == 1.5);
    CHECK(std::get<DiffusionParams>(cfg.stages[2].params).mode == EdgeMode::kMutual);
    CHECK(cfg.inputs.query == std::vector<fs::path>{"/base/q.json"});
    CHECK(cfg.inputs.gallery_meta == fs::path("/abs/g.csv"));
    CHECK(cfg.output_dir == fs::path("/base/out"));
    CHECK(cfg.eval.cmc_ranks == std::vector<std::size_t>{1, 3});
    CHECK(cfg.eval.denominator == MapAtKDenominator::kCappedAtK);
    CHECK(cfg.submission_depth == 50);

    // Resolved form parses back to the same thing.
    const PipelineConfig again = config_from_json(config_to_json(cfg), "/elsewhere");
    CHECK(config_to_json(again) == config_to_json(cfg));
  }

  TEST_CASE("config errors") {
    auto err = [](const char* text) {
      return code_of([&] { config_from_json(ordered_json::parse(text), "/"); });
    };
    CHECK(err(R"({"stagez": []})") == ErrorCode::kInvalidConfig);
    CHECK(err(R"({"stages": [{"stage": "dex", "kk": 3}]})") == ErrorCode::kInvalidConfig);
    CHECK(err(R"({"stages": [{"stage": "dex", "k": "three"}]})") == ErrorCode::kInvalidConfig);
    CHECK(err(R"({"stages": ["kreciprocal", "dex"]})") == ErrorCode::kStageOrderError);
    CHECK(err(R"({"eval": {"map_at_denominator": "half"}})") == ErrorCode::kInvalidConfig);
    CHECK(err(R"({"stages": [{"stage": "dba", "weighting": "heavy"}]})") ==
          ErrorCode::kInvalidConfig);
    CHECK(err(R"([1, 2])") == ErrorCode::kInvalidConfig);
  }

  TEST_CASE("run_pipeline writes outputs and a manifest that reproduces them") {
    TempDir dir("pipe");
    const SynthDataset ds = small_set(2);
    ordered_json doc = write_inputs(ds, dir.path());
    doc["outputs"]["dir"] = "run1";
    const PipelineConfig cfg = config_from_json(doc, dir.path());
    const PipelineResult first = run_pipeline(cfg);
    REQUIRE(first.report.has_value());
    CHECK(first.report->map_full > 0.0);
    CHECK(read_file(dir / "run1/submission.txt") == first.submission);
    CHECK(read_file(dir / "run1/manifest.json") == first.manifest);
    CHECK(fs::exists(dir / "run1/report.json"));
    CHECK(fs::exists(dir / "run1/report.txt"));

    // Submission: one line per query, 100 ids or the whole gallery.
    std::size_t lines = 0;
    for (char c : first.submission) lines += c == '\n';
    CHECK(lines == ds.query[0].rows());

    const auto manifest = ordered_json::parse(first.manifest);
    CHECK(manifest.at("outputs").at("submission.txt") == sha256_hex(first.submission));
    CHECK(manifest.at("inputs").size() == 2 * 2 * 2 + 2);

    // Re-run from the manifest alone, into a different directory.
    PipelineConfig replay = load_config(dir / "run1/manifest.json");
    CHECK(replay.expected_hashes.size() == manifest.at("inputs").size());
    replay.output_dir = dir / "run2";
    const PipelineResult second = run_pipeline(replay);
    CHECK(second.submission == first.submission);
    CHECK(second.manifest == first.manifest);
    CHECK(read_file(dir / "run2/submission.txt") == read_file(dir / "run1/submission.txt"));
  }

  TEST_CASE("a manifest refuses inputs that changed") {
    TempDir dir("pipe_hash");
    const SynthDataset ds = small_set(1);
    ordered_json doc = write_inputs(ds, dir.path());
    doc["stages"] = {"dex"};
    doc["outputs"]["dir"] = "run";
    run_pipeline(config_from_json(doc, dir.path()));
    save_metadata(CatalogMeta(ds.gallery_meta), dir / "gallery_meta.csv");  // unchanged bytes
    CHECK_NOTHROW(run_pipeline(load_config(dir / "run/manifest.json")));
    std::string csv = read_file(dir / "gallery_meta.csv");
    csv += "\n";
    write_file_atomic(dir / "gallery_meta.csv", csv);
    CHECK(code_of([&] { run_pipeline(load_config(dir / "run/manifest.json")); }) ==
          ErrorCode::kInvalidConfig);
  }

  TEST_CASE("missing inputs are IO errors") {
    ordered_json doc;
    doc["inputs"]["query"] = "nowhere/q.json";
    doc["inputs"]["gallery"] = "nowhere/g.json";
    const PipelineConfig cfg = config_from_json(doc, fs::temp_directory_path());
    const auto err = code_of([&] { run_pipeline(cfg); });
    CHECK(err == ErrorCode::kIoError);
  }
}
