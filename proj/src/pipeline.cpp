#include "dexrank/pipeline.hpp"

#include <algorithm>
#include <set>

#include "dexrank/error.hpp"
#include "dexrank/io.hpp"

namespace dexrank {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void bad_config(const std::string& why) {
  throw Error(ErrorCode::kInvalidConfig, why);
}

// Reads optional keys out of a JSON object and rejects any key not consumed.
class ObjectReader {
 public:
  ObjectReader(const ordered_json& obj, std::string context)
      : obj_(obj), context_(std::move(context)) {
    if (!obj_.is_object()) bad_config(context_ + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      bad_config(context_ + "." + key + " has the wrong type");
    }
  }

  const ordered_json* find(const char* key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) bad_config("unknown key '" + key + "' in " + context_);
    }
  }

 private:
  const ordered_json& obj_;
  std::string context_;
  std::set<std::string> seen_;
};

Stage stage_from_json(const ordered_json& j) {
  if (j.is_string()) return make_stage(j.get<std::string>());
  if (!j.is_object() || !j.contains("stage") || !j["stage"].is_string()) {
    bad_config("stage entries must be a name or an object with a \"stage\" member");
  }
  const std::string name = j["stage"].get<std::string>();
  Stage s = make_stage(name);
  ObjectReader r(j, "stage '" + name + "'");
  std::string ignored;
  r.read("stage", ignored);
  std::visit(Overloaded{
                 [](FuseStage&) {},
                 [](TrackletStage&) {},
                 [&](DexParams& p) {
                   r.read("k", p.k);
                   r.read("alpha", p.alpha);
                   r.read("renormalize", p.renormalize);
                 },
                 [&](AqeStage& p) { r.read("k", p.k); },
                 [&](AlphaQeStage& p) {
                   r.read("k", p.k);
                   r.read("alpha", p.alpha);
                 },
                 [&](DbaParams& p) {
                   r.read("k", p.k);
                   r.read("include_self", p.include_self);
                   std::string w = p.weighting == DbaWeighting::kUniform ? "uniform" : "similarity";
                   r.read("weighting", w);
                   if (w == "uniform") {
                     p.weighting = DbaWeighting::kUniform;
                   } else if (w == "similarity") {
                     p.weighting = DbaWeighting::kSimilarity;
                   } else {
                     bad_config("dba weighting must be \"uniform\" or \"similarity\"");
                   }
                 },
                 [&](KRParams& p) {
                   r.read("k1", p.k1);
                   r.read("k2", p.k2);
                   r.read("lambda", p.lambda);
                   r.read("sigma_weighting", p.sigma_weighting);
                 },
                 [&](DiffusionParams& p) {
                   r.read("k", p.k);
                   r.read("k_q", p.k_q);
                   r.read("alpha", p.alpha);
                   r.read("t_max", p.t_max);
                   r.read("gamma", p.gamma);
                   r.read("tol", p.tol);
                   std::string mode = p.mode == EdgeMode::kUnion ? "union" : "mutual";
                   r.read("mode", mode);
                   if (mode == "union") {
                     p.mode = EdgeMode::kUnion;
                   } else if (mode == "mutual") {
                     p.mode = EdgeMode::kMutual;
                   } else {
                     bad_config("diffusion mode must be \"union\" or \"mutual\"");
                   }
                 },
             },
             s.params);
  r.finish();
  return s;
}

ordered_json stage_to_json(const Stage& s) {
  ordered_json j;
  j["stage"] = s.name();
  std::visit(Overloaded{
                 [](const FuseStage&) {},
                 [](const TrackletStage&) {},
                 [&](const DexParams& p) {
                   j["k"] = p.k;
                   j["alpha"] = p.alpha;
                   j["renormalize"] = p.renormalize;
                 },
                 [&](const AqeStage& p) { j["k"] = p.k; },
                 [&](const AlphaQeStage& p) {
                   j["k"] = p.k;
                   j["alpha"] = p.alpha;
                 },
                 [&](const DbaParams& p) {
                   j["k"] = p.k;
                   j["include_self"] = p.include_self;
                   j["weighting"] =
                       p.weighting == DbaWeighting::kUniform ? "uniform" : "similarity";
                 },
                 [&](const KRParams& p) {
                   j["k1"] = p.k1;
                   j["k2"] = p.k2;
                   j["lambda"] = p.lambda;
                   j["sigma_weighting"] = p.sigma_weighting;
                 },
                 [&](const DiffusionParams& p) {
                   j["k"] = p.k;
                   j["k_q"] = p.k_q;
                   j["alpha"] = p.alpha;
                   j["t_max"] = p.t_max;
                   j["gamma"] = p.gamma;
                   j["tol"] = p.tol;
                   j["mode"] = p.mode == EdgeMode::kUnion ? "union" : "mutual";
                 },
             },
             s.params);
  return j;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

std::vector<fs::path> path_list(const ordered_json* j, const fs::path& base, const char* what) {
  std::vector<fs::path> out;
  if (j == nullptr) return out;
  if (j->is_string()) {
    out.push_back(resolve(base, j->get<std::string>()));
    return out;
  }
  if (!j->is_array()) bad_config(std::string(what) + " must be a path or a list of paths");
  for (const auto& e : *j) {
    if (!e.is_string()) bad_config(std::string(what) + " entries must be strings");
    out.push_back(resolve(base, e.get<std::string>()));
  }
  return out;
}

void check_hash(const PipelineConfig& cfg, const fs::path& path, const std::string& bytes) {
  const auto it = cfg.expected_hashes.find(path);
  if (it == cfg.expected_hashes.end()) return;
  if (sha256_hex(bytes) != it->second) {
    bad_config("input " + path.string() + " changed since the manifest was written");
  }
}

struct LoadedInput {
  PipelineData data;
  std::vector<std::pair<fs::path, std::string>> hashes;  // in load order
};

LoadedInput load_inputs(const PipelineConfig& cfg) {
  LoadedInput in;
  auto record = [&](const fs::path& p) {
    const std::string bytes = read_file(p);
    check_hash(cfg, p, bytes);
    in.hashes.emplace_back(p, sha256_hex(bytes));
  };
  auto load_members = [&](const std::vector<fs::path>& paths, EnsembleInput& out) {
    for (const auto& p : paths) {
      EmbeddingMatrix m = load_embeddings(p);
      record(p);
      const auto header = ordered_json::parse(read_file(p));
      record(p.parent_path() / header.at("payload").get<std::string>());
      // Zero rows are rejected here rather than silently kept.
      out.push_back(m.normalized() ? std::move(m) : l2_normalize_rows(m));
    }
  };
  if (cfg.inputs.query.empty() || cfg.inputs.gallery.empty()) {
    bad_config("inputs.query and inputs.gallery must name at least one embedding file");
  }
  load_members(cfg.inputs.query, in.data.query);
  load_members(cfg.inputs.gallery, in.data.gallery);
  if (cfg.inputs.query_meta) {
    record(*cfg.inputs.query_meta);
    in.data.query_meta = load_metadata(*cfg.inputs.query_meta);
  }
  if (cfg.inputs.gallery_meta) {
    record(*cfg.inputs.gallery_meta);
    in.data.gallery_meta = load_metadata(*cfg.inputs.gallery_meta);
  }
  return in;
}

}  // namespace

std::string_view Stage::name() const {
  return std::visit(Overloaded{
                        [](const FuseStage&) { return std::string_view("fuse"); },
                        [](const TrackletStage&) { return std::string_view("tracklet_rerank"); },
                        [](const DexParams&) { return std::string_view("dex"); },
                        [](const AqeStage&) { return std::string_view("aqe"); },
                        [](const AlphaQeStage&) { return std::string_view("alpha_qe"); },
                        [](const DbaParams&) { return std::string_view("dba"); },
                        [](const KRParams&) { return std::string_view("kreciprocal"); },
                        [](const DiffusionParams&) { return std::string_view("diffusion"); },
                    },
                    params);
}

bool Stage::is_reranker() const {
  return std::holds_alternative<KRParams>(params) ||
         std::holds_alternative<DiffusionParams>(params);
}

bool Stage::is_expansion() const {
  return !is_reranker() && !std::holds_alternative<TrackletStage>(params);
}

Stage make_stage(std::string_view name) {
  if (name == "fuse") return {FuseStage{}};
  if (name == "tracklet_rerank") return {TrackletStage{}};
  if (name == "dex") return {DexParams{}};
  if (name == "aqe") return {AqeStage{}};
  if (name == "alpha_qe") return {AlphaQeStage{}};
  if (name == "dba") return {DbaParams{}};
  if (name == "kreciprocal") return {KRParams{}};
  if (name == "diffusion") return {DiffusionParams{}};
  bad_config("unknown stage '" + std::string(name) + "'");
}

std::vector<Stage> default_stages() {
  return {make_stage("fuse"), make_stage("dex"), make_stage("dba"), make_stage("kreciprocal")};
}

void validate_stages(const std::vector<Stage>& stages) {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::kStageOrderError, why); };
  std::set<std::string_view> seen;
  bool ranking_started = false;
  std::size_t rerankers = 0;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const Stage& s = stages[i];
    if (!seen.insert(s.name()).second) fail("stage '" + std::string(s.name()) + "' repeats");
    if (std::holds_alternative<FuseStage>(s.params) && i != 0) {
      fail("fuse must be the first stage");
    }
    if (s.is_expansion() && ranking_started) {
      fail("expansion stage '" + std::string(s.name()) + "' after a ranking stage");
    }
    if (s.is_reranker() && ++rerankers > 1) {
      fail("at most one of kreciprocal and diffusion per run");
    }
    if (std::holds_alternative<TrackletStage>(s.params) && i + 1 != stages.size()) {
      fail("tracklet_rerank must be the last stage");
    }
    if (!s.is_expansion()) ranking_started = true;
  }
}

PipelineConfig config_from_json(const ordered_json& doc, const fs::path& base_dir) {
  if (doc.is_object() && doc.contains("manifest_version")) {
    PipelineConfig cfg = config_from_json(doc.at("config"), base_dir);
    if (const auto it = doc.find("inputs"); it != doc.end()) {
      for (const auto& e : *it) {
        cfg.expected_hashes[resolve(base_dir, e.at("path").get<std::string>())] =
            e.at("sha256").get<std::string>();
      }
    }
    return cfg;
  }
  PipelineConfig cfg;
  ObjectReader top(doc, "config");
  if (const auto* stages = top.find("stages")) {
    if (!stages->is_array()) bad_config("stages must be an array");
    cfg.stages.clear();
    for (const auto& s : *stages) cfg.stages.push_back(stage_from_json(s));
  }
  if (const auto* inputs = top.find("inputs")) {
    ObjectReader r(*inputs, "inputs");
    cfg.inputs.query = path_list(r.find("query"), base_dir, "inputs.query");
    cfg.inputs.gallery = path_list(r.find("gallery"), base_dir, "inputs.gallery");
    if (const auto* m = r.find("query_meta")) {
      if (!m->is_string()) bad_config("inputs.query_meta must be a path");
      cfg.inputs.query_meta = resolve(base_dir, m->get<std::string>());
    }
    if (const auto* m = r.find("gallery_meta")) {
      if (!m->is_string()) bad_config("inputs.gallery_meta must be a path");
      cfg.inputs.gallery_meta = resolve(base_dir, m->get<std::string>());
    }
    r.finish();
  }
  if (const auto* outputs = top.find("outputs")) {
    ObjectReader r(*outputs, "outputs");
    std::string dir;
    r.read("dir", dir);
    if (!dir.empty()) cfg.output_dir = resolve(base_dir, dir);
    r.finish();
  }
  if (const auto* eval = top.find("eval")) {
    ObjectReader r(*eval, "eval");
    r.read("cmc", cfg.eval.cmc_ranks);
    r.read("map_at", cfg.eval.map_at);
    r.read("same_camera_filter", cfg.eval.same_camera_filter);
    std::string denom = "all_relevant";
    r.read("map_at_denominator", denom);
    if (denom == "all_relevant") {
      cfg.eval.denominator = MapAtKDenominator::kAllRelevant;
    } else if (denom == "capped") {
      cfg.eval.denominator = MapAtKDenominator::kCappedAtK;
    } else {
      bad_config("eval.map_at_denominator must be \"all_relevant\" or \"capped\"");
    }
    r.finish();
  }
  top.read("submission_depth", cfg.submission_depth);
  top.read("seed", cfg.seed);
  top.finish();
  validate_stages(cfg.stages);
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    bad_config(path.string() + ": " + e.what());
  }
  return config_from_json(doc, fs::absolute(path).parent_path());
}

ordered_json config_to_json(const PipelineConfig& cfg) {
  ordered_json j;
  j["stages"] = ordered_json::array();
  for (const auto& s : cfg.stages) j["stages"].push_back(stage_to_json(s));
  auto paths = [](const std::vector<fs::path>& v) {
    ordered_json a = ordered_json::array();
    for (const auto& p : v) a.push_back(p.string());
    return a;
  };
  j["inputs"]["query"] = paths(cfg.inputs.query);
  j["inputs"]["gallery"] = paths(cfg.inputs.gallery);
  if (cfg.inputs.query_meta) j["inputs"]["query_meta"] = cfg.inputs.query_meta->string();
  if (cfg.inputs.gallery_meta) j["inputs"]["gallery_meta"] = cfg.inputs.gallery_meta->string();
  j["eval"]["cmc"] = cfg.eval.cmc_ranks;
  j["eval"]["map_at"] = cfg.eval.map_at;
  j["eval"]["map_at_denominator"] =
      cfg.eval.denominator == MapAtKDenominator::kAllRelevant ? "all_relevant" : "capped";
  j["eval"]["same_camera_filter"] = cfg.eval.same_camera_filter;
  j["submission_depth"] = cfg.submission_depth;
  j["seed"] = cfg.seed;
  return j;
}

StageOutput run_stages(const std::vector<Stage>& stages, const PipelineData& data) {
  validate_stages(stages);
  if (data.query.empty() || data.gallery.empty()) {
    bad_config("pipeline needs at least one query and one gallery member");
  }
  const bool fuses = !stages.empty() && std::holds_alternative<FuseStage>(stages.front().params);
  if (!fuses && (data.query.size() > 1 || data.gallery.size() > 1)) {
    throw Error(ErrorCode::kStageOrderError,
                "multi-member ensembles need a leading fuse stage");
  }
  EmbeddingMatrix q = fuses ? fuse_ensemble(data.query) : data.query.front();
  EmbeddingMatrix g = fuses ? fuse_ensemble(data.gallery) : data.gallery.front();
  if (data.query_meta) data.query_meta->check_matches(q);
  if (data.gallery_meta) data.gallery_meta->check_matches(g);

  auto tracklets = [&]() {
    if (!data.gallery_meta) {
      bad_config("tracklet-based stages need gallery metadata with tracklet ids");
    }
    return TrackletTable::from_catalog(*data.gallery_meta);
  };

  StageOutput out;
  std::optional<SimilarityMatrix> scores;
  bool ranked = false;
  for (const Stage& s : stages) {
    std::visit(Overloaded{
                   [](const FuseStage&) {},
                   [&](const DexParams& p) { q = dex_expand(q, g, tracklets(), p); },
                   [&](const AqeStage& p) { q = aqe_expand(q, g, p.k); },
                   [&](const AlphaQeStage& p) { q = alpha_qe_expand(q, g, p.k, p.alpha); },
                   [&](const DbaParams& p) { g = dba_augment(g, p); },
                   [&](const KRParams& p) {
                     KReciprocalResult r = kreciprocal(q, g, p);
                     out.ranks = rank_topk(r.scores);
                     scores = std::move(r.scores);
                     ranked = true;
                   },
                   [&](const DiffusionParams& p) {
                     DiffusionRanking r = diffusion_scores(q, g, p);
                     out.ranks = std::move(r.ranks);
                     scores = std::move(r.scores);
                     ranked = true;
                   },
                   [&](const TrackletStage&) {
                     out.ranks = scores ? pull_tracklets(*scores, tracklets())
                                        : tracklet_rerank(q, g, tracklets());
                     ranked = true;
                   },
               },
               s.params);
  }
  if (!ranked) out.ranks = rank_topk(cosine_similarity(q, g));
  out.query = std::move(q);
  out.gallery = std::move(g);
  return out;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  validate_stages(cfg.stages);
  LoadedInput in = load_inputs(cfg);
  StageOutput staged = run_stages(cfg.stages, in.data);

  PipelineResult result;
  result.ranks = std::move(staged.ranks);
  result.submission =
      submission_text(result.ranks, staged.gallery.row_ids(), cfg.submission_depth);

  std::string report_json;
  std::string report_text;
  const auto& qm = in.data.query_meta;
  const auto& gm = in.data.gallery_meta;
  if (qm && gm && qm->has_identities() && gm->has_identities()) {
    result.report = evaluate(result.ranks, *qm, *gm, cfg.eval);
    report_json = report_to_json(*result.report);
    report_text = report_to_text(*result.report);
  }

  ordered_json manifest;
  manifest["tool"] = "dexrank";
  manifest["manifest_version"] = 1;
  manifest["config"] = config_to_json(cfg);
  manifest["inputs"] = ordered_json::array();
  for (const auto& [path, hash] : in.hashes) {
    manifest["inputs"].push_back({{"path", path.string()}, {"sha256", hash}});
  }
  manifest["outputs"]["submission.txt"] = sha256_hex(result.submission);
  if (result.report) manifest["outputs"]["report.json"] = sha256_hex(report_json);
  result.manifest = manifest.dump(2) + "\n";

  if (cfg.output_dir) {
    std::error_code ec;
    fs::create_directories(*cfg.output_dir, ec);
    if (ec) {
      throw Error(ErrorCode::kIoError, "cannot create " + cfg.output_dir->string() + ": " +
                                           ec.message());
    }
    write_file_atomic(*cfg.output_dir / "submission.txt", result.submission);
    if (result.report) {
      write_file_atomic(*cfg.output_dir / "report.json", report_json);
      write_file_atomic(*cfg.output_dir / "report.txt", report_text);
    }
    write_file_atomic(*cfg.output_dir / "manifest.json", result.manifest);
  }
  return result;
}

}  // namespace dexrank
