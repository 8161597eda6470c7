// dexrank: batch re-ranking over precomputed embeddings.
//
//   dexrank generate --out-dir DIR [synthetic dataset flags]
//   dexrank rank     --query Q.json --gallery G.json --out submission.txt
//   dexrank rerank   --method kreciprocal --query .. --gallery .. --out-dir DIR
//   dexrank eval     --submission S.txt --query-meta Q.csv --gallery-meta G.csv
//   dexrank pipeline --config run.json [--out-dir DIR] [stage parameter flags]
//
// Exit codes: 0 success, 1 validation error, 2 IO error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dexrank/error.hpp"
#include "dexrank/io.hpp"
#include "dexrank/metrics.hpp"
#include "dexrank/pipeline.hpp"
#include "dexrank/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace dexrank;

namespace {

struct InputFlags {
  std::vector<std::string> query;
  std::vector<std::string> gallery;
  std::string query_meta;
  std::string gallery_meta;

  void add(CLI::App* app, bool required) {
    auto* q = app->add_option("--query", query, "query embedding header(s), one per ensemble member");
    auto* g = app->add_option("--gallery", gallery, "gallery embedding header(s)");
    if (required) {
      q->required();
      g->required();
    }
    app->add_option("--query-meta", query_meta, "query metadata CSV");
    app->add_option("--gallery-meta", gallery_meta, "gallery metadata CSV");
  }

  void apply(PipelineInputs& in) const {
    auto abs = [](const std::string& p) { return fs::absolute(p).lexically_normal(); };
    if (!query.empty()) {
      in.query.clear();
      for (const auto& p : query) in.query.push_back(abs(p));
    }
    if (!gallery.empty()) {
      in.gallery.clear();
      for (const auto& p : gallery) in.gallery.push_back(abs(p));
    }
    if (!query_meta.empty()) in.query_meta = abs(query_meta);
    if (!gallery_meta.empty()) in.gallery_meta = abs(gallery_meta);
  }
};

// Stage parameter overrides; each applies to every stage of its kind.
struct ParamFlags {
  std::optional<std::size_t> dex_k, aqe_k, alpha_qe_k, dba_k, kr_k1, kr_k2, diff_k, diff_kq,
      diff_tmax;
  std::optional<double> dex_alpha, alpha_qe_alpha, kr_lambda, diff_alpha, diff_gamma, diff_tol;
  std::optional<std::string> dba_weighting, diff_mode;
  bool dba_no_self = false;
  bool kr_hard = false;

  void add(CLI::App* app) {
    app->add_option("--dex-k", dex_k, "DEx neighbours");
    app->add_option("--dex-alpha", dex_alpha, "DEx weight exponent");
    app->add_option("--aqe-k", aqe_k, "AQE neighbours");
    app->add_option("--alpha-qe-k", alpha_qe_k, "alpha-QE neighbours");
    app->add_option("--alpha-qe-alpha", alpha_qe_alpha, "alpha-QE weight exponent");
    app->add_option("--dba-k", dba_k, "DBA neighbours");
    app->add_option("--dba-weighting", dba_weighting, "uniform | similarity")
        ->check(CLI::IsMember({"uniform", "similarity"}));
    app->add_flag("--dba-no-self", dba_no_self, "exclude the row itself from the DBA mean");
    app->add_option("--kr-k1", kr_k1, "k-reciprocal k1");
    app->add_option("--kr-k2", kr_k2, "k-reciprocal k2 (local expansion)");
    app->add_option("--kr-lambda", kr_lambda, "weight of the original distance");
    app->add_flag("--kr-hard", kr_hard, "hard (indicator) set encodings");
    app->add_option("--diff-k", diff_k, "diffusion graph neighbours");
    app->add_option("--diff-kq", diff_kq, "diffusion query seeds");
    app->add_option("--diff-alpha", diff_alpha, "diffusion propagation weight");
    app->add_option("--diff-tmax", diff_tmax, "diffusion iteration cap");
    app->add_option("--diff-gamma", diff_gamma, "monomial kernel exponent");
    app->add_option("--diff-tol", diff_tol, "diffusion residual tolerance");
    app->add_option("--diff-mode", diff_mode, "union | mutual")
        ->check(CLI::IsMember({"union", "mutual"}));
  }

  template <typename T>
  static void set(T& dst, const std::optional<T>& src) {
    if (src) dst = *src;
  }

  void apply(std::vector<Stage>& stages) const {
    for (auto& s : stages) {
      if (auto* p = std::get_if<DexParams>(&s.params)) {
        set(p->k, dex_k);
        set(p->alpha, dex_alpha);
      } else if (auto* p = std::get_if<AqeStage>(&s.params)) {
        set(p->k, aqe_k);
      } else if (auto* p = std::get_if<AlphaQeStage>(&s.params)) {
        set(p->k, alpha_qe_k);
        set(p->alpha, alpha_qe_alpha);
      } else if (auto* p = std::get_if<DbaParams>(&s.params)) {
        set(p->k, dba_k);
        if (dba_weighting) {
          p->weighting = *dba_weighting == "uniform" ? DbaWeighting::kUniform
                                                     : DbaWeighting::kSimilarity;
        }
        if (dba_no_self) p->include_self = false;
      } else if (auto* p = std::get_if<KRParams>(&s.params)) {
        set(p->k1, kr_k1);
        set(p->k2, kr_k2);
        set(p->lambda, kr_lambda);
        if (kr_hard) p->sigma_weighting = false;
      } else if (auto* p = std::get_if<DiffusionParams>(&s.params)) {
        set(p->k, diff_k);
        set(p->k_q, diff_kq);
        set(p->alpha, diff_alpha);
        set(p->t_max, diff_tmax);
        set(p->gamma, diff_gamma);
        set(p->tol, diff_tol);
        if (diff_mode) p->mode = *diff_mode == "union" ? EdgeMode::kUnion : EdgeMode::kMutual;
      }
    }
  }
};

std::vector<Stage> parse_stage_list(const std::string& list) {
  std::vector<Stage> stages;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (!name.empty()) stages.push_back(make_stage(name));
  }
  return stages;
}

void print_result(const PipelineResult& r, const std::optional<fs::path>& out_dir) {
  if (r.report) std::cout << report_to_text(*r.report);
  if (out_dir) std::cout << "wrote " << out_dir->string() << "/submission.txt\n";
}

int run_generate(const SynthSpec& spec, const std::string& out_dir, bool float64) {
  const SynthDataset data = generate(spec);
  const fs::path dir = fs::absolute(out_dir);
  fs::create_directories(dir);
  const Precision precision = float64 ? Precision::kFloat64 : Precision::kFloat32;
  ordered_json cfg;
  cfg["stages"] = ordered_json::array({"fuse", "dex", "dba", "kreciprocal"});
  for (std::size_t m = 0; m < spec.n_models; ++m) {
    const std::string q = "query_m" + std::to_string(m) + ".json";
    const std::string g = "gallery_m" + std::to_string(m) + ".json";
    save_embeddings(data.query[m], dir / q, precision);
    save_embeddings(data.gallery[m], dir / g, precision);
    cfg["inputs"]["query"].push_back(q);
    cfg["inputs"]["gallery"].push_back(g);
  }
  save_metadata(data.query_meta, dir / "query_meta.csv");
  save_metadata(data.gallery_meta, dir / "gallery_meta.csv");
  cfg["inputs"]["query_meta"] = "query_meta.csv";
  cfg["inputs"]["gallery_meta"] = "gallery_meta.csv";
  cfg["outputs"]["dir"] = "run";
  cfg["seed"] = spec.seed;
  write_file_atomic(dir / "pipeline.json", cfg.dump(2) + "\n");
  std::cout << "generated " << data.query_meta.size() << " queries, " << data.gallery_meta.size()
            << " gallery images, " << spec.n_models << " member(s) in " << dir.string() << '\n';
  return 0;
}

SynthSpec synth_from_json(const fs::path& path) {
  const auto j = ordered_json::parse(read_file(path));
  SynthSpec s;
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  get("n_ids", s.n_ids);
  get("tracklets_per_id", s.tracklets_per_id);
  get("images_min", s.images_min);
  get("images_max", s.images_max);
  get("d", s.d);
  get("sigma_id", s.sigma_id);
  get("sigma_track", s.sigma_track);
  get("n_models", s.n_models);
  get("scale_jitter", s.scale_jitter);
  get("queries_per_id", s.queries_per_id);
  get("seed", s.seed);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedding expansion and re-ranking over precomputed embeddings"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "write a seeded synthetic dataset");
  std::string gen_config;
  std::string gen_out;
  bool gen_f64 = false;
  SynthSpec spec;
  gen->add_option("--config", gen_config, "JSON file with synthetic dataset parameters");
  gen->add_option("--out-dir", gen_out, "output directory")->required();
  gen->add_option("--n-ids", spec.n_ids);
  gen->add_option("--tracklets-per-id", spec.tracklets_per_id);
  gen->add_option("--images-min", spec.images_min);
  gen->add_option("--images-max", spec.images_max);
  gen->add_option("--dim", spec.d);
  gen->add_option("--sigma-id", spec.sigma_id);
  gen->add_option("--sigma-track", spec.sigma_track);
  gen->add_option("--n-models", spec.n_models);
  gen->add_option("--scale-jitter", spec.scale_jitter);
  gen->add_option("--queries-per-id", spec.queries_per_id);
  gen->add_option("--seed", spec.seed);
  gen->add_flag("--float64", gen_f64, "store payloads as float64");

  // rank
  auto* rank = app.add_subcommand("rank", "plain cosine ranking");
  InputFlags rank_in;
  std::string rank_out;
  std::size_t rank_depth = kSubmissionDepth;
  rank_in.add(rank, true);
  rank->add_option("--out", rank_out, "submission file")->required();
  rank->add_option("--depth", rank_depth, "ranks per query line");

  // rerank
  auto* rerank = app.add_subcommand("rerank", "apply one or more stages given on the command line");
  InputFlags rerank_in;
  ParamFlags rerank_params;
  std::string rerank_method;
  std::string rerank_out;
  rerank_in.add(rerank, true);
  rerank_params.add(rerank);
  rerank->add_option("--method", rerank_method,
                     "stage or comma-separated stages (dex, aqe, alpha_qe, dba, kreciprocal, "
                     "diffusion, tracklet_rerank)")
      ->required();
  rerank->add_option("--out-dir", rerank_out, "output directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "score a submission file against identity labels");
  std::string ev_sub;
  std::string ev_qm;
  std::string ev_gm;
  std::string ev_json;
  bool ev_camera = false;
  ev->add_option("--submission", ev_sub)->required();
  ev->add_option("--query-meta", ev_qm)->required();
  ev->add_option("--gallery-meta", ev_gm)->required();
  ev->add_option("--json", ev_json, "also write the report as JSON");
  ev->add_flag("--same-camera-filter", ev_camera);

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "run a configured stage chain (or a manifest)");
  std::string pipe_config;
  std::string pipe_out;
  std::string pipe_stages;
  InputFlags pipe_in;
  ParamFlags pipe_params;
  pipe->add_option("--config", pipe_config, "pipeline config or run manifest")->required();
  pipe->add_option("--out-dir", pipe_out, "output directory (overrides the config)");
  pipe->add_option("--stages", pipe_stages, "comma-separated stage chain (overrides the config)");
  pipe_in.add(pipe, false);
  pipe_params.add(pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      SynthSpec final_spec = gen_config.empty() ? SynthSpec{} : synth_from_json(gen_config);
      // Flags given on the command line override the file.
      auto take = [&](const char* flag, auto SynthSpec::*field) {
        if (gen->get_option(flag)->count() > 0) final_spec.*field = spec.*field;
      };
      take("--n-ids", &SynthSpec::n_ids);
      take("--tracklets-per-id", &SynthSpec::tracklets_per_id);
      take("--images-min", &SynthSpec::images_min);
      take("--images-max", &SynthSpec::images_max);
      take("--dim", &SynthSpec::d);
      take("--sigma-id", &SynthSpec::sigma_id);
      take("--sigma-track", &SynthSpec::sigma_track);
      take("--n-models", &SynthSpec::n_models);
      take("--scale-jitter", &SynthSpec::scale_jitter);
      take("--queries-per-id", &SynthSpec::queries_per_id);
      take("--seed", &SynthSpec::seed);
      return run_generate(final_spec, gen_out, gen_f64);
    }
    if (rank->parsed()) {
      PipelineConfig cfg;
      cfg.stages.clear();
      rank_in.apply(cfg.inputs);
      if (cfg.inputs.query.size() > 1 || cfg.inputs.gallery.size() > 1) {
        cfg.stages.push_back(make_stage("fuse"));
      }
      cfg.submission_depth = rank_depth;
      const PipelineResult r = run_pipeline(cfg);
      write_file_atomic(rank_out, r.submission);
      if (r.report) std::cout << report_to_text(*r.report);
      std::cout << "wrote " << rank_out << '\n';
      return 0;
    }
    if (rerank->parsed()) {
      PipelineConfig cfg;
      cfg.stages = parse_stage_list(rerank_method);
      rerank_in.apply(cfg.inputs);
      if (cfg.inputs.query.size() > 1 || cfg.inputs.gallery.size() > 1) {
        cfg.stages.insert(cfg.stages.begin(), make_stage("fuse"));
      }
      rerank_params.apply(cfg.stages);
      cfg.output_dir = fs::absolute(rerank_out);
      validate_stages(cfg.stages);
      print_result(run_pipeline(cfg), cfg.output_dir);
      return 0;
    }
    if (ev->parsed()) {
      const CatalogMeta qm = load_metadata(ev_qm);
      const CatalogMeta gm = load_metadata(ev_gm);
      std::vector<std::string> gallery_ids;
      for (const auto& r : gm.records()) gallery_ids.push_back(r.image_id);
      const RankList ranks = parse_submission(read_file(ev_sub), gallery_ids);
      EvalOptions opt;
      opt.same_camera_filter = ev_camera;
      const EvalReport report = evaluate(ranks, qm, gm, opt);
      std::cout << report_to_text(report);
      if (!ev_json.empty()) write_file_atomic(ev_json, report_to_json(report));
      return 0;
    }
    if (pipe->parsed()) {
      PipelineConfig cfg = load_config(pipe_config);
      if (!pipe_stages.empty()) cfg.stages = parse_stage_list(pipe_stages);
      pipe_in.apply(cfg.inputs);
      pipe_params.apply(cfg.stages);
      if (!pipe_out.empty()) cfg.output_dir = fs::absolute(pipe_out);
      if (!cfg.output_dir) {
        throw Error(ErrorCode::kInvalidConfig, "no output directory (set outputs.dir or --out-dir)");
      }
      validate_stages(cfg.stages);
      print_result(run_pipeline(cfg), cfg.output_dir);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_io() ? 2 : 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
