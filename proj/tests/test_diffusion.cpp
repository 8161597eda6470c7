#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dexrank/diffusion.hpp"
#include "support/oracles.hpp"
#include "support/util.hpp"

using namespace dexrank;
using testutil::code_of;

namespace {

CsrMatrix dense_to_csr(const std::vector<std::vector<double>>& a) {
  CsrMatrix m;
  m.n = a.size();
  for (const auto& row : a) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] != 0.0) {
        m.col.push_back(j);
        m.val.push_back(row[j]);
      }
    }
    m.row_ptr.push_back(m.col.size());
  }
  return m;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_SUITE("diffusion") {
  TEST_CASE("two identical nodes form one unit edge") {
    const auto g = EmbeddingMatrix::from_rows({{1, 0}, {1, 0}});
    DiffusionParams p;
    p.k = 1;
    const AffinityGraph graph = build_affinity(g, p);
    CHECK(graph.affinity.nnz() == 2);
    CHECK(graph.affinity.at(0, 1) == 1.0);
    CHECK(graph.degree == std::vector<double>{1.0, 1.0});
    CHECK(graph.normalized.val == graph.affinity.val);
  }

  TEST_CASE("orthogonal rows give an empty graph") {
    testutil::QuietWarnings quiet;
    const auto g = EmbeddingMatrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    const AffinityGraph graph = build_affinity(g, {});
    CHECK(graph.affinity.nnz() == 0);
    CHECK(graph.degree == std::vector<double>{0, 0, 0});
  }

  TEST_CASE("three-node hand example") {
    // cos(0,1) = cos(1,2) = 0.5, cos(0,2) = 0.
    const double h = std::sqrt(3.0) / 2.0;
    const auto g = EmbeddingMatrix::from_rows({{1, 0}, {0.5, h}, {-0.5, h}});
    DiffusionParams p;
    p.k = 2;
    p.gamma = 1.0;
    const AffinityGraph graph = build_affinity(g, p);
    CHECK(graph.affinity.nnz() == 4);
    CHECK(graph.affinity.at(0, 1) == doctest::Approx(0.5));
    CHECK(graph.affinity.at(1, 2) == doctest::Approx(0.5));
    CHECK(graph.affinity.at(0, 2) == 0.0);
    CHECK(graph.degree[0] == doctest::Approx(0.5));
    CHECK(graph.degree[1] == doctest::Approx(1.0));
    CHECK(graph.degree[2] == doctest::Approx(0.5));
    CHECK(graph.normalized.at(0, 1) == doctest::Approx(0.70711).epsilon(1e-5));
    CHECK(graph.normalized.at(2, 1) == doctest::Approx(0.70711).epsilon(1e-5));
  }

  TEST_CASE("closed-form hand example") {
    const AffinityGraph graph = normalize_affinity(dense_to_csr({{0, 1}, {1, 0}}));
    DiffusionParams p;
    p.alpha = 0.5;
    p.t_max = 200;
    p.tol = 1e-15;
    const DiffusionResult r = diffuse(graph, std::vector<double>{1, 0}, p);
    CHECK(r.converged);
    CHECK(std::abs(r.f[0] - 2.0 / 3.0) <= 1e-9);
    CHECK(std::abs(r.f[1] - 1.0 / 3.0) <= 1e-9);
  }

  TEST_CASE("an empty graph settles at (1 - alpha) y after one step") {
    testutil::QuietWarnings quiet;
    const AffinityGraph graph = normalize_affinity(dense_to_csr({{0, 0, 0}, {0, 0, 0},
                                                                  {0, 0, 0}}));
    DiffusionParams p;
    p.alpha = 0.8;
    const std::vector<double> y{0.5, 0.25, 0.25};
    const DiffusionResult r = diffuse(graph, y, p);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r.f[i] == doctest::Approx(0.2 * y[i]));
    CHECK(r.iterations == 2);  // the second step sees no change
    CHECK(r.converged);
  }

  TEST_CASE("small alpha keeps f close to y") {
    const AffinityGraph graph = normalize_affinity(dense_to_csr({{0, 1}, {1, 0}}));
    DiffusionParams p;
    p.alpha = 1e-9;
    const DiffusionResult r = diffuse(graph, std::vector<double>{1, 0}, p);
    CHECK(r.f[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(r.f[1] == doctest::Approx(0.0).epsilon(1e-8));
  }

  TEST_CASE("affinity matches the dense definition and is symmetric") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 20; ++trial) {
      const auto rows = oracle::random_unit_rows(rng, 40, 4);
      const auto g = EmbeddingMatrix::from_rows(rows);
      DiffusionParams p;
      p.k = 1 + static_cast<std::size_t>(trial) % 10;
      p.gamma = 1.0 + trial % 3;
      p.mode = trial % 2 ? EdgeMode::kMutual : EdgeMode::kUnion;
      testutil::QuietWarnings quiet;
      const AffinityGraph graph = build_affinity(g, p);
      const oracle::Dense a = oracle::to_dense(graph.affinity);
      const oracle::Dense s = oracle::to_dense(graph.normalized);
      const oracle::Dense expect =
          oracle::dense_affinity(rows, p.k, p.gamma, p.mode == EdgeMode::kMutual);
      CHECK((a - expect).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(a == a.transpose());
      CHECK((s - s.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((s - oracle::dense_normalize(expect)).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(a.diagonal().isZero(0.0));
    }
  }

  TEST_CASE("growing k never removes edges") {
    std::mt19937_64 rng(62);
    const auto g = oracle::random_matrix(rng, 50, 5);
    for (EdgeMode mode : {EdgeMode::kUnion, EdgeMode::kMutual}) {
      testutil::QuietWarnings quiet;
      DiffusionParams p;
      p.mode = mode;
      p.k = 1;
      oracle::Dense previous = oracle::to_dense(build_affinity(g, p).affinity);
      for (std::size_t k = 2; k < 50; k += 3) {
        p.k = k;
        const oracle::Dense now = oracle::to_dense(build_affinity(g, p).affinity);
        for (Eigen::Index i = 0; i < now.rows(); ++i) {
          for (Eigen::Index j = 0; j < now.cols(); ++j) {
            if (previous(i, j) > 0.0) CHECK(now(i, j) == previous(i, j));
          }
        }
        previous = now;
      }
    }
  }

  TEST_CASE("iteration matches the dense fixed point") {
    std::mt19937_64 rng(63);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      testutil::QuietWarnings quiet;
      const auto rows = oracle::random_unit_rows(rng, 60, 3);
      DiffusionParams p;
      p.k = 5;
      p.alpha = 0.5 + 0.49 * unit(rng);
      p.t_max = 20000;
      p.tol = 1e-13;
      const AffinityGraph graph = build_affinity(EmbeddingMatrix::from_rows(rows), p);
      std::vector<double> y(60);
      for (double& v : y) v = unit(rng);
      const DiffusionResult r = diffuse(graph, y, p);
      CHECK(r.converged);
      CHECK(r.residual < p.tol);
      const auto exact =
          oracle::diffusion_fixed_point(oracle::to_dense(graph.normalized), y, p.alpha);
      CHECK(max_abs_diff(r.f, exact) <= 1e-6);
      for (double v : r.f) CHECK(v >= 0.0);
    }
  }

  TEST_CASE("query seeds") {
    DiffusionParams p;
    p.k_q = 2;
    p.gamma = 1.0;
    const auto y = query_seed(std::vector<double>{0.2, 0.6, -0.4, 0.2}, p);
    CHECK(y[0] == doctest::Approx(0.25));
    CHECK(y[1] == doctest::Approx(0.75));
    CHECK(y[2] == 0.0);
    CHECK(y[3] == 0.0);
    CHECK(query_seed(std::vector<double>{-0.1, -0.2}, p) == std::vector<double>{0, 0});
  }

  TEST_CASE("a tight cluster around the seeds outranks everything else") {
    // Six points near e0 and four spread elsewhere.
    const auto g = l2_normalize_rows(EmbeddingMatrix::from_rows({
        {1, 0.05, 0},
        {0.3, 1, 0},
        {1, 0, 0.05},
        {1, -0.05, 0},
        {0, 0.4, 1},
        {1, 0, -0.05},
        {0.2, 1, 0.1},
        {1, 0.03, 0.03},
        {-0.2, 0, 1},
        {1, -0.03, 0.03},
    }));
    const auto q = l2_normalize_rows(EmbeddingMatrix::from_rows({{1, 0, 0}}));
    DiffusionParams p;
    p.k = 3;
    p.k_q = 2;
    const Ranking r = diffusion_rerank(q, g, p)[0];
    std::vector<std::size_t> top(r.indices.begin(), r.indices.begin() + 6);
    std::sort(top.begin(), top.end());
    CHECK(top == std::vector<std::size_t>{0, 2, 3, 5, 7, 9});
  }

  TEST_CASE("an isolated seed keeps all the mass") {
    testutil::QuietWarnings quiet;
    const auto g = EmbeddingMatrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    const auto q = EmbeddingMatrix::from_rows({{1, 0, 0}});
    DiffusionParams p;
    p.k_q = 1;
    const DiffusionRanking r = diffusion_scores(q, g, p);
    CHECK(r.scores(0, 0) > 0.0);
    CHECK(r.scores(0, 1) == 0.0);
    CHECK(r.scores(0, 2) == 0.0);
    // Unreached rows follow in cosine order (ties by index).
    CHECK(r.ranks[0].indices == std::vector<std::size_t>{0, 1, 2});
  }

  TEST_CASE("identical queries get identical lists") {
    std::mt19937_64 rng(64);
    auto rows = oracle::random_unit_rows(rng, 2, 4);
    rows[1] = rows[0];
    const auto q = EmbeddingMatrix::from_rows(rows);
    const auto g = oracle::random_matrix(rng, 40, 4);
    DiffusionParams p;
    p.k = 6;
    p.k_q = 4;
    testutil::QuietWarnings quiet;
    const RankList r = diffusion_rerank(q, g, p);
    CHECK(r[0].indices == r[1].indices);
    CHECK(r[0].indices.size() == 40);
  }

  TEST_CASE("parameter validation") {
    const AffinityGraph graph = normalize_affinity(dense_to_csr({{0, 1}, {1, 0}}));
    DiffusionParams p;
    p.alpha = 1.0;
    CHECK(code_of([&] { diffuse(graph, std::vector<double>{1, 0}, p); }) ==
          ErrorCode::kInvalidParams);
    p = {};
    p.gamma = 0.5;
    CHECK(code_of([&] { diffuse(graph, std::vector<double>{1, 0}, p); }) ==
          ErrorCode::kInvalidParams);
    p = {};
    CHECK(code_of([&] { diffuse(graph, std::vector<double>{1, -1}, p); }) ==
          ErrorCode::kInvalidParams);
    CHECK(code_of([&] { diffuse(graph, std::vector<double>{1}, p); }) ==
          ErrorCode::kDimensionMismatch);
  }

  TEST_CASE("non-convergence is reported, not thrown") {
    const AffinityGraph graph = normalize_affinity(dense_to_csr({{0, 1}, {1, 0}}));
    DiffusionParams p;
    p.alpha = 0.99;
    p.t_max = 3;
    const DiffusionResult r = diffuse(graph, std::vector<double>{1, 0}, p);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 3);
  }
}
