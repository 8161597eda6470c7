#include "dexrank/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "dexrank/error.hpp"

namespace dexrank {

namespace {

double kernel(double cosine, double gamma) { return std::pow(std::max(cosine, 0.0), gamma); }

CsrMatrix from_rows(std::vector<std::vector<std::pair<std::size_t, double>>> rows) {
  CsrMatrix m;
  m.n = rows.size();
  m.row_ptr.assign(1, 0);
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    for (const auto& [c, v] : r) {
      m.col.push_back(c);
      m.val.push_back(v);
    }
    m.row_ptr.push_back(m.col.size());
  }
  return m;
}

}  // namespace

void validate(const DiffusionParams& p) {
  if (!(p.alpha > 0.0 && p.alpha < 1.0)) {
    throw Error(ErrorCode::kInvalidParams, "diffusion alpha must lie in (0, 1)");
  }
  if (p.k < 1 || p.k_q < 1 || p.t_max < 1) {
    throw Error(ErrorCode::kInvalidParams, "diffusion k, k_q and t_max must be >= 1");
  }
  if (!(p.gamma >= 1.0) || !std::isfinite(p.gamma)) {
    throw Error(ErrorCode::kInvalidParams, "diffusion gamma must be >= 1");
  }
  if (!(p.tol > 0.0)) throw Error(ErrorCode::kInvalidParams, "diffusion tol must be > 0");
}

double CsrMatrix::at(std::size_t i, std::size_t j) const {
  const auto begin = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
  const auto end = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
  const auto it = std::lower_bound(begin, end, j);
  if (it == end || *it != j) return 0.0;
  return val[static_cast<std::size_t>(it - col.begin())];
}

void CsrMatrix::multiply(std::span<const double> x, std::span<double> out) const {
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) acc += val[e] * x[col[e]];
    out[i] = acc;
  }
}

AffinityGraph normalize_affinity(CsrMatrix affinity) {
  AffinityGraph g;
  const std::size_t n = affinity.n;
  g.degree.assign(n, 0.0);
  std::vector<double> inv_sqrt(n, 0.0);
  std::size_t isolated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t e = affinity.row_ptr[i]; e < affinity.row_ptr[i + 1]; ++e) {
      acc += affinity.val[e];
    }
    g.degree[i] = acc;
    if (acc > 0.0) {
      inv_sqrt[i] = 1.0 / std::sqrt(acc);
    } else {
      ++isolated;
    }
  }
  if (isolated > 0) {
    warn("diffusion: " + std::to_string(isolated) + " node(s) have zero degree");
  }
  g.normalized = affinity;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = affinity.row_ptr[i]; e < affinity.row_ptr[i + 1]; ++e) {
      // (d_i * d_j) commutes exactly, so S stays bitwise symmetric.
      g.normalized.val[e] = affinity.val[e] * (inv_sqrt[i] * inv_sqrt[affinity.col[e]]);
    }
  }
  g.affinity = std::move(affinity);
  return g;
}

AffinityGraph build_affinity(const EmbeddingMatrix& g, const DiffusionParams& p) {
  validate(p);
  const std::size_t n = g.rows();
  const SimilarityMatrix sims = cosine_similarity(g, g);
  std::vector<std::vector<std::size_t>> selected(n);
  for (std::size_t i = 0; i < n; ++i) {
    selected[i] = rank_scores_excluding(sims.row(i), i, p.k).indices;
    std::sort(selected[i].begin(), selected[i].end());
  }
  auto picks = [&](std::size_t i, std::size_t j) {
    return std::binary_search(selected[i].begin(), selected[i].end(), j);
  };

  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : selected[i]) {
      const bool keep = p.mode == EdgeMode::kUnion || picks(j, i);
      if (!keep) continue;
      // Weight from the canonical (low, high) entry so both directions agree.
      const double w = kernel(sims(std::min(i, j), std::max(i, j)), p.gamma);
      if (w <= 0.0) continue;
      rows[i].emplace_back(j, w);
      if (p.mode == EdgeMode::kUnion) rows[j].emplace_back(i, w);
    }
  }
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end(),
                        [](const auto& a, const auto& b) { return a.first == b.first; }),
            r.end());
  }
  return normalize_affinity(from_rows(std::move(rows)));
}

DiffusionResult diffuse(const AffinityGraph& graph, std::span<const double> y,
                        const DiffusionParams& p) {
  validate(p);
  const std::size_t n = graph.normalized.n;
  if (y.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "seed vector length " + std::to_string(y.size()) +
                                                   " vs graph size " + std::to_string(n));
  }
  for (double v : y) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidParams, "seed vector must be finite and non-negative");
    }
  }
  DiffusionResult r;
  r.f.assign(y.begin(), y.end());
  std::vector<double> next(n);
  for (std::size_t t = 1; t <= p.t_max; ++t) {
    graph.normalized.multiply(r.f, next);
    double residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = p.alpha * next[i] + (1.0 - p.alpha) * y[i];
      residual = std::max(residual, std::abs(next[i] - r.f[i]));
    }
    r.f.swap(next);
    r.iterations = t;
    r.residual = residual;
    if (residual < p.tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

std::vector<double> query_seed(std::span<const double> query_sims, const DiffusionParams& p) {
  std::vector<double> y(query_sims.size(), 0.0);
  const Ranking seeds = rank_scores(query_sims, p.k_q);
  double total = 0.0;
  for (std::size_t r = 0; r < seeds.size(); ++r) {
    const double w = kernel(seeds.scores[r], p.gamma);
    y[seeds.indices[r]] = w;
    total += w;
  }
  if (total > 0.0) {
    for (double& v : y) v /= total;
  }
  return y;
}

DiffusionRanking diffusion_scores(const EmbeddingMatrix& q, const EmbeddingMatrix& g,
                                  const DiffusionParams& p) {
  validate(p);
  const AffinityGraph graph = build_affinity(g, p);
  const SimilarityMatrix sims = cosine_similarity(q, g);
  const std::size_t nq = q.rows();
  const std::size_t ng = g.rows();
  DiffusionRanking out;
  out.ranks.resize(nq);
  std::vector<double> scores(nq * ng);
  std::vector<char> converged(nq, 1);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(nq); ++i) {
    const auto qi = static_cast<std::size_t>(i);
    const std::vector<double> y = query_seed(sims.row(qi), p);
    const DiffusionResult r = diffuse(graph, y, p);
    converged[qi] = r.converged ? 1 : 0;
    std::copy(r.f.begin(), r.f.end(), scores.begin() + static_cast<std::ptrdiff_t>(qi * ng));

    const Ranking by_f = rank_scores(r.f);
    const Ranking by_cos = rank_scores(sims.row(qi));
    Ranking& rank = out.ranks[qi];
    rank.indices.reserve(ng);
    rank.scores.reserve(ng);
    for (std::size_t k = 0; k < ng && by_f.scores[k] > 0.0; ++k) {
      rank.indices.push_back(by_f.indices[k]);
      rank.scores.push_back(by_f.scores[k]);
    }
    for (std::size_t k = 0; k < ng; ++k) {
      if (r.f[by_cos.indices[k]] > 0.0) continue;
      rank.indices.push_back(by_cos.indices[k]);
      rank.scores.push_back(0.0);
    }
  }
  out.not_converged = static_cast<std::size_t>(std::count(converged.begin(), converged.end(), 0));
  if (out.not_converged > 0) {
    warn("diffusion: " + std::to_string(out.not_converged) + " of " + std::to_string(nq) +
         " queries did not reach tol within t_max iterations");
  }
  out.scores = SimilarityMatrix(nq, ng, std::move(scores));
  return out;
}

RankList diffusion_rerank(const EmbeddingMatrix& q, const EmbeddingMatrix& g,
                          const DiffusionParams& p) {
  return std::move(diffusion_scores(q, g, p).ranks);
}

}  // namespace dexrank
