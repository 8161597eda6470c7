#include "dexrank/dba.hpp"

#include <algorithm>

#include "dexrank/error.hpp"

namespace dexrank {

RankList gallery_knn(const EmbeddingMatrix& g, std::size_t k) {
  if (g.rows() < k + 1) {
    throw Error(ErrorCode::kGalleryTooSmall, "need at least " + std::to_string(k + 1) +
                                                 " gallery rows for k=" + std::to_string(k) +
                                                 ", have " + std::to_string(g.rows()));
  }
  const SimilarityMatrix sims = cosine_similarity(g, g);
  RankList out(g.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(g.rows()); ++i) {
    const auto row = static_cast<std::size_t>(i);
    out[row] = rank_scores_excluding(sims.row(row), row, k);
  }
  return out;
}

EmbeddingMatrix dba_augment(const EmbeddingMatrix& g, const DbaParams& p) {
  if (p.k < 1) throw Error(ErrorCode::kInvalidParams, "dba k must be >= 1");
  const RankList knn = gallery_knn(g, p.k);
  const std::size_t d = g.dim();
  std::vector<double> out(g.rows() * d, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(g.rows()); ++i) {
    const auto row = static_cast<std::size_t>(i);
    double* acc = out.data() + row * d;
    double total = 0.0;
    auto add = [&](std::size_t j, double w) {
      auto gj = g.row(j);
      for (std::size_t c = 0; c < d; ++c) acc[c] += w * gj[c];
      total += w;
    };
    if (p.include_self) add(row, 1.0);
    for (std::size_t r = 0; r < knn[row].size(); ++r) {
      const double w = p.weighting == DbaWeighting::kUniform ? 1.0
                                                             : std::max(knn[row].scores[r], 0.0);
      add(knn[row].indices[r], w);
    }
    if (total > 0.0) {
      for (std::size_t c = 0; c < d; ++c) acc[c] /= total;
    }
  }
  for (std::size_t i = 0; i < g.rows(); ++i) {
    if (!normalize_in_place({out.data() + i * d, d})) {
      throw Error(ErrorCode::kZeroRow, "augmented row " + std::to_string(i) + " has zero norm");
    }
  }
  return g.with_data(std::move(out));
}

}  // namespace dexrank
