#include "dexrank/kreciprocal.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include "dexrank/error.hpp"

namespace dexrank {

namespace {

std::size_t intersection_size(const IndexSet& a, const IndexSet& b) {
  std::size_t n = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

bool in_first_k(const std::vector<std::size_t>& list, std::size_t k, std::size_t item) {
  const auto end = list.begin() + static_cast<std::ptrdiff_t>(std::min(k, list.size()));
  return std::find(list.begin(), end, item) != end;
}

EmbeddingMatrix stack(const EmbeddingMatrix& q, const EmbeddingMatrix& g) {
  std::vector<double> data = q.data();
  data.insert(data.end(), g.data().begin(), g.data().end());
  std::vector<std::string> ids;
  ids.reserve(q.rows() + g.rows());
  // Query and gallery ids may collide; the pool is internal so tag them.
  for (const auto& id : q.row_ids()) ids.push_back("q:" + id);
  for (const auto& id : g.row_ids()) ids.push_back("g:" + id);
  return {q.rows() + g.rows(), q.dim(), std::move(data), std::move(ids)};
}

SparseWeights encode(std::size_t item, const IndexSet& r_star, std::span<const double> sims,
                     bool soft) {
  SparseWeights w;
  w.index = r_star;
  // Expansion can already have pulled the item in through a neighbour's half set.
  const auto at = std::lower_bound(w.index.begin(), w.index.end(), item);
  if (at == w.index.end() || *at != item) w.index.insert(at, item);
  w.value.resize(w.index.size(), 1.0);
  if (soft) {
    double total = 0.0;
    for (std::size_t m = 0; m < w.index.size(); ++m) {
      w.value[m] = std::exp(sims[w.index[m]] - 1.0);
      total += w.value[m];
    }
    for (double& v : w.value) v /= total;
  }
  return w;
}

}  // namespace

IndexSet reciprocal_set(const NeighborLists& knn, std::size_t i, std::size_t k) {
  IndexSet out;
  const auto& forward = knn[i];
  const std::size_t take = std::min(k, forward.size());
  for (std::size_t r = 0; r < take; ++r) {
    const std::size_t j = forward[r];
    if (in_first_k(knn[j], k, i)) out.push_back(j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

IndexSet expand_with_half_sets(const IndexSet& base, std::span<const IndexSet> half_sets) {
  IndexSet out = base;
  for (std::size_t g : base) {
    const IndexSet& half = half_sets[g];
    // |base & half| >= (2/3) |half|, kept in integers.
    if (3 * intersection_size(base, half) >= 2 * half.size()) {
      IndexSet merged;
      merged.reserve(out.size() + half.size());
      std::set_union(out.begin(), out.end(), half.begin(), half.end(),
                     std::back_inserter(merged));
      out = std::move(merged);
    }
  }
  return out;
}

ReciprocalSets expand_reciprocal(const NeighborLists& knn, std::size_t k) {
  const std::size_t n = knn.size();
  ReciprocalSets sets;
  sets.r.resize(n);
  sets.r_star.resize(n);
  std::vector<IndexSet> half(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto item = static_cast<std::size_t>(i);
    sets.r[item] = reciprocal_set(knn, item, k);
    half[item] = reciprocal_set(knn, item, k / 2);
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto item = static_cast<std::size_t>(i);
    sets.r_star[item] = expand_with_half_sets(sets.r[item], half);
  }
  return sets;
}

double jaccard_distance(const IndexSet& a, const IndexSet& b) {
  const std::size_t inter = intersection_size(a, b);
  const std::size_t uni = a.size() + b.size() - inter;
  if (uni == 0) return 1.0;
  return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

double jaccard_distance(const SparseWeights& a, const SparseWeights& b) {
  double min_sum = 0.0;
  double max_sum = 0.0;
  std::size_t ia = 0;
  std::size_t ib = 0;
  while (ia < a.index.size() || ib < b.index.size()) {
    if (ib == b.index.size() || (ia < a.index.size() && a.index[ia] < b.index[ib])) {
      max_sum += a.value[ia++];
    } else if (ia == a.index.size() || b.index[ib] < a.index[ia]) {
      max_sum += b.value[ib++];
    } else {
      min_sum += std::min(a.value[ia], b.value[ib]);
      max_sum += std::max(a.value[ia], b.value[ib]);
      ++ia;
      ++ib;
    }
  }
  if (max_sum <= 0.0) return 1.0;
  return 1.0 - min_sum / max_sum;
}

NeighborLists pool_knn(const SimilarityMatrix& pool_sims, std::size_t k) {
  NeighborLists out(pool_sims.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(pool_sims.rows()); ++i) {
    const auto item = static_cast<std::size_t>(i);
    out[item] = rank_scores_excluding(pool_sims.row(item), item, k).indices;
  }
  return out;
}

void validate(const KRParams& p) {
  if (p.k2 < 1 || p.k1 < p.k2) {
    throw Error(ErrorCode::kInvalidParams, "k-reciprocal requires k1 >= k2 >= 1");
  }
  if (!(p.lambda >= 0.0 && p.lambda <= 1.0)) {
    throw Error(ErrorCode::kInvalidParams, "k-reciprocal lambda must lie in [0, 1]");
  }
}

KReciprocalResult kreciprocal(const EmbeddingMatrix& q, const EmbeddingMatrix& g,
                              const KRParams& p) {
  validate(p);
  if (q.dim() != g.dim()) throw Error(ErrorCode::kDimensionMismatch, "query/gallery dim differ");
  const std::size_t nq = q.rows();
  const std::size_t ng = g.rows();
  const EmbeddingMatrix pool = stack(q, g);
  const std::size_t n = pool.rows();
  const SimilarityMatrix pool_sims = cosine_similarity(pool, pool);

  if (p.k1 > n - 1 && n > 0) {
    warn("kreciprocal: k1=" + std::to_string(p.k1) + " exceeds pool size - 1 (" +
         std::to_string(n - 1) + "), neighbourhoods clamped");
  }
  const NeighborLists knn = pool_knn(pool_sims, p.k1);

  KReciprocalResult out;
  out.sets = expand_reciprocal(knn, p.k1);

  std::vector<SparseWeights> base(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto item = static_cast<std::size_t>(i);
    base[item] = encode(item, out.sets.r_star[item], pool_sims.row(item), p.sigma_weighting);
  }

  // Local expansion: average the encodings of the item and its k2 - 1
  // nearest neighbours.
  if (p.k2 > 1) {
    out.encodings.resize(n);
    std::vector<double> dense(n, 0.0);
    std::vector<std::size_t> touched;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t extra = std::min(p.k2 - 1, knn[i].size());
      auto accumulate = [&](const SparseWeights& w) {
        for (std::size_t m = 0; m < w.index.size(); ++m) {
          if (dense[w.index[m]] == 0.0) touched.push_back(w.index[m]);
          dense[w.index[m]] += w.value[m];
        }
      };
      accumulate(base[i]);
      for (std::size_t r = 0; r < extra; ++r) accumulate(base[knn[i][r]]);
      std::sort(touched.begin(), touched.end());
      const double count = static_cast<double>(extra + 1);
      SparseWeights& e = out.encodings[i];
      e.index = touched;
      e.value.reserve(touched.size());
      for (std::size_t m : touched) {
        e.value.push_back(dense[m] / count);
        dense[m] = 0.0;
      }
      touched.clear();
    }
  } else {
    out.encodings = std::move(base);
  }

  // Inverted index over gallery encodings: pool index -> (gallery row, weight).
  std::vector<std::vector<std::pair<std::size_t, double>>> inverted(n);
  std::vector<double> gallery_mass(ng, 0.0);
  for (std::size_t j = 0; j < ng; ++j) {
    const SparseWeights& e = out.encodings[nq + j];
    for (std::size_t m = 0; m < e.index.size(); ++m) {
      inverted[e.index[m]].emplace_back(j, e.value[m]);
      gallery_mass[j] += e.value[m];
    }
  }

  std::vector<double> original(nq * ng);
  std::vector<double> jaccard(nq * ng);
  std::vector<double> scores(nq * ng);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(nq); ++i) {
    const auto qi = static_cast<std::size_t>(i);
    const SparseWeights& e = out.encodings[qi];
    std::vector<double> min_sum(ng, 0.0);
    double query_mass = 0.0;
    for (std::size_t m = 0; m < e.index.size(); ++m) {
      query_mass += e.value[m];
      for (const auto& [j, w] : inverted[e.index[m]]) min_sum[j] += std::min(e.value[m], w);
    }
    const auto sims = pool_sims.row(qi);
    for (std::size_t j = 0; j < ng; ++j) {
      const double cos = sims[nq + j];
      const double max_sum = query_mass + gallery_mass[j] - min_sum[j];
      const double jac = max_sum > 0.0 ? 1.0 - min_sum[j] / max_sum : 1.0;
      original[qi * ng + j] = 1.0 - cos;
      jaccard[qi * ng + j] = jac;
      scores[qi * ng + j] = p.lambda * cos - (1.0 - p.lambda) * jac;
    }
  }
  out.original = SimilarityMatrix(nq, ng, std::move(original));
  out.jaccard = SimilarityMatrix(nq, ng, std::move(jaccard));
  out.scores = SimilarityMatrix(nq, ng, std::move(scores));
  return out;
}

RankList krerank(const EmbeddingMatrix& q, const EmbeddingMatrix& g, const KRParams& p) {
  return rank_topk(kreciprocal(q, g, p).scores);
}

}  // namespace dexrank
