#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dexrank/core.hpp"

// k-reciprocal encoding re-ranking.
//
// All neighbourhoods live on the pool queries ++ gallery (queries first).
// k-NN lists exclude the item itself; reciprocal sets R(i, k) therefore never
// contain i. The set encoding used for the Jaccard distance is R*(i, k1)
// plus i itself, so an exact duplicate of an item shares its encoding.
namespace dexrank {

struct KRParams {
  std::size_t k1 = 60;
  std::size_t k2 = 30;
  double lambda = 0.5;
  // true: members weighted by exp(-(1 - cos)), normalized to sum 1.
  // false: indicator weights (hard sets).
  bool sigma_weighting = true;
};

// Sorted index set.
using IndexSet = std::vector<std::size_t>;

// knn[i] lists neighbours of item i, nearest first, self excluded.
using NeighborLists = std::vector<std::vector<std::size_t>>;

// { j in kNN(i) : i in kNN(j) }, using the first k entries of each list.
IndexSet reciprocal_set(const NeighborLists& knn, std::size_t i, std::size_t k);

// base united with every half_sets[g] (g in base) that satisfies
// |base & half_sets[g]| >= 2/3 |half_sets[g]|.
IndexSet expand_with_half_sets(const IndexSet& base, std::span<const IndexSet> half_sets);

struct ReciprocalSets {
  std::vector<IndexSet> r;       // R(i, k)
  std::vector<IndexSet> r_star;  // R*(i, k)
};

// R and R* for every item, with the half neighbourhood at floor(k / 2).
ReciprocalSets expand_reciprocal(const NeighborLists& knn, std::size_t k);

/// Sparse non-negative weight vector over pool indices (index ascending).
struct SparseWeights {
  std::vector<std::size_t> index;
  std::vector<double> value;
};

// 1 - |a & b| / |a | b|; two empty sets are at distance 1.
double jaccard_distance(const IndexSet& a, const IndexSet& b);
// 1 - sum(min) / sum(max); zero total mass gives 1.
double jaccard_distance(const SparseWeights& a, const SparseWeights& b);

// Neighbour lists over the pool, nearest first, self excluded, length
// min(k, pool - 1).
NeighborLists pool_knn(const SimilarityMatrix& pool_sims, std::size_t k);

struct KReciprocalResult {
  SimilarityMatrix original;  // 1 - cos, nq x ng
  SimilarityMatrix jaccard;   // nq x ng
  // lambda * cos - (1 - lambda) * jaccard. Final distance is lambda - score,
  // so descending score is ascending final distance.
  SimilarityMatrix scores;
  ReciprocalSets sets;        // over the pool
  std::vector<SparseWeights> encodings;  // after local expansion, over the pool
};

void validate(const KRParams& p);

KReciprocalResult kreciprocal(const EmbeddingMatrix& q, const EmbeddingMatrix& g,
                              const KRParams& p = {});

RankList krerank(const EmbeddingMatrix& q, const EmbeddingMatrix& g, const KRParams& p = {});

}  // namespace dexrank
