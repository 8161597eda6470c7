#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dexrank/core.hpp"

namespace dexrank {

enum class EdgeMode {
  kUnion,   // keep (i, j) when j is in i's top-k or i is in j's top-k
  kMutual,  // keep (i, j) only when both hold
};

struct DiffusionParams {
  std::size_t k = 50;    // graph locality
  std::size_t k_q = 25;  // query seed locality
  double alpha = 0.95;
  std::size_t t_max = 25;
  double gamma = 3.0;  // monomial kernel exponent
  double tol = 1e-6;   // on the infinity-norm residual
  EdgeMode mode = EdgeMode::kUnion;
};

void validate(const DiffusionParams& p);

/// Compressed sparse row matrix with column indices ascending per row.
struct CsrMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col;
  std::vector<double> val;

  std::size_t nnz() const noexcept { return col.size(); }
  // 0 when (i, j) is not stored.
  double at(std::size_t i, std::size_t j) const;
  // out = M x, rows accumulated in column order.
  void multiply(std::span<const double> x, std::span<double> out) const;
};

struct AffinityGraph {
  CsrMatrix affinity;           // A: symmetric, non-negative, zero diagonal
  CsrMatrix normalized;         // S = D^-1/2 A D^-1/2
  std::vector<double> degree;   // D = A 1
};

// Edge weight max(cos, 0)^gamma over the top-k neighbourhoods selected by
// p.mode. Warns once when some node ends up with zero degree; such nodes get
// a zero D^-1/2 entry.
AffinityGraph build_affinity(const EmbeddingMatrix& g, const DiffusionParams& p);

// Symmetric normalization of an arbitrary symmetric non-negative matrix.
AffinityGraph normalize_affinity(CsrMatrix affinity);

struct DiffusionResult {
  std::vector<double> f;
  std::size_t iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

// f^t = alpha S f^{t-1} + (1 - alpha) y from f^0 = y, until the residual
// drops below tol or t_max steps ran. Not converging is reported through the
// result (and a warning), never thrown.
DiffusionResult diffuse(const AffinityGraph& graph, std::span<const double> y,
                        const DiffusionParams& p);

// Seed vector for one query: kernel weights on its k_q nearest gallery nodes,
// l1-normalized. All-zero when every seed similarity is <= 0.
std::vector<double> query_seed(std::span<const double> query_sims, const DiffusionParams& p);

struct DiffusionRanking {
  RankList ranks;
  SimilarityMatrix scores;    // f per query, nq x ng
  std::size_t not_converged = 0;
};

// Ranks by descending f. Nodes the diffusion never reaches (f == 0) follow
// in plain cosine order.
DiffusionRanking diffusion_scores(const EmbeddingMatrix& q, const EmbeddingMatrix& g,
                                  const DiffusionParams& p = {});

RankList diffusion_rerank(const EmbeddingMatrix& q, const EmbeddingMatrix& g,
                          const DiffusionParams& p = {});

}  // namespace dexrank
