#pragma once

#include <cstddef>
#include <vector>

#include "dexrank/core.hpp"

namespace dexrank {

enum class DbaWeighting { kUniform, kSimilarity };

struct DbaParams {
  std::size_t k = 10;
  bool include_self = true;
  DbaWeighting weighting = DbaWeighting::kUniform;
};

// k nearest other rows of every gallery row (self excluded by index, global
// tie rule). Requires k < g.rows().
RankList gallery_knn(const EmbeddingMatrix& g, std::size_t k);

// Database-side augmentation: every row becomes the (uniform or
// cosine-weighted) mean of itself (optional) and its k nearest other rows,
// renormalized. Reads only the original matrix, so rows never cascade.
EmbeddingMatrix dba_augment(const EmbeddingMatrix& g, const DbaParams& p = {});

}  // namespace dexrank
