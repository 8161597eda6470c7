#include "dexrank/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>
#include <utility>

#include "dexrank/error.hpp"

namespace dexrank {

namespace {

bool rows_are_unit(std::size_t rows, std::size_t dim, const std::vector<double>& data) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double n = l2_norm({data.data() + i * dim, dim});
    if (std::abs(n - 1.0) > kUnitNormTolerance) return false;
  }
  return true;
}

// Higher score first, then lower index.
struct ScoreOrder {
  std::span<const double> scores;
  bool operator()(std::size_t a, std::size_t b) const {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  }
};

Ranking take_top(std::span<const double> scores, std::vector<std::size_t> candidates,
                 std::size_t k) {
  const std::size_t take = std::min(k, candidates.size());
  ScoreOrder order{scores};
  if (take < candidates.size()) {
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                      candidates.end(), order);
    candidates.resize(take);
  } else {
    std::sort(candidates.begin(), candidates.end(), order);
  }
  Ranking r;
  r.scores.reserve(take);
  for (std::size_t idx : candidates) r.scores.push_back(scores[idx]);
  r.indices = std::move(candidates);
  return r;
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<double> data,
                                 std::vector<std::string> row_ids)
    : rows_(rows), dim_(dim), data_(std::move(data)), row_ids_(std::move(row_ids)) {
  if (dim_ == 0) throw Error(ErrorCode::kDimensionMismatch, "embedding dimension must be >= 1");
  if (data_.size() != rows_ * dim_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "data holds " + std::to_string(data_.size()) + " values, expected " +
                    std::to_string(rows_ * dim_));
  }
  if (row_ids_.size() != rows_) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(row_ids_.size()) + " row ids for " + std::to_string(rows_) + " rows");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw Error(ErrorCode::kNonFinite, "non-finite value in row " + std::to_string(i / dim_));
    }
  }
  std::unordered_set<std::string_view> seen;
  seen.reserve(rows_);
  for (const auto& id : row_ids_) {
    if (!seen.insert(id).second) throw Error(ErrorCode::kDuplicateId, "duplicate row id '" + id + "'");
  }
  normalized_ = rows_are_unit(rows_, dim_, data_);
}

EmbeddingMatrix EmbeddingMatrix::from_rows(const std::vector<std::vector<double>>& rows,
                                           std::vector<std::string> row_ids) {
  if (rows.empty()) throw Error(ErrorCode::kDimensionMismatch, "from_rows needs at least one row");
  const std::size_t dim = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * dim);
  for (const auto& r : rows) {
    if (r.size() != dim) throw Error(ErrorCode::kDimensionMismatch, "ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  if (row_ids.empty()) {
    row_ids.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) row_ids.push_back(std::to_string(i));
  }
  return {rows.size(), dim, std::move(data), std::move(row_ids)};
}

EmbeddingMatrix EmbeddingMatrix::with_data(std::vector<double> data) const {
  return {rows_, dim_, std::move(data), row_ids_};
}

SimilarityMatrix::SimilarityMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw Error(ErrorCode::kDimensionMismatch, "similarity matrix shape mismatch");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

bool normalize_in_place(std::span<double> v) {
  const double n = l2_norm(v);
  if (n < kZeroNormThreshold) return false;
  for (double& x : v) x /= n;
  return true;
}

EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& m) {
  std::vector<double> out = m.data();
  const std::size_t d = m.dim();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (!normalize_in_place({out.data() + i * d, d})) {
      throw Error(ErrorCode::kZeroRow, "row " + std::to_string(i) + " has zero norm");
    }
  }
  return m.with_data(std::move(out));
}

SimilarityMatrix cosine_similarity(const EmbeddingMatrix& q, const EmbeddingMatrix& g) {
  if (q.dim() != g.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query dim " + std::to_string(q.dim()) + " vs gallery dim " + std::to_string(g.dim()));
  }
  if (!q.normalized() || !g.normalized()) {
    throw Error(ErrorCode::kNotNormalized, "cosine_similarity requires unit-norm rows");
  }
  const std::size_t nq = q.rows();
  const std::size_t ng = g.rows();
  std::vector<double> values(nq * ng);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(nq); ++i) {
    const auto qi = q.row(static_cast<std::size_t>(i));
    double* out = values.data() + static_cast<std::size_t>(i) * ng;
    for (std::size_t j = 0; j < ng; ++j) out[j] = dot(qi, g.row(j));
  }
  return {nq, ng, std::move(values)};
}

Ranking rank_scores(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return take_top(scores, std::move(idx), k);
}

Ranking rank_scores_excluding(std::span<const double> scores, std::size_t exclude,
                              std::size_t k) {
  std::vector<std::size_t> idx;
  idx.reserve(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j != exclude) idx.push_back(j);
  }
  return take_top(scores, std::move(idx), k);
}

RankList rank_topk(const SimilarityMatrix& s, std::size_t k) {
  RankList out(s.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(s.rows()); ++i) {
    out[static_cast<std::size_t>(i)] = rank_scores(s.row(static_cast<std::size_t>(i)), k);
  }
  return out;
}

std::vector<double> mean_rows(const EmbeddingMatrix& m, std::span<const std::size_t> subset) {
  if (subset.empty()) throw Error(ErrorCode::kEmptySubset, "mean_rows over an empty subset");
  for (std::size_t idx : subset) {
    if (idx >= m.rows()) throw Error(ErrorCode::kEmptySubset, "subset index out of range");
  }
  // Seeded from the first row so a singleton mean reproduces the row bit for bit.
  auto first = m.row(subset.front());
  std::vector<double> acc(first.begin(), first.end());
  for (std::size_t s = 1; s < subset.size(); ++s) {
    auto r = m.row(subset[s]);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += r[c];
  }
  if (subset.size() > 1) {
    const double n = static_cast<double>(subset.size());
    for (double& x : acc) x /= n;
  }
  return acc;
}

}  // namespace dexrank
