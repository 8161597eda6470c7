#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace dexrank {

// Rows whose L2 norm lies within this distance of 1 count as unit rows.
inline constexpr double kUnitNormTolerance = 1e-6;
// Rows with a norm below this are rejected as all-zero.
inline constexpr double kZeroNormThreshold = 1e-12;

/// Dense n x d descriptor matrix, one row per image.
///
/// Immutable once built. The constructor rejects non-finite entries,
/// duplicate row ids and d == 0. `normalized()` is derived from the data:
/// it is true when every row has unit norm within kUnitNormTolerance.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<double> data,
                  std::vector<std::string> row_ids);

  // Row ids default to "0", "1", ... when `row_ids` is empty.
  static EmbeddingMatrix from_rows(const std::vector<std::vector<double>>& rows,
                                   std::vector<std::string> row_ids = {});

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  bool normalized() const noexcept { return normalized_; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  const std::vector<double>& data() const noexcept { return data_; }
  const std::vector<std::string>& row_ids() const noexcept { return row_ids_; }

  // Same ids, new values (shape must match).
  EmbeddingMatrix with_data(std::vector<double> data) const;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 1;
  std::vector<double> data_;
  std::vector<std::string> row_ids_;
  bool normalized_ = true;
};

/// nq x ng matrix of cosine similarities (or any score where larger is better).
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  SimilarityMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Ordered gallery indices for one query, best first.
struct Ranking {
  std::vector<std::size_t> indices;
  std::vector<double> scores;

  std::size_t size() const noexcept { return indices.size(); }
};

using RankList = std::vector<Ranking>;

inline constexpr std::size_t kAll = std::numeric_limits<std::size_t>::max();

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// Scales `v` to unit norm in place; returns false (leaving v untouched) when
// the norm is below kZeroNormThreshold.
bool normalize_in_place(std::span<double> v);

EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& m);

// values[i][j] = <q_i, g_j>. Both inputs must be normalized.
SimilarityMatrix cosine_similarity(const EmbeddingMatrix& q, const EmbeddingMatrix& g);

// Indices of the k largest scores, descending, ties by ascending index.
// k larger than scores.size() clamps.
Ranking rank_scores(std::span<const double> scores, std::size_t k = kAll);

// Same as rank_scores but skips index `exclude` (used for self-exclusion in
// k-NN graphs over a single set).
Ranking rank_scores_excluding(std::span<const double> scores, std::size_t exclude,
                              std::size_t k);

RankList rank_topk(const SimilarityMatrix& s, std::size_t k = kAll);

std::vector<double> mean_rows(const EmbeddingMatrix& m, std::span<const std::size_t> subset);

}  // namespace dexrank
