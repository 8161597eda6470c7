#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dexrank/catalog.hpp"
#include "dexrank/core.hpp"

// Dual embedding expansion: ensemble fusion, tracklet-ordered gallery
// ranking and alpha-weighted query expansion over that ranking. AQE and
// alpha-QE over a plain cosine ranking live here as the comparison baselines.
namespace dexrank {

/// One per (model, scale) pair; all members share shape and row ids.
using EnsembleInput = std::vector<EmbeddingMatrix>;

struct TrackletGroup {
  std::string id;
  std::vector<std::size_t> rows;  // ascending
};

/// Partition of gallery rows into tracklets.
///
/// Groups are kept in order of their smallest member row, which makes the
/// tracklet index a deterministic tie-breaker.
class TrackletTable {
 public:
  TrackletTable() = default;
  // Throws kInvalidTracklets unless `groups` partition [0, gallery_size).
  TrackletTable(std::vector<TrackletGroup> groups, std::size_t gallery_size);

  static TrackletTable from_catalog(const CatalogMeta& meta);
  static TrackletTable singletons(std::size_t gallery_size);

  std::size_t size() const noexcept { return groups_.size(); }
  std::size_t gallery_size() const noexcept { return group_of_.size(); }
  const std::vector<TrackletGroup>& groups() const noexcept { return groups_; }
  const TrackletGroup& operator[](std::size_t t) const { return groups_[t]; }
  std::size_t group_of(std::size_t row) const { return group_of_[row]; }

 private:
  std::vector<TrackletGroup> groups_;
  std::vector<std::size_t> group_of_;
};

struct DexParams {
  std::size_t k = 20;
  double alpha = 2.0;
  bool renormalize = true;
};

struct TrackletGallery {
  EmbeddingMatrix means;                         // one unit row per tracklet, ids = tracklet ids
  std::vector<std::vector<std::size_t>> members;  // tracklet row -> gallery rows
};

// Mean across members, then L2 normalization. Output dimension equals the
// member dimension whatever the ensemble size.
EmbeddingMatrix fuse_ensemble(std::span<const EmbeddingMatrix> members);

TrackletGallery tracklet_gallery(const EmbeddingMatrix& g, const TrackletTable& t);

// Expands a tracklet-level ordering back to gallery rows. Tracklets go by
// descending tracklet score (ties: tracklet index); members of a tracklet go
// by descending member score (ties: gallery index). Every member carries its
// tracklet's score.
Ranking order_by_tracklets(std::span<const double> member_scores,
                           std::span<const double> tracklet_scores, const TrackletTable& t);

// Ranks tracklets by cosine to the tracklet mean, members by direct cosine.
// Each output row is a full permutation of the gallery.
RankList tracklet_rerank(const EmbeddingMatrix& q, const EmbeddingMatrix& g,
                         const TrackletTable& t);

// Tracklet pull after a re-ranker: tracklet score is the mean score of its
// members in `scores` (nq x ng, larger is better).
RankList pull_tracklets(const SimilarityMatrix& scores, const TrackletTable& t);

// q_hat = q + sum over the top-k tracklet-ordered gallery rows of
// g * max(cos, 0)^alpha, renormalized when p.renormalize.
EmbeddingMatrix dex_expand(const EmbeddingMatrix& q, const EmbeddingMatrix& g,
                           const TrackletTable& t, const DexParams& p = {});

// Mean of the query and its top-k cosine neighbours, renormalized.
EmbeddingMatrix aqe_expand(const EmbeddingMatrix& q, const EmbeddingMatrix& g, std::size_t k);

// dex_expand over the plain cosine ranking.
EmbeddingMatrix alpha_qe_expand(const EmbeddingMatrix& q, const EmbeddingMatrix& g,
                                std::size_t k, double alpha, bool renormalize = true);

}  // namespace dexrank
