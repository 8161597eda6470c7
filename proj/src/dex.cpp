#include "dexrank/dex.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "dexrank/error.hpp"

namespace dexrank {

namespace {

void check_expansion_params(std::size_t k, double alpha) {
  if (k < 1) throw Error(ErrorCode::kInvalidParams, "expansion k must be >= 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw Error(ErrorCode::kInvalidParams, "alpha must be a finite value >= 0");
  }
}

std::size_t clamp_k(std::size_t k, std::size_t gallery_size, const char* stage) {
  if (k > gallery_size) {
    warn(std::string(stage) + ": k=" + std::to_string(k) + " exceeds gallery size " +
         std::to_string(gallery_size) + ", clamped");
    return gallery_size;
  }
  return k;
}

// Negative similarities contribute nothing; 0^0 == 1 keeps alpha = 0 an
// unweighted sum.
double qe_weight(double cosine, double alpha) { return std::pow(std::max(cosine, 0.0), alpha); }

// q_hat_i = q_i + sum_{j in order_i[0..k)} w(cos(q_i, g_j)) g_j
EmbeddingMatrix weighted_expand(const EmbeddingMatrix& q, const EmbeddingMatrix& g,
                                const RankList& order, const SimilarityMatrix& sims,
                                std::size_t k, double alpha, bool renormalize) {
  const std::size_t d = q.dim();
  std::vector<double> out = q.data();
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double* qi = out.data() + i * d;
    const auto& idx = order[i].indices;
    const std::size_t take = std::min(k, idx.size());
    for (std::size_t r = 0; r < take; ++r) {
      const std::size_t j = idx[r];
      const double w = qe_weight(sims(i, j), alpha);
      if (w == 0.0) continue;
      auto gj = g.row(j);
      for (std::size_t c = 0; c < d; ++c) qi[c] += w * gj[c];
    }
    if (renormalize && !normalize_in_place({qi, d})) {
      throw Error(ErrorCode::kZeroRow, "expanded query " + std::to_string(i) + " has zero norm");
    }
  }
  return q.with_data(std::move(out));
}

}  // namespace

TrackletTable::TrackletTable(std::vector<TrackletGroup> groups, std::size_t gallery_size)
    : groups_(std::move(groups)), group_of_(gallery_size, gallery_size) {
  for (auto& grp : groups_) {
    if (grp.rows.empty()) {
      throw Error(ErrorCode::kInvalidTracklets, "tracklet '" + grp.id + "' is empty");
    }
    std::sort(grp.rows.begin(), grp.rows.end());
  }
  std::sort(groups_.begin(), groups_.end(), [](const TrackletGroup& a, const TrackletGroup& b) {
    return a.rows.front() < b.rows.front();
  });
  for (std::size_t t = 0; t < groups_.size(); ++t) {
    for (std::size_t row : groups_[t].rows) {
      if (row >= gallery_size) {
        throw Error(ErrorCode::kInvalidTracklets, "tracklet row " + std::to_string(row) +
                                                      " outside gallery of size " +
                                                      std::to_string(gallery_size));
      }
      if (group_of_[row] != gallery_size) {
        throw Error(ErrorCode::kInvalidTracklets,
                    "gallery row " + std::to_string(row) + " belongs to two tracklets");
      }
      group_of_[row] = t;
    }
  }
  for (std::size_t row = 0; row < gallery_size; ++row) {
    if (group_of_[row] == gallery_size) {
      throw Error(ErrorCode::kInvalidTracklets,
                  "gallery row " + std::to_string(row) + " is not in any tracklet");
    }
  }
}

TrackletTable TrackletTable::from_catalog(const CatalogMeta& meta) {
  std::map<std::string, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < meta.size(); ++i) by_id[meta[i].tracklet_id].push_back(i);
  std::vector<TrackletGroup> groups;
  groups.reserve(by_id.size());
  for (auto& [id, rows] : by_id) groups.push_back({id, std::move(rows)});
  return {std::move(groups), meta.size()};
}

TrackletTable TrackletTable::singletons(std::size_t gallery_size) {
  std::vector<TrackletGroup> groups;
  groups.reserve(gallery_size);
  for (std::size_t i = 0; i < gallery_size; ++i) groups.push_back({std::to_string(i), {i}});
  return {std::move(groups), gallery_size};
}

EmbeddingMatrix fuse_ensemble(std::span<const EmbeddingMatrix> members) {
  if (members.empty()) throw Error(ErrorCode::kInconsistentEnsemble, "ensemble has no members");
  const auto& first = members.front();
  for (const auto& m : members) {
    if (m.rows() != first.rows() || m.dim() != first.dim() || m.row_ids() != first.row_ids()) {
      throw Error(ErrorCode::kInconsistentEnsemble,
                  "ensemble members differ in shape or row ids");
    }
  }
  // The mean of a single unit member is the member itself.
  if (members.size() == 1 && first.normalized()) return first;
  const std::size_t n = first.rows();
  const std::size_t d = first.dim();
  const double count = static_cast<double>(members.size());
  std::vector<double> out(n * d);
  std::vector<double> column(members.size());
  for (std::size_t e = 0; e < n * d; ++e) {
    for (std::size_t m = 0; m < members.size(); ++m) column[m] = members[m].data()[e];
    // Sorted summation: the sum does not depend on member order.
    std::sort(column.begin(), column.end());
    double acc = 0.0;
    for (double v : column) acc += v;
    out[e] = acc / count;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!normalize_in_place({out.data() + i * d, d})) {
      throw Error(ErrorCode::kZeroRow, "fused row " + std::to_string(i) + " has zero norm");
    }
  }
  return first.with_data(std::move(out));
}

TrackletGallery tracklet_gallery(const EmbeddingMatrix& g, const TrackletTable& t) {
  if (t.gallery_size() != g.rows()) {
    throw Error(ErrorCode::kInvalidTracklets, "tracklet table covers " +
                                                  std::to_string(t.gallery_size()) +
                                                  " rows, gallery has " + std::to_string(g.rows()));
  }
  const std::size_t d = g.dim();
  std::vector<double> data;
  data.reserve(t.size() * d);
  std::vector<std::string> ids;
  TrackletGallery out;
  out.members.reserve(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    const auto& grp = t[k];
    std::vector<double> mean = mean_rows(g, grp.rows);
    // A singleton of a unit gallery is already its own normalized mean; keep
    // it verbatim so singleton tables reproduce the plain cosine ranking.
    const bool keep = grp.rows.size() == 1 && g.normalized();
    if (!keep && !normalize_in_place(mean)) {
      throw Error(ErrorCode::kZeroRow, "tracklet '" + grp.id + "' averages to zero");
    }
    data.insert(data.end(), mean.begin(), mean.end());
    ids.push_back(grp.id);
    out.members.push_back(grp.rows);
  }
  out.means = EmbeddingMatrix(t.size(), d, std::move(data), std::move(ids));
  return out;
}

Ranking order_by_tracklets(std::span<const double> member_scores,
                           std::span<const double> tracklet_scores, const TrackletTable& t) {
  const Ranking tracklets = rank_scores(tracklet_scores);
  Ranking out;
  out.indices.reserve(member_scores.size());
  out.scores.reserve(member_scores.size());
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < tracklets.size(); ++r) {
    rows = t[tracklets.indices[r]].rows;
    std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      if (member_scores[a] != member_scores[b]) return member_scores[a] > member_scores[b];
      return a < b;
    });
    for (std::size_t row : rows) {
      out.indices.push_back(row);
      out.scores.push_back(tracklets.scores[r]);
    }
  }
  return out;
}

RankList tracklet_rerank(const EmbeddingMatrix& q, const EmbeddingMatrix& g,
                         const TrackletTable& t) {
  const TrackletGallery tg = tracklet_gallery(g, t);
  const SimilarityMatrix member_sims = cosine_similarity(q, g);
  const SimilarityMatrix tracklet_sims = cosine_similarity(q, tg.means);
  RankList out(q.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(q.rows()); ++i) {
    const auto row = static_cast<std::size_t>(i);
    out[row] = order_by_tracklets(member_sims.row(row), tracklet_sims.row(row), t);
  }
  return out;
}

RankList pull_tracklets(const SimilarityMatrix& scores, const TrackletTable& t) {
  if (scores.cols() != t.gallery_size()) {
    throw Error(ErrorCode::kInvalidTracklets, "score matrix width does not match tracklet table");
  }
  RankList out(scores.rows());
  std::vector<double> tracklet_scores(t.size());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto row = scores.row(i);
    for (std::size_t k = 0; k < t.size(); ++k) {
      double acc = 0.0;
      for (std::size_t m : t[k].rows) acc += row[m];
      tracklet_scores[k] = acc / static_cast<double>(t[k].rows.size());
    }
    out[i] = order_by_tracklets(row, tracklet_scores, t);
  }
  return out;
}

EmbeddingMatrix dex_expand(const EmbeddingMatrix& q, const EmbeddingMatrix& g,
                           const TrackletTable& t, const DexParams& p) {
  check_expansion_params(p.k, p.alpha);
  const std::size_t k = clamp_k(p.k, g.rows(), "dex");
  const RankList order = tracklet_rerank(q, g, t);
  const SimilarityMatrix sims = cosine_similarity(q, g);
  return weighted_expand(q, g, order, sims, k, p.alpha, p.renormalize);
}

EmbeddingMatrix alpha_qe_expand(const EmbeddingMatrix& q, const EmbeddingMatrix& g,
                                std::size_t k, double alpha, bool renormalize) {
  check_expansion_params(k, alpha);
  k = clamp_k(k, g.rows(), "alpha_qe");
  const SimilarityMatrix sims = cosine_similarity(q, g);
  const RankList order = rank_topk(sims, k);
  return weighted_expand(q, g, order, sims, k, alpha, renormalize);
}

EmbeddingMatrix aqe_expand(const EmbeddingMatrix& q, const EmbeddingMatrix& g, std::size_t k) {
  check_expansion_params(k, 0.0);
  k = clamp_k(k, g.rows(), "aqe");
  const SimilarityMatrix sims = cosine_similarity(q, g);
  const RankList order = rank_topk(sims, k);
  const std::size_t d = q.dim();
  std::vector<double> out = q.data();
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double* qi = out.data() + i * d;
    for (std::size_t j : order[i].indices) {
      auto gj = g.row(j);
      for (std::size_t c = 0; c < d; ++c) qi[c] += gj[c];
    }
    const double count = static_cast<double>(order[i].size() + 1);
    for (std::size_t c = 0; c < d; ++c) qi[c] /= count;
    if (!normalize_in_place({qi, d})) {
      throw Error(ErrorCode::kZeroRow, "expanded query " + std::to_string(i) + " has zero norm");
    }
  }
  return q.with_data(std::move(out));
}

}  // namespace dexrank
