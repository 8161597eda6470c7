#include "dexrank/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "dexrank/error.hpp"

namespace dexrank {

namespace {

void require_identities(const CatalogMeta& meta, const char* what) {
  if (!meta.has_identities()) {
    throw Error(ErrorCode::kInvalidMetadata,
                std::string(what) + " metadata lacks identity labels; cannot evaluate");
  }
}

double ap_truncated(const std::vector<bool>& ranked, std::size_t total, std::size_t k) {
  std::vector<bool> head(ranked.begin(),
                         ranked.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranked.size())));
  return average_precision(head, total);
}

}  // namespace

double average_precision(const std::vector<bool>& ranked_relevance, std::size_t total_relevant) {
  if (total_relevant == 0) throw Error(ErrorCode::kNoRelevant, "query has no relevant items");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t pos = 0; pos < ranked_relevance.size(); ++pos) {
    if (!ranked_relevance[pos]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
  }
  return sum / static_cast<double>(total_relevant);
}

std::optional<std::size_t> first_hit(const std::vector<bool>& ranked_relevance) {
  const auto it = std::find(ranked_relevance.begin(), ranked_relevance.end(), true);
  if (it == ranked_relevance.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ranked_relevance.begin());
}

std::vector<QueryRelevance> relevance(const RankList& ranks, const CatalogMeta& queries,
                                      const CatalogMeta& gallery, bool same_camera_filter) {
  require_identities(queries, "query");
  require_identities(gallery, "gallery");
  if (ranks.size() != queries.size()) {
    throw Error(ErrorCode::kInvalidMetadata, std::to_string(ranks.size()) + " rank lists for " +
                                                 std::to_string(queries.size()) + " queries");
  }
  if (same_camera_filter && (!queries.has_cameras() || !gallery.has_cameras())) {
    throw Error(ErrorCode::kInvalidMetadata, "same-camera filtering needs camera ids");
  }
  std::vector<QueryRelevance> out(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    const auto& qrec = queries[i];
    auto filtered = [&](const ImageRecord& grec) {
      return same_camera_filter && grec.identity_id == qrec.identity_id &&
             grec.camera_id == qrec.camera_id;
    };
    for (const auto& grec : gallery.records()) {
      if (!filtered(grec) && grec.identity_id == qrec.identity_id) ++out[i].total_relevant;
    }
    for (std::size_t j : ranks[i].indices) {
      if (j >= gallery.size()) {
        throw Error(ErrorCode::kInvalidMetadata, "ranked index outside gallery");
      }
      const auto& grec = gallery[j];
      if (filtered(grec)) continue;
      out[i].ranked.push_back(grec.identity_id == qrec.identity_id);
    }
  }
  return out;
}

double cmc_at(const RankList& ranks, const CatalogMeta& queries, const CatalogMeta& gallery,
              std::size_t k) {
  EvalOptions opt;
  opt.cmc_ranks = {k};
  opt.map_at.clear();
  return evaluate(ranks, queries, gallery, opt).cmc.at(k);
}

EvalReport evaluate(const RankList& ranks, const CatalogMeta& queries, const CatalogMeta& gallery,
                    const EvalOptions& options) {
  if (ranks.empty()) throw Error(ErrorCode::kEmptyEval, "no queries to evaluate");
  const auto rel = relevance(ranks, queries, gallery, options.same_camera_filter);

  EvalReport r;
  for (std::size_t k : options.cmc_ranks) r.cmc[k] = 0.0;
  for (std::size_t k : options.map_at) r.map_at_k[k] = 0.0;
  for (std::size_t i = 0; i < rel.size(); ++i) {
    const auto& qr = rel[i];
    if (qr.total_relevant == 0) {
      ++r.excluded;
      continue;
    }
    const double ap = average_precision(qr.ranked, qr.total_relevant);
    r.scored_queries.push_back(i);
    r.per_query_ap.push_back(ap);
    r.map_full += ap;
    for (auto& [k, acc] : r.map_at_k) {
      const std::size_t denom = options.denominator == MapAtKDenominator::kAllRelevant
                                    ? qr.total_relevant
                                    : std::min(qr.total_relevant, k);
      acc += ap_truncated(qr.ranked, denom, k);
    }
    const auto hit = first_hit(qr.ranked);
    for (auto& [k, acc] : r.cmc) {
      if (hit && *hit < k) acc += 1.0;
    }
  }
  if (r.excluded > 0) {
    warn("evaluate: " + std::to_string(r.excluded) +
         " query(ies) without relevant gallery items excluded");
  }
  if (r.scored_queries.empty()) {
    throw Error(ErrorCode::kEmptyEval, "no query has a relevant gallery item");
  }
  const double n = static_cast<double>(r.scored_queries.size());
  r.map_full /= n;
  for (auto& [k, acc] : r.map_at_k) acc /= n;
  for (auto& [k, acc] : r.cmc) acc /= n;
  return r;
}

std::string report_to_text(const EvalReport& r) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", r.map_full);
  os << "queries   " << r.scored_queries.size() << " scored, " << r.excluded << " excluded\n";
  os << "mAP       " << buf << '\n';
  for (const auto& [k, v] : r.map_at_k) {
    std::snprintf(buf, sizeof buf, "%.4f", v);
    os << "mAP@" << k << std::string(k < 10 ? 5 : k < 100 ? 4 : 3, ' ') << buf << '\n';
  }
  for (const auto& [k, v] : r.cmc) {
    std::snprintf(buf, sizeof buf, "%.4f", v);
    os << "CMC@" << k << std::string(k < 10 ? 5 : k < 100 ? 4 : 3, ' ') << buf << '\n';
  }
  return os.str();
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["map"] = r.map_full;
  auto& mk = j["map_at_k"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.map_at_k) mk[std::to_string(k)] = v;
  auto& cmc = j["cmc"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.cmc) cmc[std::to_string(k)] = v;
  j["scored_queries"] = r.scored_queries.size();
  j["excluded_queries"] = r.excluded;
  j["per_query_ap"] = r.per_query_ap;
  return j.dump(2) + "\n";
}

}  // namespace dexrank
