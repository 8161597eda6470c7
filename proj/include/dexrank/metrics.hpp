#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dexrank/catalog.hpp"
#include "dexrank/core.hpp"

namespace dexrank {

// Sum over relevant hits of precision-at-hit, divided by total_relevant.
// Relevant items missing from the list contribute nothing, which gives
// mAP@K semantics for a list of length K. Throws kNoRelevant when
// total_relevant == 0.
double average_precision(const std::vector<bool>& ranked_relevance, std::size_t total_relevant);

// 0-based position of the first relevant entry.
std::optional<std::size_t> first_hit(const std::vector<bool>& ranked_relevance);

enum class MapAtKDenominator {
  kAllRelevant,     // keep the full relevant count
  kCappedAtK,       // min(total_relevant, K)
};

struct EvalOptions {
  std::vector<std::size_t> cmc_ranks{1, 5, 10};
  std::vector<std::size_t> map_at{100};
  MapAtKDenominator denominator = MapAtKDenominator::kAllRelevant;
  // Drop gallery items sharing identity and camera with the query.
  bool same_camera_filter = false;
};

struct EvalReport {
  double map_full = 0.0;
  std::map<std::size_t, double> map_at_k;
  std::map<std::size_t, double> cmc;
  std::vector<std::size_t> scored_queries;  // query rows that entered the averages
  std::vector<double> per_query_ap;         // aligned with scored_queries
  std::size_t excluded = 0;                 // queries without relevant items
};

struct QueryRelevance {
  std::vector<bool> ranked;  // relevance of each ranked (non-filtered) item
  std::size_t total_relevant = 0;
};

// Relevance of every query's ranked list against identity labels.
std::vector<QueryRelevance> relevance(const RankList& ranks, const CatalogMeta& queries,
                                      const CatalogMeta& gallery, bool same_camera_filter = false);

// Fraction of queries (with at least one relevant item) whose first relevant
// item is within the top k.
double cmc_at(const RankList& ranks, const CatalogMeta& queries, const CatalogMeta& gallery,
              std::size_t k);

EvalReport evaluate(const RankList& ranks, const CatalogMeta& queries, const CatalogMeta& gallery,
                    const EvalOptions& options = {});

std::string report_to_text(const EvalReport& r);
std::string report_to_json(const EvalReport& r);

}  // namespace dexrank
