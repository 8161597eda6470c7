#include "dexrank/catalog.hpp"

#include <algorithm>
#include <unordered_set>

#include "dexrank/error.hpp"

namespace dexrank {

CatalogMeta::CatalogMeta(std::vector<ImageRecord> records) : records_(std::move(records)) {
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.image_id.empty() || r.tracklet_id.empty()) {
      throw Error(ErrorCode::kInvalidMetadata,
                  "record " + std::to_string(i) + " lacks an image or tracklet id");
    }
    if (!seen.insert(r.image_id).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate image id '" + r.image_id + "'");
    }
  }
}

bool CatalogMeta::has_identities() const {
  return std::all_of(records_.begin(), records_.end(),
                     [](const ImageRecord& r) { return r.identity_id.has_value(); });
}

bool CatalogMeta::has_cameras() const {
  return std::all_of(records_.begin(), records_.end(),
                     [](const ImageRecord& r) { return r.camera_id.has_value(); });
}

void CatalogMeta::check_matches(const EmbeddingMatrix& m) const {
  if (m.rows() != records_.size()) {
    throw Error(ErrorCode::kInvalidMetadata,
                std::to_string(records_.size()) + " metadata records for " +
                    std::to_string(m.rows()) + " embedding rows");
  }
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].image_id != m.row_ids()[i]) {
      throw Error(ErrorCode::kInvalidMetadata,
                  "row " + std::to_string(i) + ": metadata id '" + records_[i].image_id +
                      "' vs embedding id '" + m.row_ids()[i] + "'");
    }
  }
}

}  // namespace dexrank
