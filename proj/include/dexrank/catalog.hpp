#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dexrank/core.hpp"

namespace dexrank {

struct ImageRecord {
  std::string image_id;
  std::string tracklet_id;
  std::optional<std::string> identity_id;
  std::optional<std::string> camera_id;

  bool operator==(const ImageRecord&) const = default;
};

/// Per-row metadata binding embedding rows to images, tracklets and
/// (for evaluation) identities.
class CatalogMeta {
 public:
  CatalogMeta() = default;
  explicit CatalogMeta(std::vector<ImageRecord> records);

  std::size_t size() const noexcept { return records_.size(); }
  const ImageRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<ImageRecord>& records() const noexcept { return records_; }

  // True when every record carries the field.
  bool has_identities() const;
  bool has_cameras() const;

  // Throws kInvalidMetadata unless image ids match m.row_ids() positionally.
  void check_matches(const EmbeddingMatrix& m) const;

 private:
  std::vector<ImageRecord> records_;
};

}  // namespace dexrank
