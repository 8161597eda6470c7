#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dexrank/catalog.hpp"
#include "dexrank/core.hpp"

// File formats.
//
// Embeddings: a JSON sidecar header
//   {"format": "dexrank-embeddings", "version": 1, "n": .., "d": ..,
//    "precision": "float32" | "float64", "normalized": bool,
//    "payload": "<file name next to the header>", "row_ids": [..]}
// plus a raw little-endian row-major payload of exactly n * d * width bytes.
//
// Metadata: comma-separated text with a header row; columns image_id,
// tracklet_id and optionally identity_id, camera_id.
//
// Submission: one line per query, space-separated gallery image ids of the
// top 100 ranks, each line newline-terminated.
namespace dexrank {

enum class Precision { kFloat32, kFloat64 };

inline constexpr std::size_t kSubmissionDepth = 100;

std::string read_file(const std::filesystem::path& path);
// Writes to a temporary sibling and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);

// Payload file name used for a header path: "<stem>.f32" or "<stem>.f64".
std::filesystem::path payload_path_for(const std::filesystem::path& header, Precision precision);

void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& header,
                     Precision precision = Precision::kFloat32);
EmbeddingMatrix load_embeddings(const std::filesystem::path& header);

std::string metadata_to_csv(const CatalogMeta& meta);
CatalogMeta metadata_from_csv(std::string_view text);
void save_metadata(const CatalogMeta& meta, const std::filesystem::path& path);
CatalogMeta load_metadata(const std::filesystem::path& path);

std::string submission_text(const RankList& ranks, const std::vector<std::string>& gallery_ids,
                            std::size_t depth = kSubmissionDepth);
void emit_submission(const RankList& ranks, const std::vector<std::string>& gallery_ids,
                     const std::filesystem::path& path, std::size_t depth = kSubmissionDepth);
// Inverse of submission_text; scores are filled with -rank.
RankList parse_submission(std::string_view text, const std::vector<std::string>& gallery_ids);

}  // namespace dexrank
