#include "dexrank/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>
#include <openssl/evp.h>

#include "dexrank/error.hpp"

namespace dexrank {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kFormatName = "dexrank-embeddings";
constexpr int kFormatVersion = 1;

template <typename UInt>
UInt to_little(UInt v) {
  if constexpr (std::endian::native == std::endian::big) {
    UInt out = 0;
    for (std::size_t b = 0; b < sizeof(UInt); ++b) {
      out = static_cast<UInt>((out << 8) | ((v >> (8 * b)) & 0xFF));
    }
    return out;
  } else {
    return v;
  }
}

template <typename Float, typename UInt>
void append_values(std::string& out, const std::vector<double>& data) {
  out.reserve(out.size() + data.size() * sizeof(Float));
  for (double v : data) {
    const UInt bits = to_little(std::bit_cast<UInt>(static_cast<Float>(v)));
    char buf[sizeof(UInt)];
    std::memcpy(buf, &bits, sizeof bits);
    out.append(buf, sizeof buf);
  }
}

template <typename Float, typename UInt>
std::vector<double> decode_values(std::string_view bytes) {
  std::vector<double> out(bytes.size() / sizeof(UInt));
  for (std::size_t i = 0; i < out.size(); ++i) {
    UInt bits;
    std::memcpy(&bits, bytes.data() + i * sizeof(UInt), sizeof bits);
    out[i] = static_cast<double>(std::bit_cast<Float>(to_little(bits)));
  }
  return out;
}

std::string_view precision_tag(Precision p) {
  return p == Precision::kFloat32 ? "float32" : "float64";
}

std::size_t precision_width(Precision p) { return p == Precision::kFloat32 ? 4 : 8; }

[[noreturn]] void malformed(const fs::path& path, const std::string& why) {
  throw Error(ErrorCode::kMalformedHeader, path.string() + ": " + why);
}

void check_field(std::string_view field, std::size_t row) {
  if (field.find_first_of(",\r\n") != std::string_view::npos) {
    throw Error(ErrorCode::kInvalidMetadata,
                "metadata row " + std::to_string(row) + " has a field containing ',' or a newline");
  }
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = end + 1;
  }
  return out;
}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::kIoError, "read failed: " + path.string());
  return std::move(ss).str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::kIoError, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoError, "rename to " + path.string() + ": " + ec.message());
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIoError, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

fs::path payload_path_for(const fs::path& header, Precision precision) {
  fs::path p = header;
  p.replace_extension(precision == Precision::kFloat32 ? ".f32" : ".f64");
  return p;
}

void save_embeddings(const EmbeddingMatrix& m, const fs::path& header, Precision precision) {
  const fs::path payload = payload_path_for(header, precision);
  if (payload == header) malformed(header, "header path collides with payload path");
  std::string bytes;
  if (precision == Precision::kFloat32) {
    append_values<float, std::uint32_t>(bytes, m.data());
  } else {
    append_values<double, std::uint64_t>(bytes, m.data());
  }
  ordered_json j;
  j["format"] = kFormatName;
  j["version"] = kFormatVersion;
  j["n"] = m.rows();
  j["d"] = m.dim();
  j["precision"] = precision_tag(precision);
  j["normalized"] = m.normalized();
  j["payload"] = payload.filename().string();
  j["row_ids"] = m.row_ids();
  write_file_atomic(payload, bytes);
  write_file_atomic(header, j.dump(2) + "\n");
}

EmbeddingMatrix load_embeddings(const fs::path& header) {
  const std::string text = read_file(header);
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    malformed(header, std::string("invalid JSON: ") + e.what());
  }
  std::size_t n = 0;
  std::size_t d = 0;
  std::string tag;
  bool normalized = false;
  std::string payload_name;
  std::vector<std::string> ids;
  try {
    if (j.at("format").get<std::string>() != kFormatName) malformed(header, "unknown format");
    if (j.at("version").get<int>() != kFormatVersion) malformed(header, "unsupported version");
    n = j.at("n").get<std::size_t>();
    d = j.at("d").get<std::size_t>();
    tag = j.at("precision").get<std::string>();
    normalized = j.at("normalized").get<bool>();
    payload_name = j.at("payload").get<std::string>();
    ids = j.at("row_ids").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    malformed(header, std::string("bad field: ") + e.what());
  }
  Precision precision;
  if (tag == "float32") {
    precision = Precision::kFloat32;
  } else if (tag == "float64") {
    precision = Precision::kFloat64;
  } else {
    malformed(header, "unknown precision '" + tag + "'");
  }
  if (d == 0) malformed(header, "d must be >= 1");
  if (ids.size() != n) malformed(header, "row_ids length differs from n");

  const std::string bytes = read_file(header.parent_path() / payload_name);
  const std::size_t expected = n * d * precision_width(precision);
  if (bytes.size() != expected) {
    throw Error(ErrorCode::kLengthMismatch, header.string() + ": payload has " +
                                                std::to_string(bytes.size()) + " bytes, expected " +
                                                std::to_string(expected));
  }
  std::vector<double> data = precision == Precision::kFloat32
                                 ? decode_values<float, std::uint32_t>(bytes)
                                 : decode_values<double, std::uint64_t>(bytes);
  EmbeddingMatrix m(n, d, std::move(data), std::move(ids));
  if (normalized && !m.normalized()) {
    malformed(header, "header claims normalized rows but payload rows are not unit length");
  }
  return m;
}

std::string metadata_to_csv(const CatalogMeta& meta) {
  bool any_identity = false;
  bool any_camera = false;
  for (const auto& r : meta.records()) {
    any_identity = any_identity || r.identity_id.has_value();
    any_camera = any_camera || r.camera_id.has_value();
  }
  std::string out = "image_id,tracklet_id";
  if (any_identity) out += ",identity_id";
  if (any_camera) out += ",camera_id";
  out += '\n';
  for (std::size_t i = 0; i < meta.size(); ++i) {
    const auto& r = meta[i];
    check_field(r.image_id, i);
    check_field(r.tracklet_id, i);
    out += r.image_id;
    out += ',';
    out += r.tracklet_id;
    if (any_identity) {
      check_field(r.identity_id.value_or(""), i);
      out += ',';
      out += r.identity_id.value_or("");
    }
    if (any_camera) {
      check_field(r.camera_id.value_or(""), i);
      out += ',';
      out += r.camera_id.value_or("");
    }
    out += '\n';
  }
  return out;
}

CatalogMeta metadata_from_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw Error(ErrorCode::kInvalidMetadata, "metadata file is empty");
  const auto header = split(lines.front(), ',');
  std::unordered_map<std::string_view, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) column[header[c]] = c;
  if (!column.contains("image_id") || !column.contains("tracklet_id")) {
    throw Error(ErrorCode::kInvalidMetadata, "metadata header needs image_id and tracklet_id");
  }
  auto optional_col = [&](std::string_view name) -> std::ptrdiff_t {
    const auto it = column.find(name);
    return it == column.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
  };
  const std::ptrdiff_t identity_col = optional_col("identity_id");
  const std::ptrdiff_t camera_col = optional_col("camera_id");

  std::vector<ImageRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = split(lines[i], ',');
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kInvalidMetadata, "metadata line " + std::to_string(i + 1) + " has " +
                                                   std::to_string(fields.size()) + " fields, header has " +
                                                   std::to_string(header.size()));
    }
    ImageRecord r;
    r.image_id = fields[column["image_id"]];
    r.tracklet_id = fields[column["tracklet_id"]];
    if (identity_col >= 0 && !fields[static_cast<std::size_t>(identity_col)].empty()) {
      r.identity_id = std::string(fields[static_cast<std::size_t>(identity_col)]);
    }
    if (camera_col >= 0 && !fields[static_cast<std::size_t>(camera_col)].empty()) {
      r.camera_id = std::string(fields[static_cast<std::size_t>(camera_col)]);
    }
    records.push_back(std::move(r));
  }
  return CatalogMeta(std::move(records));
}

void save_metadata(const CatalogMeta& meta, const fs::path& path) {
  write_file_atomic(path, metadata_to_csv(meta));
}

CatalogMeta load_metadata(const fs::path& path) { return metadata_from_csv(read_file(path)); }

std::string submission_text(const RankList& ranks, const std::vector<std::string>& gallery_ids,
                            std::size_t depth) {
  std::string out;
  for (const auto& r : ranks) {
    const std::size_t take = std::min(depth, r.size());
    for (std::size_t p = 0; p < take; ++p) {
      if (p > 0) out += ' ';
      out += gallery_ids.at(r.indices[p]);
    }
    out += '\n';
  }
  return out;
}

void emit_submission(const RankList& ranks, const std::vector<std::string>& gallery_ids,
                     const fs::path& path, std::size_t depth) {
  write_file_atomic(path, submission_text(ranks, gallery_ids, depth));
}

RankList parse_submission(std::string_view text, const std::vector<std::string>& gallery_ids) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t j = 0; j < gallery_ids.size(); ++j) index[gallery_ids[j]] = j;
  RankList out;
  for (std::string_view line : lines_of(text)) {
    Ranking r;
    if (!line.empty()) {
      for (std::string_view tok : split(line, ' ')) {
        if (tok.empty()) continue;
        const auto it = index.find(tok);
        if (it == index.end()) {
          throw Error(ErrorCode::kInvalidMetadata,
                      "submission names unknown gallery id '" + std::string(tok) + "'");
        }
        r.indices.push_back(it->second);
        r.scores.push_back(-static_cast<double>(r.indices.size()));
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dexrank
