#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "dexrank/io.hpp"
#include "support/oracles.hpp"
#include "support/util.hpp"

using namespace dexrank;
using testutil::code_of;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("sha256 of known strings") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("embedding round trip keeps float32 values and ids") {
    TempDir dir("io_rt");
    std::mt19937_64 rng(81);
    const auto m = oracle::random_matrix(rng, 7, 5, "img");
    save_embeddings(m, dir / "e.json");
    CHECK(fs::exists(dir / "e.f32"));
    CHECK(fs::file_size(dir / "e.f32") == 7 * 5 * 4);
    const auto back = load_embeddings(dir / "e.json");
    CHECK(back.row_ids() == m.row_ids());
    CHECK(back.normalized());
    for (std::size_t e = 0; e < m.data().size(); ++e) {
      CHECK(back.data()[e] == static_cast<double>(static_cast<float>(m.data()[e])));
    }

    save_embeddings(m, dir / "w.json", Precision::kFloat64);
    CHECK(load_embeddings(dir / "w.json").data() == m.data());
    const auto header = nlohmann::json::parse(read_file(dir / "w.json"));
    CHECK(header.at("precision") == "float64");
    CHECK(header.at("payload") == "w.f64");
  }

  TEST_CASE("payload is little-endian float32") {
    TempDir dir("io_le");
    save_embeddings(EmbeddingMatrix::from_rows({{1.0, -2.0}}, {"x"}), dir / "e.json");
    const std::string bytes = read_file(dir / "e.f32");
    // 1.0f = 0x3f800000, -2.0f = 0xc0000000
    CHECK(bytes == std::string("\x00\x00\x80\x3f\x00\x00\x00\xc0", 8));
  }

  TEST_CASE("load errors") {
    TempDir dir("io_err");
    save_embeddings(EmbeddingMatrix::from_rows({{1, 0}, {0, 1}}, {"a", "b"}), dir / "e.json");
    const std::string good = read_file(dir / "e.json");

    write_text(dir / "e.f32", std::string(12, '\0'));
    CHECK(code_of([&] { load_embeddings(dir / "e.json"); }) == ErrorCode::kLengthMismatch);

    auto j = nlohmann::ordered_json::parse(good);
    j["row_ids"] = {"a", "a"};
    write_text(dir / "dup.f32", std::string(16, '\0'));
    j["payload"] = "dup.f32";
    j["normalized"] = false;
    write_text(dir / "dup.json", j.dump());
    CHECK(code_of([&] { load_embeddings(dir / "dup.json"); }) == ErrorCode::kDuplicateId);

    write_text(dir / "bad.json", "{ not json");
    CHECK(code_of([&] { load_embeddings(dir / "bad.json"); }) == ErrorCode::kMalformedHeader);

    auto missing = nlohmann::ordered_json::parse(good);
    missing.erase("d");
    write_text(dir / "missing.json", missing.dump());
    CHECK(code_of([&] { load_embeddings(dir / "missing.json"); }) ==
          ErrorCode::kMalformedHeader);

    auto wrong = nlohmann::ordered_json::parse(good);
    wrong["precision"] = "int8";
    write_text(dir / "wrong.json", wrong.dump());
    CHECK(code_of([&] { load_embeddings(dir / "wrong.json"); }) == ErrorCode::kMalformedHeader);

    // Zeros are not unit rows, so a "normalized" claim is contradicted.
    auto claim = nlohmann::ordered_json::parse(good);
    claim["payload"] = "dup.f32";
    write_text(dir / "claim.json", claim.dump());
    CHECK(code_of([&] { load_embeddings(dir / "claim.json"); }) ==
          ErrorCode::kMalformedHeader);

    CHECK(code_of([&] { load_embeddings(dir / "nope.json"); }) == ErrorCode::kIoError);
  }

  TEST_CASE("metadata csv round trip") {
    const CatalogMeta meta({{"i0", "t0", "A", "c1"},
                            {"i1", "t0", "A", std::nullopt},
                            {"i2", "t1", std::nullopt, "c2"}});
    const std::string csv = metadata_to_csv(meta);
    CHECK(csv == "image_id,tracklet_id,identity_id,camera_id\ni0,t0,A,c1\ni1,t0,A,\ni2,t1,,c2\n");
    CHECK(metadata_from_csv(csv).records() == meta.records());

    const CatalogMeta bare(std::vector<ImageRecord>{{"x", "t", std::nullopt, std::nullopt}});
    CHECK(metadata_to_csv(bare) == "image_id,tracklet_id\nx,t\n");
    // Column order in the file does not matter; CRLF is accepted.
    const CatalogMeta swapped = metadata_from_csv("tracklet_id,image_id\r\nt,x\r\n");
    CHECK(swapped.records() == bare.records());
  }

  TEST_CASE("metadata errors") {
    CHECK(code_of([] { metadata_from_csv(""); }) == ErrorCode::kInvalidMetadata);
    CHECK(code_of([] { metadata_from_csv("image_id\nx\n"); }) == ErrorCode::kInvalidMetadata);
    CHECK(code_of([] { metadata_from_csv("image_id,tracklet_id\nx\n"); }) ==
          ErrorCode::kInvalidMetadata);
    CHECK(code_of([] { metadata_from_csv("image_id,tracklet_id\nx,t\nx,u\n"); }) ==
          ErrorCode::kDuplicateId);
    CHECK(code_of([] { metadata_to_csv(CatalogMeta(std::vector<ImageRecord>{{"a,b", "t", std::nullopt, std::nullopt}})); }) ==
          ErrorCode::kInvalidMetadata);

    const CatalogMeta meta(
        std::vector<ImageRecord>{{"a", "t", std::nullopt, std::nullopt}, {"b", "t", std::nullopt, std::nullopt}});
    CHECK(code_of([&] {
            meta.check_matches(EmbeddingMatrix::from_rows({{1, 0}, {0, 1}}, {"b", "a"}));
          }) == ErrorCode::kInvalidMetadata);
  }

  TEST_CASE("submission format") {
    const RankList ranks{{{2, 0, 1}, {0.9, 0.5, 0.1}}, {{1, 2, 0}, {0.9, 0.5, 0.1}}};
    const std::vector<std::string> ids{"a", "b", "c"};
    CHECK(submission_text(ranks, ids) == "c a b\nb c a\n");
    CHECK(submission_text(ranks, ids, 2) == "c a\nb c\n");
    const RankList back = parse_submission("c a b\nb c a\n", ids);
    CHECK(back[0].indices == ranks[0].indices);
    CHECK(back[1].indices == ranks[1].indices);
    CHECK(code_of([&] { parse_submission("z\n", ids); }) == ErrorCode::kInvalidMetadata);
  }

  TEST_CASE("atomic writes replace existing files") {
    TempDir dir("io_atomic");
    write_file_atomic(dir / "f.txt", "one");
    write_file_atomic(dir / "f.txt", "two");
    CHECK(read_file(dir / "f.txt") == "two");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++entries;
    CHECK(entries == 1);
  }
}
