#pragma once

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

#include "dexrank/error.hpp"

namespace testutil {

// Code of the dexrank::Error thrown by `fn`; fails the test when nothing is
// thrown.
template <typename Fn>
dexrank::ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const dexrank::Error& e) {
    return e.code();
  }
  FAIL("expected dexrank::Error");
  return dexrank::ErrorCode::kIoError;
}

// Fresh scratch directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("dexrank_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Silences library warnings for the lifetime of the object.
class QuietWarnings {
 public:
  QuietWarnings() : previous_(dexrank::set_warning_handler([](std::string_view) {})) {}
  ~QuietWarnings() { dexrank::set_warning_handler(previous_); }

 private:
  dexrank::WarningHandler previous_;
};

}  // namespace testutil
