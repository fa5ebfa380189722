#pragma once

// Shared helpers for the test binaries: scratch directories that clean up
// after themselves and an error-code extractor for exception assertions.

#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>

#include "pointdeco/common.hpp"

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("pointdeco_test_" + std::to_string(rd()) + "_" +
            std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

// Runs f, which must throw pointdeco::Error, and returns its code.
template <typename F>
pointdeco::ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const pointdeco::Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected a pointdeco::Error to be thrown");
}
