#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <doctest.h>

#include "evego/errors.hpp"

// Asserts that `expr` throws evego::Error with the given code.
#define CHECK_ERROR_CODE(expr, expected_code)                      \
  do {                                                            \
    bool thrown_ = false;                                         \
    try {                                                         \
      (void)(expr);                                               \
    } catch (const evego::Error& e_) {                            \
      thrown_ = true;                                             \
      CHECK_MESSAGE(e_.code() == (expected_code), e_.what());     \
    }                                                             \
    CHECK_MESSAGE(thrown_, "expected evego::Error from " #expr);  \
  } while (0)

namespace testing {

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("evego_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace testing
