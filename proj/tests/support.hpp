#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include <unistd.h>

#include <torch/torch.h>

#include "share/cube.hpp"

namespace testing {

inline torch::Tensor randn(at::IntArrayRef shape, uint64_t seed, torch::Dtype dtype = torch::kFloat64) {
  share::RandomSource rng(seed, "test");
  return rng.normal(shape, dtype);
}

inline torch::Tensor rand(at::IntArrayRef shape, uint64_t seed, torch::Dtype dtype = torch::kFloat64) {
  share::RandomSource rng(seed, "test");
  return rng.uniform(shape, dtype);
}

inline double dot(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.to(torch::kFloat64) * b.to(torch::kFloat64)).sum().item<double>();
}

inline double max_abs(const torch::Tensor& t) { return t.abs().max().item<double>(); }

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-30}); }

inline bool bit_equal(const torch::Tensor& a, const torch::Tensor& b) {
  return a.sizes() == b.sizes() && a.scalar_type() == b.scalar_type() && torch::equal(a, b);
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("share_test_" + tag + "_" + std::to_string(std::hash<std::string>{}(tag) ^ ::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing
