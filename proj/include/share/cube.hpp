#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "share/errors.hpp"

namespace share {

/// Affine map from normalized values back to native units:
/// native = lo + normalized * (hi - lo).
struct ValueRange {
  double lo = 0.0;
  double hi = 1.0;

  bool operator==(const ValueRange&) const = default;
};

/// A hyperspectral cube of shape [bands, height, width], stored as a
/// contiguous float32 tensor.
///
/// The cube is immutable: every operation returns a new cube. `range` records
/// how the stored values map back to native units; `band_ranges` is non-empty
/// only after per-band normalization and then overrides `range`.
class HsiCube {
 public:
  HsiCube() = default;
  explicit HsiCube(torch::Tensor data, ValueRange range = {},
                   std::vector<double> wavelengths = {}, std::string name = {},
                   std::vector<ValueRange> band_ranges = {});

  const torch::Tensor& data() const { return data_; }
  int64_t bands() const { return data_.size(0); }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }
  int64_t numel() const { return data_.numel(); }

  const ValueRange& range() const { return range_; }
  const std::vector<ValueRange>& band_ranges() const { return band_ranges_; }
  const std::vector<double>& wavelengths() const { return wavelengths_; }
  const std::string& name() const { return name_; }

  /// Copy of the values as a flat band-sequential vector.
  std::vector<float> to_vector() const;

  /// Same metadata, new payload (must have the same shape).
  HsiCube with_data(torch::Tensor data) const;

  bool empty() const { return !data_.defined(); }

 private:
  torch::Tensor data_;
  ValueRange range_;
  std::vector<double> wavelengths_;
  std::string name_;
  std::vector<ValueRange> band_ranges_;
};

/// Map a cube back to native units using its recorded range(s).
HsiCube denormalize(const HsiCube& cube);

/// Named, seeded random stream. Identical (seed, stream_id) pairs reproduce
/// identical sequences; distinct stream ids are decorrelated by hashing.
class RandomSource {
 public:
  RandomSource(uint64_t seed, std::string stream_id);

  uint64_t seed() const { return seed_; }
  const std::string& stream_id() const { return stream_id_; }

  /// A fresh source on the sub-stream "<stream_id>/<name>".
  RandomSource derive(std::string_view name) const;

  torch::Generator& generator() { return generator_; }

  torch::Tensor normal(at::IntArrayRef shape, torch::Dtype dtype = torch::kFloat32);
  torch::Tensor uniform(at::IntArrayRef shape, torch::Dtype dtype = torch::kFloat32);
  torch::Tensor rademacher(at::IntArrayRef shape, torch::Dtype dtype = torch::kFloat32);
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);

 private:
  uint64_t seed_;
  std::string stream_id_;
  torch::Generator generator_;
};

/// 64-bit mixing of a seed with a stream name (splitmix64 over FNV-1a).
uint64_t stream_seed(uint64_t seed, std::string_view stream_id);

}  // namespace share
