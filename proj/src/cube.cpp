#include "share/cube.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cstring>

namespace share {

HsiCube::HsiCube(torch::Tensor data, ValueRange range, std::vector<double> wavelengths,
                 std::string name, std::vector<ValueRange> band_ranges)
    : range_(range),
      wavelengths_(std::move(wavelengths)),
      name_(std::move(name)),
      band_ranges_(std::move(band_ranges)) {
  if (!data.defined() || data.dim() != 3) {
    throw ShapeError("HsiCube needs a 3D [bands, height, width] tensor");
  }
  if (data.size(0) < 1 || data.size(1) < 1 || data.size(2) < 1) {
    throw ShapeError("HsiCube dimensions must all be >= 1");
  }
  data_ = data.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  if (!torch::isfinite(data_).all().item<bool>()) {
    throw DataError("HsiCube contains non-finite values");
  }
  if (!wavelengths_.empty() && static_cast<int64_t>(wavelengths_.size()) != bands()) {
    throw ShapeError("wavelength count does not match band count");
  }
  if (!band_ranges_.empty() && static_cast<int64_t>(band_ranges_.size()) != bands()) {
    throw ShapeError("per-band range count does not match band count");
  }
}

std::vector<float> HsiCube::to_vector() const {
  std::vector<float> out(static_cast<size_t>(numel()));
  std::memcpy(out.data(), data_.data_ptr<float>(), out.size() * sizeof(float));
  return out;
}

HsiCube HsiCube::with_data(torch::Tensor data) const {
  if (data.sizes() != data_.sizes()) {
    throw ShapeError("with_data: shape differs from the original cube");
  }
  return HsiCube(std::move(data), range_, wavelengths_, name_, band_ranges_);
}

HsiCube denormalize(const HsiCube& cube) {
  torch::Tensor x = cube.data().to(torch::kFloat64);
  if (!cube.band_ranges().empty()) {
    std::vector<double> lo, span;
    for (const auto& r : cube.band_ranges()) {
      lo.push_back(r.lo);
      span.push_back(r.hi - r.lo);
    }
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto lo_t = torch::tensor(lo, opts).view({-1, 1, 1});
    auto span_t = torch::tensor(span, opts).view({-1, 1, 1});
    x = lo_t + x * span_t;
  } else {
    x = cube.range().lo + x * (cube.range().hi - cube.range().lo);
  }
  return HsiCube(x, ValueRange{}, cube.wavelengths(), cube.name());
}

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t stream_seed(uint64_t seed, std::string_view stream_id) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : stream_id) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return splitmix64(splitmix64(seed) ^ h);
}

RandomSource::RandomSource(uint64_t seed, std::string stream_id)
    : seed_(seed),
      stream_id_(std::move(stream_id)),
      generator_(at::make_generator<at::CPUGeneratorImpl>(stream_seed(seed_, stream_id_))) {}

RandomSource RandomSource::derive(std::string_view name) const {
  return RandomSource(seed_, stream_id_ + "/" + std::string(name));
}

torch::Tensor RandomSource::normal(at::IntArrayRef shape, torch::Dtype dtype) {
  return torch::randn(shape, generator_, torch::TensorOptions().dtype(dtype));
}

torch::Tensor RandomSource::uniform(at::IntArrayRef shape, torch::Dtype dtype) {
  return torch::rand(shape, generator_, torch::TensorOptions().dtype(dtype));
}

torch::Tensor RandomSource::rademacher(at::IntArrayRef shape, torch::Dtype dtype) {
  auto bits = torch::randint(0, 2, shape, generator_, torch::TensorOptions().dtype(torch::kInt64));
  return (bits * 2 - 1).to(dtype);
}

double RandomSource::uniform(double lo, double hi) {
  double u = torch::rand({1}, generator_, torch::TensorOptions().dtype(torch::kFloat64)).item<double>();
  return lo + (hi - lo) * u;
}

int64_t RandomSource::uniform_int(int64_t lo, int64_t hi) {
  if (hi < lo) throw ParameterError("uniform_int: empty range");
  return torch::randint(lo, hi + 1, {1}, generator_, torch::TensorOptions().dtype(torch::kInt64))
      .item<int64_t>();
}

}  // namespace share
