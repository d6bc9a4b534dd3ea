#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

#include "share/physics.hpp"

namespace share {

enum class DasaResidual { Additive, Gated };

struct NetworkConfig {
  int64_t bands = 8;      // c: input/output spectral bands
  int64_t channels = 32;  // C: internal channel count after the first 2D conv
  int64_t depth = 2;      // R: spectral depth of the lifted 4D tensor
  int64_t stages = 2;     // n: encoder/decoder stages
  int64_t patch = 8;      // P: DASA patch size
  int64_t rank = 4;       // K: memory-bank rank
  int64_t bank = 256;     // B: memory-bank size
  uint64_t init_seed = 0;
  bool use_dasa = true;
  DasaResidual residual = DasaResidual::Additive;

  /// Throws ConfigError unless C, H, W are divisible by 2^n and P divides the
  /// spatial size at every decoder scale.
  void validate(int64_t height, int64_t width) const;
  void validate() const;

  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
};

/// Dynamic adaptive spectral attention over a [N, d, ch, h, w] feature.
///
/// Depth is folded into channels, each P x P patch is average-pooled into a
/// d*ch descriptor, projected to rank K, and re-expressed through the memory
/// bank M (K x B): I = softmax(X_k M), X_l = I M^T. X_l is projected back to
/// d*ch, broadcast over its patch and added to the input.
class DasaImpl : public torch::nn::Module {
 public:
  DasaImpl(int64_t features, int64_t patch, int64_t rank, int64_t bank,
           DasaResidual residual = DasaResidual::Additive);

  torch::Tensor forward(const torch::Tensor& x);
  /// Attention weights I for every patch, shape [N, h/P, w/P, B].
  torch::Tensor attention(const torch::Tensor& x);

  torch::nn::Linear down{nullptr};
  torch::nn::Linear up{nullptr};
  torch::Tensor memory;  // [K, B]

 private:
  torch::Tensor descriptors(const torch::Tensor& x);
  int64_t features_, patch_;
  DasaResidual residual_;
};
TORCH_MODULE(Dasa);

/// 3D conv (3x3x3, same padding) + batch norm (batch statistics) + ReLU.
class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int64_t in, int64_t out);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv3d conv{nullptr};
  torch::nn::BatchNorm3d norm{nullptr};
};
TORCH_MODULE(ConvBlock);

/// The restoration network. `forward` takes the range-space estimate H^+ y
/// ([N, c, H, W] or [c, H, W]) and returns a cube of the same shape.
class ShareNetImpl : public torch::nn::Module {
 public:
  explicit ShareNetImpl(NetworkConfig config);

  torch::Tensor forward(const torch::Tensor& z);
  const NetworkConfig& config() const { return config_; }

  torch::nn::Conv2d head{nullptr};
  torch::nn::Conv3d lift{nullptr};
  torch::nn::ModuleList encoders;
  torch::nn::ModuleList upsamplers;
  torch::nn::ModuleList attentions;
  torch::nn::ModuleList decoders;
  torch::nn::Conv3d collapse{nullptr};
  torch::nn::Conv2d tail{nullptr};

 private:
  NetworkConfig config_;
};
TORCH_MODULE(ShareNet);

/// Build and deterministically initialize a network from its config.
/// Conv and linear weights uniform in +-1/sqrt(fan_in); biases zero; batch-norm
/// scale 1; memory bank N(0, 1)/sqrt(K).
ShareNet make_network(const NetworkConfig& config);
void init_parameters(ShareNet& net, uint64_t seed);

int64_t parameter_count(const ShareNet& net);

/// f(y) = net(H^+ y), batching a 3D measurement to [1, c, h, w] and back.
torch::Tensor restore(ShareNet& net, const LinearOperator& op, const torch::Tensor& y);

/// Checkpoint container: "SHARECKP" magic, uint32 version, uint64 header
/// length, JSON header {config, dtype, tensors: [{name, shape, offset}]},
/// then the tensors as contiguous little-endian payloads.
void save_checkpoint(const ShareNet& net, const std::filesystem::path& path,
                     const nlohmann::json& extra = {});
ShareNet load_checkpoint(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

/// Deep copy of all parameters and buffers (the copy-on-checkpoint snapshot).
std::vector<torch::Tensor> snapshot_parameters(const ShareNet& net);
void restore_parameters(ShareNet& net, const std::vector<torch::Tensor>& snapshot);

}  // namespace share
