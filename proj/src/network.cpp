#include "share/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json_keys.hpp"

namespace share {

namespace F = torch::nn::functional;
using nlohmann::json;

void NetworkConfig::validate() const {
  if (bands < 1 || channels < 1 || depth < 1 || stages < 0 || patch < 1 || rank < 1 || bank < 1) {
    throw ConfigError("network config: all sizes must be positive (stages >= 0)");
  }
  const int64_t scale = int64_t{1} << stages;
  if (channels % scale != 0) {
    throw ConfigError("network config: channels C=" + std::to_string(channels) +
                      " must be divisible by 2^stages=" + std::to_string(scale));
  }
}

void NetworkConfig::validate(int64_t height, int64_t width) const {
  validate();
  const int64_t scale = int64_t{1} << stages;
  if (height % scale != 0 || width % scale != 0) {
    throw ConfigError("network config: spatial size " + std::to_string(height) + "x" +
                      std::to_string(width) + " must be divisible by 2^stages=" + std::to_string(scale));
  }
  if (use_dasa) {
    for (int64_t i = 1; i <= stages; ++i) {
      int64_t h = height >> (i - 1), w = width >> (i - 1);
      if (h % patch != 0 || w % patch != 0) {
        throw ConfigError("network config: DASA patch " + std::to_string(patch) +
                          " does not divide decoder scale " + std::to_string(h) + "x" + std::to_string(w));
      }
    }
  }
}

json NetworkConfig::to_json() const {
  return {{"bands", bands},   {"channels", channels}, {"depth", depth},
          {"stages", stages}, {"patch", patch},       {"rank", rank},
          {"bank", bank},     {"init_seed", init_seed}, {"use_dasa", use_dasa},
          {"residual", residual == DasaResidual::Additive ? "additive" : "gated"}};
}

NetworkConfig NetworkConfig::from_json(const json& j) {
  detail::reject_unknown_keys(j,
                              {"bands", "channels", "depth", "stages", "patch", "rank", "bank", "init_seed",
                               "use_dasa", "residual"},
                              "net");
  NetworkConfig c;
  c.bands = j.value("bands", c.bands);
  c.channels = j.value("channels", c.channels);
  c.depth = j.value("depth", c.depth);
  c.stages = j.value("stages", c.stages);
  c.patch = j.value("patch", c.patch);
  c.rank = j.value("rank", c.rank);
  c.bank = j.value("bank", c.bank);
  c.init_seed = j.value("init_seed", c.init_seed);
  c.use_dasa = j.value("use_dasa", c.use_dasa);
  std::string residual = j.value("residual", std::string("additive"));
  if (residual == "additive") c.residual = DasaResidual::Additive;
  else if (residual == "gated") c.residual = DasaResidual::Gated;
  else throw ConfigError("unknown DASA residual '" + residual + "'");
  c.validate();
  return c;
}

// --- DASA ---------------------------------------------------------------------

DasaImpl::DasaImpl(int64_t features, int64_t patch, int64_t rank, int64_t bank, DasaResidual residual)
    : features_(features), patch_(patch), residual_(residual) {
  down = register_module("down", torch::nn::Linear(features, rank));
  up = register_module("up", torch::nn::Linear(rank, features));
  memory = register_parameter("memory", torch::randn({rank, bank}) / std::sqrt(static_cast<double>(rank)));
}

torch::Tensor DasaImpl::descriptors(const torch::Tensor& x) {
  if (x.dim() != 5) throw ShapeError("DASA expects [N, depth, channels, height, width]");
  const int64_t n = x.size(0), f = x.size(1) * x.size(2), h = x.size(3), w = x.size(4);
  if (f != features_) throw ShapeError("DASA feature count mismatch");
  if (h % patch_ != 0 || w % patch_ != 0) {
    throw ShapeError("DASA patch size " + std::to_string(patch_) + " does not divide " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  auto pooled = F::avg_pool2d(x.reshape({n, f, h, w}), F::AvgPool2dFuncOptions(patch_));
  return pooled.permute({0, 2, 3, 1});  // [N, h/P, w/P, d*ch]
}

torch::Tensor DasaImpl::attention(const torch::Tensor& x) {
  auto low_rank = down->forward(descriptors(x));
  return torch::softmax(torch::matmul(low_rank, memory), -1);
}

torch::Tensor DasaImpl::forward(const torch::Tensor& x) {
  auto weights = attention(x);
  auto refined = torch::matmul(weights, memory.t());             // X_l, [N, hp, wp, K]
  auto back = up->forward(refined).permute({0, 3, 1, 2});        // [N, d*ch, hp, wp]
  back = back.repeat_interleave(patch_, 2).repeat_interleave(patch_, 3).reshape(x.sizes());
  if (residual_ == DasaResidual::Gated) return x * torch::sigmoid(back);
  return x + back;
}

// --- blocks -------------------------------------------------------------------

ConvBlockImpl::ConvBlockImpl(int64_t in, int64_t out) {
  conv = register_module("conv", torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 3).padding(1)));
  norm = register_module("norm", torch::nn::BatchNorm3d(torch::nn::BatchNormOptions(out).track_running_stats(false)));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) { return torch::relu(norm(conv(x))); }

ShareNetImpl::ShareNetImpl(NetworkConfig config) : config_(config) {
  config_.validate();
  const int64_t c = config_.bands, C = config_.channels, R = config_.depth;
  head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, C, 3).padding(1)));
  lift = register_module("lift", torch::nn::Conv3d(torch::nn::Conv3dOptions(1, R, 3).padding(1)));
  for (int64_t i = 1; i <= config_.stages; ++i) {
    const int64_t wide = R << i, narrow = R << (i - 1);
    encoders->push_back(ConvBlock(narrow, wide));
    upsamplers->push_back(torch::nn::ConvTranspose3d(torch::nn::ConvTranspose3dOptions(wide, narrow, 2).stride(2)));
    if (config_.use_dasa) {
      attentions->push_back(Dasa(wide * (C >> (i - 1)), config_.patch, config_.rank, config_.bank,
                                 config_.residual));
    }
    decoders->push_back(ConvBlock(wide, narrow));
  }
  register_module("encoders", encoders);
  register_module("upsamplers", upsamplers);
  register_module("attentions", attentions);
  register_module("decoders", decoders);
  collapse = register_module("collapse", torch::nn::Conv3d(torch::nn::Conv3dOptions(R, 1, 3).padding(1)));
  tail = register_module("tail", torch::nn::Conv2d(torch::nn::Conv2dOptions(C, c, 3).padding(1)));
}

torch::Tensor ShareNetImpl::forward(const torch::Tensor& z) {
  const bool batched = z.dim() == 4;
  auto input = batched ? z : z.unsqueeze(0);
  if (input.dim() != 4 || input.size(1) != config_.bands) {
    throw ShapeError("network input must be [N, " + std::to_string(config_.bands) + ", H, W]");
  }
  config_.validate(input.size(2), input.size(3));

  auto x = lift(head(input).unsqueeze(1));  // [N, R, C, H, W]
  std::vector<torch::Tensor> skips{x};
  for (int64_t i = 0; i < config_.stages; ++i) {
    x = F::max_pool3d(encoders[i]->as<ConvBlock>()->forward(x), F::MaxPool3dFuncOptions(2));
    skips.push_back(x);
  }
  for (int64_t i = config_.stages - 1; i >= 0; --i) {
    x = upsamplers[i]->as<torch::nn::ConvTranspose3d>()->forward(x);
    x = torch::cat({x, skips[static_cast<size_t>(i)]}, 1);
    if (config_.use_dasa) x = attentions[i]->as<Dasa>()->forward(x);
    x = decoders[i]->as<ConvBlock>()->forward(x);
  }
  auto out = tail(collapse(x).squeeze(1));
  return batched ? out : out.squeeze(0);
}

// --- init / utilities ---------------------------------------------------------

void init_parameters(ShareNet& net, uint64_t seed) {
  torch::NoGradGuard no_grad;
  RandomSource rng(seed, "init");
  auto fan_in_uniform = [&](torch::Tensor& w, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    w.copy_(rng.uniform(w.sizes(), torch::kFloat64) * (2 * bound) - bound);
  };
  auto receptive = [](const torch::Tensor& w) {
    int64_t r = 1;
    for (int64_t d = 2; d < w.dim(); ++d) r *= w.size(d);
    return r;
  };
  net->apply([&](torch::nn::Module& m) {
    if (auto* c2 = m.as<torch::nn::Conv2d>()) {
      fan_in_uniform(c2->weight, static_cast<double>(c2->weight.size(1) * receptive(c2->weight)));
      c2->bias.zero_();
    } else if (auto* c3 = m.as<torch::nn::Conv3d>()) {
      fan_in_uniform(c3->weight, static_cast<double>(c3->weight.size(1) * receptive(c3->weight)));
      c3->bias.zero_();
    } else if (auto* t3 = m.as<torch::nn::ConvTranspose3d>()) {
      // Stride equals kernel size, so each output voxel sees `in` inputs.
      fan_in_uniform(t3->weight, static_cast<double>(t3->weight.size(0)));
      t3->bias.zero_();
    } else if (auto* bn = m.as<torch::nn::BatchNorm3d>()) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
    } else if (auto* lin = m.as<torch::nn::Linear>()) {
      fan_in_uniform(lin->weight, static_cast<double>(lin->weight.size(1)));
      lin->bias.zero_();
    } else if (auto* dasa = m.as<DasaImpl>()) {
      dasa->memory.copy_(rng.normal(dasa->memory.sizes(), torch::kFloat64) /
                         std::sqrt(static_cast<double>(dasa->memory.size(0))));
    }
  });
}

ShareNet make_network(const NetworkConfig& config) {
  ShareNet net(config);
  init_parameters(net, config.init_seed);
  return net;
}

int64_t parameter_count(const ShareNet& net) {
  int64_t n = 0;
  for (const auto& p : net->parameters()) n += p.numel();
  return n;
}

torch::Tensor restore(ShareNet& net, const LinearOperator& op, const torch::Tensor& y) {
  auto dtype = net->parameters().front().scalar_type();
  return net->forward(op.pseudo_inverse(y).to(dtype));
}

namespace {

constexpr char kMagic[8] = {'S', 'H', 'A', 'R', 'E', 'C', 'K', 'P'};
constexpr uint32_t kCheckpointVersion = 1;

std::vector<std::pair<std::string, torch::Tensor>> named_state(const ShareNet& net) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : net->named_parameters(true)) out.emplace_back(item.key(), item.value());
  for (const auto& item : net->named_buffers(true)) out.emplace_back(item.key(), item.value());
  return out;
}

}  // namespace

void save_checkpoint(const ShareNet& net, const std::filesystem::path& path, const json& extra) {
  static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");
  auto state = named_state(net);
  json header = {{"format", "share-checkpoint"}, {"version", kCheckpointVersion},
                 {"config", net->config().to_json()}};
  if (!extra.is_null()) header["extra"] = extra;
  json tensors = json::array();
  uint64_t offset = 0;
  std::vector<torch::Tensor> payloads;
  for (const auto& [name, t] : state) {
    auto c = t.detach().contiguous();
    std::string dtype = c.scalar_type() == torch::kFloat64 ? "float64" : "float32";
    if (c.scalar_type() != torch::kFloat64 && c.scalar_type() != torch::kFloat32) c = c.to(torch::kFloat32);
    uint64_t nbytes = static_cast<uint64_t>(c.numel()) * c.element_size();
    tensors.push_back({{"name", name}, {"shape", c.sizes().vec()}, {"dtype", dtype},
                       {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
    payloads.push_back(c);
  }
  header["tensors"] = tensors;
  std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  uint64_t len = text.size();
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&kCheckpointVersion), 4);
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : payloads) {
    out.write(static_cast<const char*>(p.data_ptr()), static_cast<std::streamsize>(p.numel() * p.element_size()));
  }
}

ShareNet load_checkpoint(const std::filesystem::path& path, json* extra) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[8];
  uint32_t version = 0;
  uint64_t len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not a share checkpoint: " + path.string());
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("corrupt checkpoint header: " + std::string(e.what()));
  }
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  ShareNet net(NetworkConfig::from_json(header.at("config")));
  bool wide = false;
  for (const auto& t : header.at("tensors")) wide |= t.at("dtype") == "float64";
  if (wide) net->to(torch::kFloat64);

  std::map<std::string, torch::Tensor> by_name;
  for (auto& [name, t] : named_state(net)) by_name[name] = t;
  torch::NoGradGuard no_grad;
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name");
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint tensor '" + name + "' unknown to the network");
    auto shape = t.at("shape").get<std::vector<int64_t>>();
    auto dtype = t.at("dtype") == "float64" ? torch::kFloat64 : torch::kFloat32;
    uint64_t offset = t.at("offset"), nbytes = t.at("nbytes");
    if (offset + nbytes > payload.size()) throw FormatError("checkpoint payload truncated");
    auto src = torch::from_blob(payload.data() + offset, shape, torch::TensorOptions().dtype(dtype)).clone();
    if (src.sizes() != it->second.sizes()) throw FormatError("checkpoint shape mismatch for '" + name + "'");
    it->second.copy_(src);
    by_name.erase(it);
  }
  if (!by_name.empty()) throw FormatError("checkpoint is missing tensor '" + by_name.begin()->first + "'");
  if (extra) *extra = header.value("extra", json{});
  return net;
}

std::vector<torch::Tensor> snapshot_parameters(const ShareNet& net) {
  std::vector<torch::Tensor> out;
  for (auto& [name, t] : named_state(net)) out.push_back(t.detach().clone());
  return out;
}

void restore_parameters(ShareNet& net, const std::vector<torch::Tensor>& snapshot) {
  torch::NoGradGuard no_grad;
  auto state = named_state(net);
  if (state.size() != snapshot.size()) throw ShapeError("snapshot does not match the network");
  for (size_t i = 0; i < state.size(); ++i) state[i].second.copy_(snapshot[i]);
}

}  // namespace share
