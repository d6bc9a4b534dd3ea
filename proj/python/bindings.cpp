#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "share/experiment.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const Array& a) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<float*>(a.data()), shape, torch::kFloat32).clone();
}

Array to_array(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat32).contiguous();
  Array out(std::vector<py::ssize_t>(c.sizes().begin(), c.sizes().end()));
  std::memcpy(out.mutable_data(), c.data_ptr<float>(), sizeof(float) * static_cast<size_t>(c.numel()));
  return out;
}

std::shared_ptr<share::LinearOperator> make_operator(const std::string& spec, const std::optional<Array>& mask) {
  auto j = json::parse(spec);
  const std::string kind = j.value("kind", std::string("blur-downsample"));
  if (kind == "inpaint") {
    if (!mask) throw share::ConfigError("inpainting operator needs a mask array");
    return std::make_shared<share::InpaintOperator>(to_tensor(*mask));
  }
  return std::shared_ptr<share::LinearOperator>(share::blur_operator_from_json(j));
}

}  // namespace

PYBIND11_MODULE(_share, m) {
  m.doc() = "Native core of share_hsi";

  // Translators run most recent first: the base class goes first.
  py::register_exception<share::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<share::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<share::ShapeError>(m, "ShapeError", PyExc_ValueError);

  py::class_<share::LinearOperator, std::shared_ptr<share::LinearOperator>>(m, "Operator")
      .def("apply", [](const share::LinearOperator& op, const Array& x) { return to_array(op.apply(to_tensor(x))); })
      .def("adjoint", [](const share::LinearOperator& op, const Array& y) { return to_array(op.adjoint(to_tensor(y))); })
      .def("pseudo_inverse",
           [](const share::LinearOperator& op, const Array& y) { return to_array(op.pseudo_inverse(to_tensor(y))); })
      .def("to_json", [](const share::LinearOperator& op) { return op.to_json().dump(); });

  m.def("make_operator", &make_operator, py::arg("spec"), py::arg("mask") = std::nullopt);

  m.def("synthesize_lowrank_cube", [](int64_t bands, int64_t height, int64_t width, int64_t rank, uint64_t seed) {
    share::RandomSource rng(seed, "python/cube");
    return to_array(share::synthesize_lowrank_cube(bands, height, width, rank, rng).data());
  });
  m.def("column_mask", [](int64_t bands, int64_t height, int64_t width, double ratio, const std::string& pattern,
                          uint64_t seed) {
    share::RandomSource rng(seed, "python/mask");
    return to_array(share::column_mask(bands, height, width, ratio, share::parse_column_pattern(pattern), rng));
  });
  m.def("gaussian_kernel", [](int64_t size, double std) { return to_array(share::gaussian_kernel(size, std)); });
  m.def("corrupt", [](const Array& x, const std::string& noise, uint64_t seed) {
    share::RandomSource rng(seed, "python/noise");
    return to_array(share::corrupt(to_tensor(x), share::NoiseModel::from_json(json::parse(noise)), rng));
  });
  m.def("transform", [](const std::string& action, const Array& x) {
    return to_array(share::act(share::GroupAction::from_json(json::parse(action)), to_tensor(x)));
  });

  m.def("mpsnr", [](const Array& a, const Array& b) { return share::mpsnr(to_tensor(a), to_tensor(b)); });
  m.def("mssim", [](const Array& a, const Array& b) { return share::mssim(to_tensor(a), to_tensor(b)); });
  m.def("sam", [](const Array& a, const Array& b) { return share::sam(to_tensor(a), to_tensor(b)); });

  m.def(
      "restore_single",
      [](const Array& y, std::shared_ptr<share::LinearOperator> op, const std::string& train,
         const std::optional<Array>& reference) {
        auto cfg = share::TrainConfig::from_json(json::parse(train));
        std::optional<torch::Tensor> ref;
        if (reference) ref = to_tensor(*reference);
        share::TrainResult r;
        {
          py::gil_scoped_release release;
          r = share::restore_single(to_tensor(y), *op, cfg, ref);
        }
        return py::make_tuple(to_array(r.output), r.report.to_json().dump());
      },
      py::arg("y"), py::arg("op"), py::arg("train"), py::arg("reference") = std::nullopt);

  m.def("run_experiment", [](const std::string& config_path, const std::string& out_dir) {
    auto cfg = share::ExperimentConfig::load(config_path);
    py::gil_scoped_release release;
    return share::run_experiment(cfg, out_dir).report.to_json().dump();
  });
  m.def("make_fixtures", [](const std::string& out_dir) {
    std::vector<std::string> out;
    for (const auto& p : share::make_fixtures(out_dir)) out.push_back(p.string());
    return out;
  });
}
