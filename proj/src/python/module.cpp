#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "hetsr/autograd.hpp"
#include "hetsr/checkpoint.hpp"
#include "hetsr/cli.hpp"
#include "hetsr/cost.hpp"
#include "hetsr/image_io.hpp"
#include "hetsr/losses.hpp"
#include "hetsr/metrics.hpp"
#include "hetsr/ops.hpp"
#include "hetsr/resample.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace hetsr;

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from(shape, std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
}

Array to_array(const Tensor& t) {
  const auto values = t.to(DType::f64).to_vector();
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

cli::RunConfig config_from(const std::string& text, bool toy) {
  cli::RunConfig config = toy ? cli::toy_config() : cli::RunConfig{};
  cli::apply_config_text(config, text);
  config.validate();
  return config;
}

py::dict cost_dict(const nn::CostReport& r) {
  py::list layers;
  for (const auto& l : r.layers) {
    layers.append(py::dict("name"_a = l.name, "kind"_a = l.kind, "in_channels"_a = l.in_channels,
                           "out_channels"_a = l.out_channels, "kernel"_a = l.kernel,
                           "part"_a = l.part, "weights"_a = l.weights,
                           "standard_weights"_a = l.standard_weights, "macs"_a = l.macs,
                           "standard_macs"_a = l.standard_macs));
  }
  return py::dict("layers"_a = layers, "total_params"_a = r.total_params,
                  "conv_weights"_a = r.conv_weights,
                  "standard_conv_weights"_a = r.standard_conv_weights, "macs"_a = r.macs,
                  "standard_macs"_a = r.standard_macs,
                  "conv_weight_ratio"_a = r.conv_weight_ratio(), "mac_ratio"_a = r.mac_ratio());
}

}  // namespace

PYBIND11_MODULE(_hetsr, m) {
  m.doc() = "x4 super-resolution with heterogeneous-kernel convolutions";

  m.def("het_conv_reduction", &nn::het_conv_reduction, "kernel"_a, "part"_a,
        "Cost fraction kept by a HetConv: 1/P + (1 - 1/P)/K^2.");

  m.def("psnr", [](const Array& a, const Array& b) {
    return metrics::psnr(to_tensor(a), to_tensor(b));
  }, "a"_a, "b"_a);
  m.def("ssim", [](const Array& a, const Array& b) {
    return metrics::ssim(to_tensor(a), to_tensor(b));
  }, "a"_a, "b"_a, "SSIM on luma; arrays are [C,H,W] or [N,C,H,W] in [0, 1].");
  m.def("gradient_cosine", [](const Array& sr, const Array& hr) {
    return loss::gradient_cosine_loss(to_tensor(sr), to_tensor(hr)).item();
  }, "sr"_a, "hr"_a, "Batch-mean cosine similarity of Sobel gradient fields, [N,3,H,W].");

  m.def("degrade_bicubic", [](const Array& hr) {
    return to_array(data::degrade_bicubic(to_tensor(hr)));
  }, "hr"_a);
  m.def("upscale_bicubic", [](const Array& lr) {
    return to_array(data::upscale_bicubic(to_tensor(lr)));
  }, "lr"_a);
  m.def("load_image", [](const std::string& path) { return to_array(data::load_image(path)); },
        "path"_a);
  m.def("save_image", [](const Array& img, const std::string& path) {
    data::save_image(to_tensor(img), path);
  }, "image"_a, "path"_a);

  m.def("config_keys", &cli::config_keys);
  m.def("format_config", [](const std::string& text, bool toy) {
    return cli::format_config(config_from(text, toy));
  }, "text"_a = "", "toy"_a = false, "Effective config after applying `text` to the defaults.");

  m.def("analyze", [](const std::string& text, bool toy) {
    const auto config = config_from(text, toy);
    Rng rng(0);
    const auto side = config.data.patch / data::kScale;
    const nn::Generator g(config.train.generator, DType::f32, rng);
    const nn::Generator twin(config.train.generator.standard_twin(), DType::f32, rng);
    return py::dict("generator"_a = cost_dict(nn::count_flops(g, {1, 3, side, side})),
                    "standard"_a = cost_dict(nn::count_flops(twin, {1, 3, side, side})));
  }, "text"_a = "", "toy"_a = false);

  m.def("super_resolve", [](const std::string& checkpoint, const Array& lr) {
    const auto state = train::load_checkpoint(checkpoint);
    const Tensor x = to_tensor(lr);
    if (x.ndim() != 3) throw ShapeError("super_resolve: expected [3,H,W]");
    Tensor sr;
    {
      py::gil_scoped_release release;
      NoGradGuard no_grad;
      sr = state->generator.forward(
          reshape(x.to(state->config.dtype), {1, x.dim(0), x.dim(1), x.dim(2)}));
    }
    return to_array(reshape(sr, {sr.dim(1), sr.dim(2), sr.dim(3)}));
  }, "checkpoint"_a, "lr"_a);

  m.def("train", [](const std::string& text, bool toy) {
    const auto config = config_from(text, toy);
    cli::TrainSummary s;
    {
      py::gil_scoped_release release;
      std::ostringstream log;
      s = cli::run_training(config, log);
    }
    return py::dict("iterations"_a = s.iterations, "events"_a = s.events,
                    "val_psnr"_a = s.val_psnr, "val_ssim"_a = s.val_ssim,
                    "bicubic_psnr"_a = s.bicubic_psnr, "bicubic_ssim"_a = s.bicubic_ssim);
  }, "text"_a, "toy"_a = false, "Runs the train command; returns held-out scores.");

  py::register_exception<cli::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
}
