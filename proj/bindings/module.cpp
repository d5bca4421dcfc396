#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "yformer/data.hpp"
#include "yformer/gradcheck.hpp"
#include "yformer/harness.hpp"
#include "yformer/model.hpp"
#include "yformer/presets.hpp"

namespace py = pybind11;
using namespace yformer;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const DoubleArray& arr) {
  if (arr.ndim() < 1 || arr.ndim() > 3)
    throw std::invalid_argument("expected a rank-1..3 array");
  Shape shape;
  shape.rank = int(arr.ndim());
  for (int i = 0; i < shape.rank; ++i)
    shape.dim[size_t(i)] = arr.shape(i);
  std::vector<real> values(static_cast<size_t>(shape.numel()));
  const double* src = arr.data();
  for (size_t i = 0; i < values.size(); ++i) values[i] = static_cast<real>(src[i]);
  return Tensor::from_values(shape, std::move(values));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  const Shape& s = t.shape();
  std::vector<py::ssize_t> dims;
  for (int i = 0; i < s.rank; ++i) dims.push_back(py::ssize_t(s[i]));
  if (dims.empty()) dims.push_back(1);
  py::array_t<double> out(dims);
  double* dst = out.mutable_data();
  const auto vals = t.values();
  for (size_t i = 0; i < vals.size(); ++i) dst[i] = double(vals[i]);
  return out;
}

ConvSpec make_spec(const Tensor& w, int64_t stride, int64_t padding,
                   bool transposed) {
  ConvSpec spec;
  spec.kernel_size = w.shape()[2];
  spec.stride = stride;
  spec.padding = padding;
  spec.in_channels = transposed ? w.shape()[0] : w.shape()[1];
  spec.out_channels = transposed ? w.shape()[1] : w.shape()[0];
  return spec;
}

ModelConfig config_from_kwargs(int64_t history_len, int64_t horizon,
                               int64_t target_channels, int64_t predictor_channels,
                               int64_t future_predictor_channels,
                               int64_t time_features, int64_t d_model,
                               int64_t n_heads, int64_t depth,
                               double sampling_factor, double alpha,
                               bool disable_skips, uint64_t seed) {
  ModelConfig cfg;
  cfg.history_len = history_len;
  cfg.horizon = horizon;
  cfg.target_channels = target_channels;
  cfg.predictor_channels = predictor_channels;
  cfg.future_predictor_channels = future_predictor_channels;
  cfg.time_features = time_features;
  cfg.d_model = d_model;
  cfg.n_heads = n_heads;
  cfg.depth = depth;
  cfg.sampling_factor = sampling_factor;
  cfg.alpha = alpha;
  cfg.disable_skips = disable_skips;
  cfg.seed = seed;
  return cfg;
}

ModelInput input_from_arrays(const DoubleArray& past_values,
                             const DoubleArray& past_time,
                             const DoubleArray& future_values,
                             const DoubleArray& future_time) {
  ModelInput in;
  in.past_values = tensor_from_array(past_values);
  in.past_time = tensor_from_array(past_time);
  in.future_values = tensor_from_array(future_values);
  in.future_time = tensor_from_array(future_time);
  return in;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Yformer forecasting core: tensor ops, model, training utilities";
  m.attr("__version__") = "0.1.0";

  m.def(
      "softmax",
      [](const DoubleArray& x, int axis) {
        Tensor t = tensor_from_array(x);
        if (axis < 0) axis += t.shape().rank;
        return array_from_tensor(softmax(t, axis));
      },
      py::arg("x"), py::arg("axis") = -1);

  m.def(
      "conv1d",
      [](const DoubleArray& x, const DoubleArray& w, const DoubleArray& b,
         int64_t stride, int64_t padding) {
        Tensor wt = tensor_from_array(w);
        return array_from_tensor(conv1d(tensor_from_array(x), wt,
                                        tensor_from_array(b),
                                        make_spec(wt, stride, padding, false)));
      },
      py::arg("x"), py::arg("weight"), py::arg("bias"), py::arg("stride") = 1,
      py::arg("padding") = 0,
      "x: (N,L,C_in), weight: (C_out,C_in,K), cross-correlation with zero pad");

  m.def(
      "conv_transpose1d",
      [](const DoubleArray& x, const DoubleArray& w, const DoubleArray& b,
         int64_t stride, int64_t padding) {
        Tensor wt = tensor_from_array(w);
        return array_from_tensor(
            conv_transpose1d(tensor_from_array(x), wt, tensor_from_array(b),
                             make_spec(wt, stride, padding, true)));
      },
      py::arg("x"), py::arg("weight"), py::arg("bias"), py::arg("stride") = 1,
      py::arg("padding") = 0, "x: (N,L,C_in), weight: (C_in,C_out,K)");

  m.def(
      "maxpool1d",
      [](const DoubleArray& x, int64_t kernel_size, int64_t stride,
         int64_t padding) {
        return array_from_tensor(
            maxpool1d(tensor_from_array(x), kernel_size, stride, padding));
      },
      py::arg("x"), py::arg("kernel_size"), py::arg("stride") = 1,
      py::arg("padding") = 0);

  m.def(
      "layer_norm",
      [](const DoubleArray& x, const DoubleArray& gamma, const DoubleArray& beta,
         double eps) {
        LayerNormParams p;
        p.gamma = tensor_from_array(gamma);
        p.beta = tensor_from_array(beta);
        p.epsilon = static_cast<real>(eps);
        return array_from_tensor(layer_norm(tensor_from_array(x), p));
      },
      py::arg("x"), py::arg("gamma"), py::arg("beta"), py::arg("eps") = 1e-5);

  m.def(
      "elu",
      [](const DoubleArray& x, double alpha) {
        return array_from_tensor(elu(tensor_from_array(x), static_cast<real>(alpha)));
      },
      py::arg("x"), py::arg("alpha") = 1.0);

  m.def(
      "positional_encoding",
      [](int64_t length, int64_t d_model) {
        auto table = InputEmbedding::positional_encoding(length, d_model);
        std::vector<real> vals(table.begin(), table.end());
        return array_from_tensor(
            Tensor::from_values({length, d_model}, std::move(vals)));
      },
      py::arg("length"), py::arg("d_model"));

  m.def(
      "synth_series",
      [](const std::string& kind, int64_t length, double noise_sigma,
         uint64_t seed) {
        RawSeries s =
            synth_series(synth_kind_from_string(kind), length, noise_sigma, seed);
        py::array_t<int64_t> ts(py::ssize_t(s.rows()));
        std::copy(s.timestamps.begin(), s.timestamps.end(), ts.mutable_data());
        std::vector<real> vals(s.columns[0].begin(), s.columns[0].end());
        return py::make_tuple(
            ts, array_from_tensor(Tensor::from_values({s.rows()}, std::move(vals))));
      },
      py::arg("kind"), py::arg("length"), py::arg("noise_sigma") = 0.1,
      py::arg("seed") = 0, "returns (timestamps, values), hourly from 2018-01-01");

  m.def(
      "time_features",
      [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& ts,
         int64_t spacing_seconds) {
        std::vector<int64_t> stamps(ts.data(), ts.data() + ts.size());
        Tensor f = time_features({stamps.data(), stamps.size()}, spacing_seconds);
        // drop the leading batch axis
        const int64_t n = f.shape()[1], F = f.shape()[2];
        std::vector<real> vals(f.values().begin(), f.values().end());
        return array_from_tensor(Tensor::from_values({n, F}, std::move(vals)));
      },
      py::arg("timestamps"), py::arg("spacing_seconds") = 3600);

  m.def(
      "gradient_suite",
      [](uint64_t seed) {
        SuiteResult suite = run_gradient_suite(seed);
        py::list out;
        for (const auto& line : suite.lines)
          out.append(py::make_tuple(line.name, line.report.max_rel_err,
                                    line.report.ok));
        return py::make_tuple(suite.all_ok, out);
      },
      py::arg("seed") = 20240901,
      "finite-difference checks over every op and block; returns (all_ok, lines)");

  py::class_<Yformer>(m, "Yformer")
      .def(py::init([](int64_t history_len, int64_t horizon,
                       int64_t target_channels, int64_t predictor_channels,
                       int64_t future_predictor_channels, int64_t time_features,
                       int64_t d_model, int64_t n_heads, int64_t depth,
                       double sampling_factor, double alpha, bool disable_skips,
                       uint64_t seed) {
             return Yformer(config_from_kwargs(
                 history_len, horizon, target_channels, predictor_channels,
                 future_predictor_channels, time_features, d_model, n_heads,
                 depth, sampling_factor, alpha, disable_skips, seed));
           }),
           py::arg("history_len"), py::arg("horizon"),
           py::arg("target_channels") = 1, py::arg("predictor_channels") = 0,
           py::arg("future_predictor_channels") = 0, py::arg("time_features") = 4,
           py::arg("d_model") = 32, py::arg("n_heads") = 4, py::arg("depth") = 2,
           py::arg("sampling_factor") = 5.0, py::arg("alpha") = 0.7,
           py::arg("disable_skips") = false, py::arg("seed") = 0)
      .def(
          "forward",
          [](const Yformer& model, const DoubleArray& past_values,
             const DoubleArray& past_time, const DoubleArray& future_values,
             const DoubleArray& future_time) {
            ForecastOutput out = model.forward(
                input_from_arrays(past_values, past_time, future_values,
                                  future_time));
            return py::make_tuple(array_from_tensor(out.y_hat_past),
                                  array_from_tensor(out.y_hat_fut));
          },
          py::arg("past_values"), py::arg("past_time"), py::arg("future_values"),
          py::arg("future_time"),
          "returns (y_hat_past, y_hat_fut); future targets never enter")
      .def(
          "loss",
          [](const Yformer& model, const DoubleArray& past_values,
             const DoubleArray& past_time, const DoubleArray& future_values,
             const DoubleArray& future_time, const DoubleArray& y_past,
             const DoubleArray& y_fut) {
            ForecastOutput out = model.forward(
                input_from_arrays(past_values, past_time, future_values,
                                  future_time));
            return combined_loss(out, tensor_from_array(y_past),
                                 tensor_from_array(y_fut),
                                 model.config().alpha)
                .item();
          },
          py::arg("past_values"), py::arg("past_time"), py::arg("future_values"),
          py::arg("future_time"), py::arg("y_past"), py::arg("y_fut"))
      .def("parameter_count", &Yformer::parameter_count)
      .def("save_checkpoint", &Yformer::save_checkpoint, py::arg("path"))
      .def_static("load_checkpoint", &Yformer::load_checkpoint, py::arg("path"))
      .def_property_readonly("alpha",
                             [](const Yformer& m) { return m.config().alpha; })
      .def_property_readonly("horizon",
                             [](const Yformer& m) { return m.config().horizon; });

  m.def(
      "forecast_metrics",
      [](const DoubleArray& truth, const DoubleArray& pred) {
        return forecast_metrics(tensor_from_array(truth), tensor_from_array(pred));
      },
      py::arg("truth"), py::arg("pred"), "(mse, mae)");

  m.def(
      "presets",
      [] {
        py::list out;
        for (const auto& p : preset_table()) {
          py::dict d;
          d["dataset"] = p.dataset;
          d["horizon"] = p.horizon;
          d["setting"] = p.setting;
          d["history_len"] = p.history_len;
          d["weight_decay"] = p.weight_decay;
          d["learning_rate"] = p.learning_rate;
          d["alpha"] = p.alpha;
          d["batch_size"] = p.batch_size;
          d["encoder_blocks"] = p.encoder_blocks;
          out.append(d);
        }
        return out;
      },
      "published optimal hyperparameters per (dataset, horizon, setting)");
}
