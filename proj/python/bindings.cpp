#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>
#include <vector>

#include "unetkit/checkpoint.hpp"
#include "unetkit/evaluate.hpp"
#include "unetkit/layers.hpp"
#include "unetkit/loss.hpp"
#include "unetkit/metrics.hpp"
#include "unetkit/report.hpp"
#include "unetkit/unet.hpp"

namespace py = pybind11;
using namespace unetkit;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor tensor_from(const FloatArray& arr) {
  if (arr.ndim() != 4) {
    throw DimensionError("expected a rank-4 (n, c, h, w) array, got rank " +
                         std::to_string(arr.ndim()));
  }
  Tensor t(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
           static_cast<int>(arr.shape(2)), static_cast<int>(arr.shape(3)));
  std::copy(arr.data(), arr.data() + t.size(), t.data.begin());
  return t;
}

py::array_t<float> array_from(const Tensor& t) {
  py::array_t<float> arr({t.n, t.c, t.h, t.w});
  std::copy(t.data.begin(), t.data.end(), arr.mutable_data());
  return arr;
}

ConvParams<float> conv_params_from(const FloatArray& weight, const py::object& bias, int stride,
                                   int padding, bool transpose) {
  if (weight.ndim() != 4) throw DimensionError("weight must be rank 4");
  ConvParams<float> p;
  p.weight = tensor_from(weight);
  p.stride = stride;
  p.padding = padding;
  const int bias_len = transpose ? p.weight.c : p.weight.n;
  if (bias.is_none()) {
    p.bias.assign(static_cast<std::size_t>(bias_len), 0.0f);
  } else {
    auto b = bias.cast<std::vector<float>>();
    p.bias.assign(b.begin(), b.end());
  }
  p.bias_grad.assign(p.bias.size(), 0.0f);
  return p;
}

Tensor mask_tensor_from(const FloatArray& arr) {
  Tensor t = tensor_from(arr);
  return t;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "U-Net segmentation toolkit core ops";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ValueError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "conv2d",
      [](const FloatArray& x, const FloatArray& weight, const py::object& bias, int stride,
         int padding) {
        const ConvParams<float> p = conv_params_from(weight, bias, stride, padding, false);
        return array_from(conv2d(tensor_from(x), p));
      },
      py::arg("x"), py::arg("weight"), py::arg("bias") = py::none(), py::arg("stride") = 1,
      py::arg("padding") = 0);

  m.def(
      "conv_transpose2d",
      [](const FloatArray& x, const FloatArray& weight, const py::object& bias, int stride,
         int padding) {
        const ConvParams<float> p = conv_params_from(weight, bias, stride, padding, true);
        return array_from(conv_transpose2d(tensor_from(x), p));
      },
      py::arg("x"), py::arg("weight"), py::arg("bias") = py::none(), py::arg("stride") = 1,
      py::arg("padding") = 0);

  m.def("relu", [](const FloatArray& x) { return array_from(relu(tensor_from(x))); });
  m.def("sigmoid", [](const FloatArray& x) { return array_from(sigmoid(tensor_from(x))); });
  m.def("maxpool2d", [](const FloatArray& x) { return array_from(maxpool2d(tensor_from(x))); });
  m.def("concat_channels", [](const FloatArray& a, const FloatArray& b) {
    return array_from(concat_channels(tensor_from(a), tensor_from(b)));
  });

  m.def(
      "dice_bce_loss",
      [](const FloatArray& logits, const FloatArray& target) {
        LossResult<float> r = dice_bce_loss(tensor_from(logits), tensor_from(target));
        return py::make_tuple(r.value, array_from(r.grad));
      },
      py::arg("logits"), py::arg("target"));

  m.def(
      "binarize",
      [](const FloatArray& probs, double threshold) {
        return array_from(binarize(tensor_from(probs), threshold));
      },
      py::arg("probs"), py::arg("threshold") = 0.5);

  m.def(
      "segmentation_metrics",
      [](const FloatArray& pred, const FloatArray& gt) {
        const MetricsRecord r = segmentation_metrics(mask_tensor_from(pred), mask_tensor_from(gt));
        py::dict d;
        d["jaccard"] = r.jaccard;
        d["f1"] = r.f1;
        d["recall"] = r.recall;
        d["precision"] = r.precision;
        d["accuracy"] = r.accuracy;
        d["tp"] = r.counts.tp;
        d["fp"] = r.counts.fp;
        d["fn"] = r.counts.fn;
        d["tn"] = r.counts.tn;
        return d;
      },
      py::arg("pred"), py::arg("gt"));

  m.def("quadratic_weighted_kappa", &quadratic_weighted_kappa, py::arg("pred"), py::arg("truth"));

  m.def(
      "compose_report",
      [](int grade, const std::map<std::string, std::string>& states,
         const std::map<std::string, double>& fractions) {
        Findings f;
        f.grade = grade;
        for (int i = 0; i < kLesionCount; ++i) {
          const auto idx = static_cast<std::size_t>(i);
          const std::string key = kLesionKeys[idx];
          if (auto it = states.find(key); it != states.end()) {
            if (it->second == "present") f.states[idx] = LesionState::Present;
            else if (it->second == "absent") f.states[idx] = LesionState::Absent;
            else if (it->second == "unknown") f.states[idx] = LesionState::Unknown;
            else throw ValueError("lesion state must be present/absent/unknown, got " + it->second);
          } else {
            f.states[idx] = LesionState::Unknown;
          }
          if (auto it = fractions.find(key); it != fractions.end()) f.fractions[idx] = it->second;
        }
        return compose_report(f).text;
      },
      py::arg("grade"), py::arg("states") = std::map<std::string, std::string>{},
      py::arg("fractions") = std::map<std::string, double>{});

  py::class_<UNetModel>(m, "UNet")
      .def(py::init([](int in_channels, int out_channels, int base_channels, int depth,
                       unsigned long long seed) {
             return build_unet<float>(UNetConfig{in_channels, out_channels, base_channels, depth},
                                      seed);
           }),
           py::arg("in_channels") = 3, py::arg("out_channels") = 1, py::arg("base_channels") = 64,
           py::arg("depth") = 4, py::arg("seed") = 0)
      .def("forward",
           [](UNetModel& self, const FloatArray& x) {
             return array_from(unet_forward(self, tensor_from(x)));
           })
      .def("predict",
           [](UNetModel& self, const FloatArray& x) {
             return array_from(predict_probs(self, tensor_from(x)));
           })
      .def("set_training",
           [](UNetModel& self, bool training) {
             set_mode(self, training ? Mode::Training : Mode::Inference);
           })
      .def("param_count", [](const UNetModel& self) { return param_count(self); })
      .def("save",
           [](UNetModel& self, const std::string& path) {
             save_checkpoint(checkpoint_from_model(self, 0, 0.0), path);
           })
      .def_static("load",
                  [](const std::string& path) { return model_from_checkpoint(load_checkpoint(path)); })
      .def_property_readonly("in_channels",
                             [](const UNetModel& self) { return self.config.in_channels; })
      .def_property_readonly("out_channels",
                             [](const UNetModel& self) { return self.config.out_channels; })
      .def_property_readonly("base_channels",
                             [](const UNetModel& self) { return self.config.base_channels; })
      .def_property_readonly("depth", [](const UNetModel& self) { return self.config.depth; });
}
