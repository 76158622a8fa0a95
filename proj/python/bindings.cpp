#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "triage/classifier.hpp"
#include "triage/cli.hpp"
#include "triage/dataset.hpp"
#include "triage/error.hpp"
#include "triage/selection.hpp"
#include "triage/serialize.hpp"
#include "triage/transforms.hpp"

namespace py = pybind11;
using namespace triage;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// HxW or HxWxC float array -> ImageTensor.
ImageTensor to_image(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ValidationError("image must be HxW or HxWxC");
  const ImageShape shape{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                         a.ndim() == 3 ? static_cast<std::size_t>(a.shape(2)) : 1};
  return ImageTensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const ImageTensor& image, bool squeeze) {
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(image.height()),
                                 static_cast<py::ssize_t>(image.width())};
  if (!squeeze || image.channels() != 1) shape.push_back(static_cast<py::ssize_t>(image.channels()));
  Array out(shape);
  std::copy(image.pixels().begin(), image.pixels().end(), out.mutable_data());
  return out;
}

py::tuple samples_to_numpy(const std::vector<Sample>& samples) {
  const ImageShape shape = samples.empty() ? ImageShape{0, 0, 0} : samples.front().image.shape();
  Array images({static_cast<py::ssize_t>(samples.size()), static_cast<py::ssize_t>(shape.height),
                static_cast<py::ssize_t>(shape.width), static_cast<py::ssize_t>(shape.channels)});
  std::vector<std::int64_t> labels;
  std::vector<std::string> ids;
  double* dst = images.mutable_data();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto px = samples[i].image.pixels();
    dst = std::copy(px.begin(), px.end(), dst);
    labels.push_back(static_cast<std::int64_t>(samples[i].label));
    ids.push_back(samples[i].id);
  }
  return py::make_tuple(ids, images,
                        py::array(py::dtype::of<std::int64_t>(),
                                  {static_cast<py::ssize_t>(labels.size())}, labels.data()));
}

std::vector<PredictionRecord> to_records(const std::map<std::string, std::vector<double>>& probs) {
  std::vector<PredictionRecord> records;
  for (const auto& [id, p] : probs) records.push_back(make_record(id, PredictionVector(p)));
  return records;
}

TransformPolicy make_policy(std::uint64_t seed, const std::optional<std::vector<std::string>>& kinds) {
  TransformPolicy policy;
  policy.seed = seed;
  if (kinds) {
    policy.enabled.clear();
    for (const auto& name : *kinds) {
      const auto kind = parse_transform_kind(name);
      if (!kind) throw ValidationError("unknown transform kind '" + name + "'");
      policy.enabled.push_back(*kind);
    }
  }
  return policy;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Entropy-guided metamorphic testing and label-noise triage";

  static py::exception<Error> base(m, "TriageError");
  static py::exception<ValidationError> validation(m, "ValidationError", base.ptr());
  static py::exception<ParseError> parse(m, "ParseError", base.ptr());
  static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
  static py::exception<BackendError> backend(m, "BackendError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const BackendError& e) {
      PyErr_SetString(backend.ptr(), e.what());
    } catch (const ValidationError& e) {
      PyErr_SetString(validation.ptr(), e.what());
    } catch (const ParseError& e) {
      PyErr_SetString(parse.ptr(), e.what());
    } catch (const ConfigError& e) {
      PyErr_SetString(config.ptr(), e.what());
    } catch (const Error& e) {
      PyErr_SetString(base.ptr(), e.what());
    }
  });

  m.def("shannon_index", [](const std::vector<double>& p) { return shannon_index(p).value; },
        py::arg("probs"), "Shannon entropy of a probability vector, in nats.");
  m.def("argmax_label", [](const std::vector<double>& p) { return argmax_label(PredictionVector(p)); },
        py::arg("probs"));

  m.def(
      "build_candidates",
      [](const std::map<std::string, std::vector<double>>& probs,
         const std::map<std::string, ClassIndex>& labels, double tau_high) {
        const LabelMap lm(labels.begin(), labels.end());
        std::vector<std::string> ids;
        for (const auto& c : build_candidates(to_records(probs), lm, tau_high).members) {
          ids.push_back(c.sample_id);
        }
        return ids;
      },
      py::arg("probs"), py::arg("labels"), py::arg("tau_high"),
      "Ids of correctly predicted samples with entropy above tau_high.");
  m.def(
      "detect",
      [](const std::map<std::string, std::vector<double>>& probs,
         const std::map<std::string, ClassIndex>& labels, double tau_low) {
        const LabelMap lm(labels.begin(), labels.end());
        py::list out;
        for (const auto& f : detect(to_records(probs), lm, tau_low).entries) {
          out.append(py::dict(py::arg("sample_id") = f.sample_id, py::arg("label") = f.label,
                              py::arg("predicted") = f.predicted,
                              py::arg("shannon") = f.shannon.value));
        }
        return out;
      },
      py::arg("probs"), py::arg("labels"), py::arg("tau_low"),
      "Confident mispredictions: entropy below tau_low and label != prediction.");

  py::class_<TransformSpec>(m, "TransformSpec")
      .def_static("pan", [](double dx, double dy) { return TransformSpec(Pan{dx, dy}); },
                  py::arg("dx"), py::arg("dy"))
      .def_static("rotate2d", [](double deg) { return TransformSpec(Rotate2d{deg}); },
                  py::arg("degrees"))
      .def_static("affine",
                  [](const std::array<double, 6>& a) { return TransformSpec(Affine{a}); },
                  py::arg("matrix"))
      .def_static("perspective",
                  [](const std::array<double, 9>& h) { return TransformSpec(Perspective{h}); },
                  py::arg("matrix"))
      .def_static("identity",
                  [](const std::string& kind) {
                    const auto k = parse_transform_kind(kind);
                    if (!k) throw ValidationError("unknown transform kind '" + kind + "'");
                    return TransformSpec::identity(*k);
                  })
      .def_property_readonly("kind", [](const TransformSpec& s) { return to_string(s.kind()); })
      .def("inverse", &TransformSpec::inverse)
      .def("to_json", [](const TransformSpec& s) { return to_json(s).dump(); })
      .def("__eq__", [](const TransformSpec& a, const TransformSpec& b) { return a == b; })
      .def("__repr__", [](const TransformSpec& s) { return "TransformSpec(" + to_json(s).dump() + ")"; });

  m.def(
      "apply_transform",
      [](const Array& image, const TransformSpec& spec) {
        return to_array(apply_transform(to_image(image), spec), image.ndim() == 2);
      },
      py::arg("image"), py::arg("spec"), "Warp an HxW or HxWxC image with values in [0, 1].");
  m.def(
      "choice",
      [](std::uint64_t seed, std::uint64_t draw_index, std::array<std::size_t, 3> shape,
         std::optional<std::vector<std::string>> kinds) {
        return choice(make_policy(seed, kinds), draw_index, {shape[0], shape[1], shape[2]});
      },
      py::arg("seed"), py::arg("draw_index"), py::arg("shape"), py::arg("kinds") = py::none(),
      "Seeded transform draw with the default parameter ranges.");
  m.def("draw_index_for", &draw_index_for, py::arg("sample_id"));

  m.def("load_idx",
        [](const std::filesystem::path& images, const std::filesystem::path& labels) {
          return samples_to_numpy(load_idx_pair(images, labels));
        },
        py::arg("images"), py::arg("labels"), "Returns (ids, images NxHxWxC, labels).");
  m.def("load_cifar10",
        [](const std::vector<std::filesystem::path>& paths) {
          return samples_to_numpy(load_cifar10_bin(paths));
        },
        py::arg("paths"));

  py::class_<BuiltinSoftmaxModel>(m, "BuiltinModel")
      .def_static("load", &load_builtin_model, py::arg("path"))
      .def("save", [](const BuiltinSoftmaxModel& model, const std::filesystem::path& path) {
        save_builtin_model(model, path);
      })
      .def_property_readonly("class_count", &BuiltinSoftmaxModel::class_count)
      .def_property_readonly("input_width", &BuiltinSoftmaxModel::input_width)
      .def("predict", [](const BuiltinSoftmaxModel& model, const Array& image) {
        const auto p = model.forward(std::span(image.data(), static_cast<std::size_t>(image.size())));
        return std::vector<double>(p.probs().begin(), p.probs().end());
      });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a subcommand; returns (exit_code, stdout, stderr).");
}
