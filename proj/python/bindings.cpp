#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "setsum/augment.hpp"
#include "setsum/cli.hpp"
#include "setsum/data.hpp"
#include "setsum/errors.hpp"
#include "setsum/metrics.hpp"
#include "setsum/regressor.hpp"
#include "setsum/trainer.hpp"

namespace py = pybind11;
using namespace setsum;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<Tensor> to_tensors(const std::vector<Array>& arrays) {
  std::vector<Tensor> out;
  out.reserve(arrays.size());
  for (const Array& a : arrays) out.push_back(to_tensor(a));
  return out;
}

LabeledImages labeled(const std::vector<Array>& images, const std::vector<double>& labels) {
  if (images.size() != labels.size()) throw std::invalid_argument("images and labels differ in length");
  LabeledImages out;
  out.images = to_tensors(images);
  out.labels = labels;
  out.paths.resize(labels.size());
  return out;
}

py::dict history_dict(const TrainHistory& h) {
  py::dict d;
  d["train_loss"] = h.train_loss;
  d["val_mse"] = h.val_mse;
  d["seconds"] = h.seconds;
  d["optimizer_steps"] = h.optimizer_steps;
  d["best_epoch"] = h.best_epoch;
  d["best_val_mse"] = h.best_val_mse;
  return d;
}

template <typename Command>
py::tuple run_command(Command command, const std::filesystem::path& config,
                      std::optional<std::filesystem::path> model, std::optional<std::uint64_t> seed,
                      std::optional<std::size_t> jobs) {
  std::ostringstream out, err;
  CommandOptions options{config, model, seed, jobs};
  int code;
  {
    py::gil_scoped_release release;
    code = command(options, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Set-sum data augmentation for image regression.";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  // augment
  m.def("virtual_label", [](const std::vector<double>& labels) { return virtual_label(labels); },
        py::arg("labels"));
  m.def(
      "count_combinations",
      [](std::size_t mm, std::size_t n) {
        const std::string digits = count_combinations(mm, n).str();
        return py::reinterpret_steal<py::object>(PyLong_FromString(digits.c_str(), nullptr, 10));
      },
      py::arg("m"), py::arg("n"));
  m.def(
      "make_epoch_sets",
      [](const std::vector<double>& labels, std::size_t n, double p, std::uint64_t seed, bool with_replacement) {
        Rng rng(seed);
        py::list out;
        for (const SampleSet& set : make_epoch_sets(labels, {n, p, with_replacement}, rng)) {
          py::list slots;
          for (const SampleSlot& s : set.slots) {
            if (s.is_real()) slots.append(py::int_(s.image));
            else slots.append(s.kind == SlotKind::black ? "black" : "padding");
          }
          out.append(py::make_tuple(slots, set.virtual_label));
        }
        return out;
      },
      py::arg("labels"), py::arg("n") = 4, py::arg("p") = 0.1, py::arg("seed") = 0,
      py::arg("with_replacement") = false,
      "One epoch of sets as (slots, virtual_label); a slot is an image index, 'black' or 'padding'.");
  m.def(
      "mixup_pair",
      [](const Array& x1, double y1, const Array& x2, double y2, double lambda) {
        auto [x, y] = mixup_pair(to_tensor(x1), y1, to_tensor(x2), y2, lambda);
        return py::make_tuple(to_array(x), y);
      },
      py::arg("x1"), py::arg("y1"), py::arg("x2"), py::arg("y2"), py::arg("lam"));
  m.def(
      "random_geometric_augment",
      [](const Array& image, std::vector<std::size_t> flip_axes, double rotation_range,
         std::size_t translation_range, std::uint64_t seed) {
        Rng rng(seed);
        return to_array(random_geometric_augment(to_tensor(image), {flip_axes, rotation_range, translation_range}, rng));
      },
      py::arg("image"), py::arg("flip_axes") = std::vector<std::size_t>{0, 1}, py::arg("rotation_range") = 0.2,
      py::arg("translation_range") = 2, py::arg("seed") = 0);

  // data
  py::class_<SyntheticConfig>(m, "SyntheticConfig")
      .def(py::init<>())
      .def_readwrite("image_extent", &SyntheticConfig::image_extent)
      .def_readwrite("dims", &SyntheticConfig::dims)
      .def_readwrite("blob_count_range", &SyntheticConfig::blob_count_range)
      .def_readwrite("blob_sigma_range", &SyntheticConfig::blob_sigma_range)
      .def_readwrite("intensity_range", &SyntheticConfig::intensity_range)
      .def_readwrite("noise_sigma", &SyntheticConfig::noise_sigma)
      .def_readwrite("volume_threshold", &SyntheticConfig::volume_threshold);
  m.def(
      "generate_blob_image",
      [](const SyntheticConfig& config, std::uint64_t seed) {
        Rng rng(seed);
        const GeneratedImage g = generate_blob_image(config, rng);
        py::dict d;
        d["image"] = to_array(g.image);
        d["clean"] = to_array(g.clean);
        d["count_label"] = g.count_label;
        d["volume_label"] = g.volume_label;
        return d;
      },
      py::arg("config"), py::arg("seed") = 0);
  m.def("center_of_mass_crop",
        [](const Array& image, const Shape& extent) { return to_array(center_of_mass_crop(to_tensor(image), extent)); },
        py::arg("image"), py::arg("crop_extent"));
  m.def("rescale_intensity", [](const Array& image) { return to_array(rescale_intensity(to_tensor(image))); },
        py::arg("image"));
  m.def("write_tensor", [](const std::filesystem::path& path, const Array& a) { write_tensor(path, to_tensor(a)); },
        py::arg("path"), py::arg("array"));
  m.def("read_tensor", [](const std::filesystem::path& path) { return to_array(read_tensor(path)); },
        py::arg("path"));

  // regressor
  py::class_<ArchitectureConfig>(m, "ArchitectureConfig")
      .def(py::init<>())
      .def_readwrite("input_shape", &ArchitectureConfig::input_shape)
      .def_readwrite("dims", &ArchitectureConfig::dims)
      .def_property(
          "conv_blocks",
          [](const ArchitectureConfig& a) {
            std::vector<std::pair<std::size_t, std::size_t>> out;
            for (const ConvBlock& b : a.conv_blocks) out.emplace_back(b.feature_maps, b.kernel_size);
            return out;
          },
          [](ArchitectureConfig& a, const std::vector<std::pair<std::size_t, std::size_t>>& blocks) {
            a.conv_blocks.clear();
            for (auto [maps, kernel] : blocks) a.conv_blocks.push_back({maps, kernel});
          })
      .def_property(
          "skip_connections",
          [](const ArchitectureConfig& a) {
            std::vector<std::pair<std::size_t, std::size_t>> out;
            for (const SkipConnection& s : a.skip_connections) out.emplace_back(s.from, s.to);
            return out;
          },
          [](ArchitectureConfig& a, const std::vector<std::pair<std::size_t, std::size_t>>& skips) {
            a.skip_connections.clear();
            for (auto [from, to] : skips) a.skip_connections.push_back({from, to});
          })
      .def_readwrite("dropout_rate", &ArchitectureConfig::dropout_rate)
      .def_readwrite("zero_bias", &ArchitectureConfig::zero_bias)
      .def_readwrite("seed", &ArchitectureConfig::seed);

  py::class_<RegressorModel>(m, "RegressorModel")
      .def_property_readonly("architecture", &RegressorModel::architecture)
      .def_property_readonly("parameter_count", &RegressorModel::parameter_count)
      .def("parameters",
           [](const RegressorModel& model) {
             py::dict d;
             const ParameterStore& p = model.parameters();
             for (std::size_t s = 0; s < p.size(); ++s) d[py::str(p.name(s))] = to_array(p.value(s));
             return d;
           })
      .def("predict", [](const RegressorModel& model, const Array& image) { return model.predict(to_tensor(image)); },
           py::arg("image"))
      .def("hydra_forward",
           [](const RegressorModel& model, const std::vector<Array>& slots) {
             return hydra_forward(model, to_tensors(slots));
           },
           py::arg("slots"))
      .def("hydra_loss",
           [](const RegressorModel& model, const std::vector<Array>& slots, double label, const std::string& loss) {
             const LossEvaluation e = hydra_loss(model, to_tensors(slots), label, parse_loss_kind(loss));
             py::dict grads;
             for (std::size_t s = 0; s < e.gradients.size(); ++s)
               grads[py::str(model.parameters().name(s))] = to_array(e.gradients[s]);
             return py::make_tuple(e.loss, e.prediction, grads);
           },
           py::arg("slots"), py::arg("label"), py::arg("loss") = "mse",
           "Grouped loss L(sum of predictions, label) as (loss, summed prediction, gradients).")
      .def("save", [](const RegressorModel& model, const std::filesystem::path& path) { save_model(path, model); },
           py::arg("path"))
      .def(py::self == py::self);
  m.def("build_base_regressor", &build_base_regressor, py::arg("config") = ArchitectureConfig{});
  m.def("load_model", &load_model, py::arg("path"));
  m.def("black_image", [](const ArchitectureConfig& a) { return to_array(black_image(a)); }, py::arg("config"));

  // trainer
  m.def(
      "train",
      [](const RegressorModel& model, const std::vector<Array>& train_images, const std::vector<double>& train_labels,
         const std::vector<Array>& val_images, const std::vector<double>& val_labels, const std::string& method,
         std::size_t epochs, std::size_t n, double p, std::size_t batch_size, const std::string& loss, bool augment,
         std::uint64_t seed) {
        TrainConfig config;
        config.method = parse_method(method);
        config.epochs = epochs;
        config.sampler.n = n;
        config.sampler.p = p;
        config.batch_size = batch_size;
        config.loss = parse_loss_kind(loss);
        config.augment = augment;
        config.seed = seed;
        config.record_timing = false;
        const LabeledImages tr = labeled(train_images, train_labels);
        const LabeledImages val = labeled(val_images, val_labels);
        TrainResult result = [&] {
          py::gil_scoped_release release;
          return train(model, tr, val, config);
        }();
        return py::make_tuple(std::move(result.model), history_dict(result.history));
      },
      py::arg("model"), py::arg("train_images"), py::arg("train_labels"), py::arg("val_images"),
      py::arg("val_labels"), py::arg("method") = "setsum", py::arg("epochs") = 100, py::arg("n") = 4,
      py::arg("p") = 0.1, py::arg("batch_size") = 4, py::arg("loss") = "mse", py::arg("augment") = true,
      py::arg("seed") = 0, "Returns (best model, history dict).");
  m.def("infer",
        [](const RegressorModel& model, const std::vector<Array>& images) { return infer(model, to_tensors(images)); },
        py::arg("model"), py::arg("images"));

  // metrics
  m.def("mse", [](const std::vector<double>& t, const std::vector<double>& p) { return mse(t, p); },
        py::arg("truth"), py::arg("prediction"));
  m.def("mae", [](const std::vector<double>& t, const std::vector<double>& p) { return mae(t, p); },
        py::arg("truth"), py::arg("prediction"));
  m.def("icc", [](const std::vector<double>& t, const std::vector<double>& p) { return icc(t, p); },
        py::arg("truth"), py::arg("prediction"), "ICC(2,1); None when not computable.");
  m.def(
      "williams_test",
      [](double r12, double r13, double r23, std::size_t n) -> std::optional<py::tuple> {
        const auto r = williams_test(r12, r13, r23, n);
        if (!r) return std::nullopt;
        return py::make_tuple(r->t, r->p, r->degrees_of_freedom);
      },
      py::arg("r12"), py::arg("r13"), py::arg("r23"), py::arg("n"), "(t, p, df); None when degenerate.");

  // commands: each returns (exit code, stdout text, stderr text)
  m.def("cmd_generate", [](const std::filesystem::path& c, std::optional<std::uint64_t> seed) {
    return run_command(cmd_generate, c, std::nullopt, seed, std::nullopt);
  }, py::arg("config"), py::arg("seed") = py::none());
  m.def("cmd_train", [](const std::filesystem::path& c, std::optional<std::filesystem::path> model,
                        std::optional<std::uint64_t> seed) {
    return run_command(cmd_train, c, model, seed, std::nullopt);
  }, py::arg("config"), py::arg("model") = py::none(), py::arg("seed") = py::none());
  m.def("cmd_eval", [](const std::filesystem::path& c, std::optional<std::filesystem::path> model,
                       std::optional<std::uint64_t> seed) {
    return run_command(cmd_eval, c, model, seed, std::nullopt);
  }, py::arg("config"), py::arg("model") = py::none(), py::arg("seed") = py::none());
  m.def("cmd_curve", [](const std::filesystem::path& c, std::optional<std::size_t> jobs,
                        std::optional<std::uint64_t> seed) {
    return run_command(cmd_curve, c, std::nullopt, seed, jobs);
  }, py::arg("config"), py::arg("jobs") = py::none(), py::arg("seed") = py::none());
}
