#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mlcak/checkpoint.hpp"
#include "mlcak/dataset.hpp"
#include "mlcak/distill.hpp"
#include "mlcak/error.hpp"
#include "mlcak/image.hpp"
#include "mlcak/metrics.hpp"
#include "mlcak/optim.hpp"
#include "mlcak/training.hpp"
#include "mlcak/vit.hpp"

namespace py = pybind11;
using namespace mlcak;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Image to_image(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("image must be a 2-D array, got " + std::to_string(a.ndim()) + " dimensions");
  Image img(a.shape(1), a.shape(0));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

Array to_array(const Image& img) {
  Array out({img.height, img.width});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

// Python containers cross the boundary as JSON text.
py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict trace_dict(const ForwardTrace& trace) {
  py::dict d;
  d["mlct_logits"] = to_array(trace.mlct_logits);
  d["mcct_logits"] = to_array(trace.mcct_logits);
  py::list hidden;
  for (const auto& h : trace.hidden_states) hidden.append(to_array(h));
  d["hidden_states"] = hidden;
  return d;
}

ViTModel model_from(const py::object& checkpoint_or_model) {
  if (py::isinstance<ViTModel>(checkpoint_or_model)) return checkpoint_or_model.cast<const ViTModel&>().clone();
  return load_checkpoint(checkpoint_or_model.cast<std::filesystem::path>());
}

}  // namespace

PYBIND11_MODULE(_mlcak, m) {
  m.doc() = "Layer-averaged feature distillation for low-resolution vision transformers";

  auto base = py::register_exception<Error>(m, "MlcakError", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<ParameterError>(m, "ParameterError", base);
  py::register_exception<ContractError>(m, "ContractError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<ParseError>(m, "ParseError", base);
  py::register_exception<NumericalError>(m, "NumericalError", base);

  // Images and resolution
  m.def("load_image", [](const std::filesystem::path& p) { return to_array(load_image(p)); }, py::arg("path"));
  m.def("save_image", [](const Array& a, const std::filesystem::path& p) { save_image(to_image(a), p); },
        py::arg("image"), py::arg("path"));
  m.def(
      "degrade",
      [](const Array& a, const std::string& level, std::optional<std::size_t> model_input) {
        const auto img = to_image(a);
        if (img.width != img.height) throw ShapeError("degrade needs a square image");
        return to_array(degrade(img, resolve_resolution(level, img.width, model_input.value_or(img.width))));
      },
      py::arg("image"), py::arg("level"), py::arg("model_input") = py::none(),
      "Reduce a native image to a resolution level and bring it back to the model input size.");

  // Losses and metrics
  m.def(
      "mlcak_summary",
      [](const std::vector<Array>& blocks) {
        std::vector<Tensor> ts;
        for (const auto& b : blocks) ts.push_back(to_tensor(b));
        return to_array(mlcak_summary(ts));
      },
      py::arg("hidden_states"));
  m.def("mse_loss", [](const Array& t, const Array& s) { return mse_loss(to_tensor(t), to_tensor(s)).item(); },
        py::arg("teacher"), py::arg("student"));
  m.def("bce_with_logits",
        [](const Array& z, const Array& y) { return bce_with_logits(to_tensor(z), to_tensor(y)).item(); },
        py::arg("logits"), py::arg("targets"));
  m.def(
      "vanilla_kd_loss",
      [](const Array& t, const Array& s, double tau) { return vanilla_kd_loss(to_tensor(t), to_tensor(s), tau).item(); },
      py::arg("teacher_logits"), py::arg("student_logits"), py::arg("temperature") = 1.0);
  m.def("auroc", &auroc, py::arg("scores"), py::arg("labels"));
  m.def(
      "cosine_lr",
      [](double base_lr, double min_lr, std::size_t total_steps, std::size_t step) {
        return cosine_lr(CosineSchedule{base_lr, min_lr, total_steps}, step);
      },
      py::arg("base_lr"), py::arg("min_lr"), py::arg("total_steps"), py::arg("step"));

  // Models
  py::class_<ViTModel>(m, "Model")
      .def_static(
          "create",
          [](const std::string& variant, std::size_t num_findings, std::uint64_t seed) {
            return init_model(desk_variant(variant, num_findings), seed);
          },
          py::arg("variant") = "tiny", py::arg("num_findings") = 8, py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"))
      .def("save", [](const ViTModel& self, const std::filesystem::path& p) { save_checkpoint(self, p); },
           py::arg("path"))
      .def_property_readonly("config", [](const ViTModel& self) { return to_python(to_json(self.config())); })
      .def_property_readonly("parameter_count", &ViTModel::parameter_count)
      .def(
          "forward",
          [](const ViTModel& self, const Array& images) {
            NoGradGuard ng;
            return trace_dict(self.forward(to_tensor(images)));
          },
          py::arg("images"), "images: [B, H, W] in [0, 1]")
      .def(
          "attention_grid",
          [](const ViTModel& self, const Array& image, int block) {
            NoGradGuard ng;
            const auto t = to_tensor(image);
            const auto trace = self.forward(Tensor({1, t.dim(0), t.dim(1)}, std::vector<double>(t.data().begin(), t.data().end())));
            const int depth = static_cast<int>(self.config().depth);
            if (block < -depth || block >= depth) throw ParameterError("block index out of range");
            return to_array(attention_grid(trace, static_cast<std::size_t>((block + depth) % depth)));
          },
          py::arg("image"), py::arg("block") = -1);

  // Pipeline
  m.def(
      "generate_synthetic",
      [](const std::filesystem::path& out, std::size_t num_samples, std::size_t num_findings, std::size_t image_size,
         double noise_sigma, double abnormal_fraction, double test_fraction, std::uint64_t seed) {
        SyntheticConfig c;
        c.num_samples = num_samples;
        c.num_findings = num_findings;
        c.image_size = image_size;
        c.noise_sigma = noise_sigma;
        c.abnormal_fraction = abnormal_fraction;
        c.test_fraction = test_fraction;
        c.seed = seed;
        const auto ds = generate_synthetic(c, out);
        return std::make_pair(ds.train.records.size(), ds.test.records.size());
      },
      py::arg("out"), py::arg("num_samples") = 512, py::arg("num_findings") = 8, py::arg("image_size") = 64,
      py::arg("noise_sigma") = 0.03, py::arg("abnormal_fraction") = 0.5, py::arg("test_fraction") = 0.2,
      py::arg("seed") = 0, "Returns (train count, test count).");
  m.def(
      "train_teacher",
      [](const py::dict& config) {
        const auto rc = run_config_from_json(from_python(config));
        py::gil_scoped_release nogil;
        return run_train_teacher(rc);
      },
      py::arg("config"), "Keys as in a run config file; writes out/model.ckpt and out/metrics.jsonl.");
  m.def(
      "train_student",
      [](const py::dict& config) {
        const auto rc = run_config_from_json(from_python(config));
        py::gil_scoped_release nogil;
        return run_train_student(rc);
      },
      py::arg("config"));
  m.def(
      "evaluate",
      [](const py::object& model, const std::filesystem::path& data, const std::string& split,
         const std::string& resolution, const std::string& scheme) {
        const auto vit = model_from(model);
        const auto ds = load_split(data, split);
        const auto spec = resolve_resolution(resolution, ds.native_size(), vit.config().image_size);
        return to_python(to_json(evaluate(vit, prepare(ds, spec), ds.manifest.finding_names, scheme, resolution)));
      },
      py::arg("model"), py::arg("data"), py::arg("split") = "test", py::arg("resolution") = "native",
      py::arg("scheme") = "none", "model: a Model or a checkpoint path. Returns the report as a dict.");
  m.def(
      "export_attention",
      [](const py::object& model, const Array& image, const std::filesystem::path& out, int block,
         std::optional<std::size_t> upscale_to) {
        const auto vit = model_from(model);
        const auto img = to_image(image);
        const int depth = static_cast<int>(vit.config().depth);
        if (block < -depth || block >= depth) throw ParameterError("block index out of range");
        NoGradGuard ng;
        const auto trace = vit.forward(Tensor({1, img.height, img.width}, img.pixels));
        return to_array(export_attention(trace, static_cast<std::size_t>((block + depth) % depth), out,
                                         upscale_to.value_or(img.width)));
      },
      py::arg("model"), py::arg("image"), py::arg("out"), py::arg("block") = -1, py::arg("upscale_to") = py::none());
}
