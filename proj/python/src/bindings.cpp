#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "blastoseg/checkpoint.hpp"
#include "blastoseg/cli.hpp"
#include "blastoseg/evaluation.hpp"

namespace py = pybind11;
using namespace blastoseg;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

data::Raster to_raster(const FloatArray& a) {
  if (a.ndim() != 2) throw DimensionError("h", "expected a 2-D image");
  data::Raster r(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), r.pixels.begin());
  return r;
}

data::BinaryMask to_mask(const MaskArray& a) {
  if (a.ndim() != 2) throw DimensionError("h", "expected a 2-D mask");
  data::BinaryMask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.size(); ++i) m.bits[static_cast<std::size_t>(i)] = a.data()[i] != 0;
  return m;
}

py::array_t<float> from_raster(const data::Raster& r) {
  py::array_t<float> out({r.height, r.width});
  std::copy(r.pixels.begin(), r.pixels.end(), out.mutable_data());
  return out;
}

py::array_t<std::uint8_t> from_mask(const data::BinaryMask& m) {
  py::array_t<std::uint8_t> out({m.height, m.width});
  std::copy(m.bits.begin(), m.bits.end(), out.mutable_data());
  return out;
}

py::object optional_value(const std::optional<double>& v) {
  return v ? py::object(py::float_(*v)) : py::object(py::none());
}

py::dict report_dict(const evaluation::MetricsCounts& c) {
  const auto r = evaluation::metrics(c);
  py::dict d;
  d["tp"] = c.tp;
  d["tn"] = c.tn;
  d["fp"] = c.fp;
  d["fn"] = c.fn;
  d["accuracy"] = optional_value(r.accuracy);
  d["precision"] = optional_value(r.precision);
  d["recall"] = optional_value(r.recall);
  d["dice"] = optional_value(r.dice);
  d["jaccard"] = optional_value(r.jaccard);
  return d;
}

using Model = models::SegmentationModel<float>;

/// Probability map at the image's own size.
py::array_t<float> probabilities(const Model& model, const FloatArray& image) {
  const data::Raster raw = to_raster(image);
  const auto& cfg = model.config();
  const data::Raster x = data::normalize(data::resize(raw, cfg.width, cfg.height));
  numerics::Tensor<float> batch(numerics::Shape4{1, 1, cfg.height, cfg.width});
  std::copy(x.pixels.begin(), x.pixels.end(), batch.data().begin());
  const auto y = model.predict(batch);
  data::Raster p(cfg.width, cfg.height);
  std::copy(y.data().begin(), y.data().end(), p.pixels.begin());
  return from_raster(data::resize(p, raw.width, raw.height));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "U-Net family segmentation of zona-ablated blastocysts";

  py::register_exception<Error>(m, "BlastosegError", PyExc_RuntimeError);

  m.def("architectures", [] {
    std::vector<std::string> names;
    for (auto a : {models::Architecture::unet, models::Architecture::sd_unet, models::Architecture::resunet,
                   models::Architecture::rd_unet})
      names.emplace_back(models::to_string(a));
    return names;
  });

  m.def("dice_from_jaccard", &evaluation::dice_from_jaccard, py::arg("jaccard"));

  m.def("metrics",
        [](const MaskArray& pred, const MaskArray& truth) {
          return report_dict(evaluation::confusion(to_mask(pred), to_mask(truth)));
        },
        py::arg("pred"), py::arg("truth"),
        "Confusion counts and the five ratios; undefined ratios are None.");

  m.def("category", [](double jaccard) { return std::string(evaluation::to_string(evaluation::categorize(jaccard))); },
        py::arg("jaccard"));

  m.def("generate_phantoms",
        [](int blastocysts, int frames, int size, std::uint64_t seed) {
          data::PhantomDatasetSpec spec;
          spec.blastocysts = blastocysts;
          spec.frames = frames;
          spec.image_size = size;
          spec.seed = seed;
          py::list out;
          for (const auto& p : data::generate_phantom_dataset(spec))
            out.append(py::make_tuple(from_raster(p.image), from_mask(p.mask), p.source_id, p.frame_index));
          return out;
        },
        py::arg("blastocysts") = 2, py::arg("frames") = 4, py::arg("size") = 64, py::arg("seed") = 0,
        "List of (image, mask, source_id, frame) tuples.");

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& architecture, int base_filters, int size, std::uint64_t seed) {
             return Model(models::ModelConfig{models::parse_architecture(architecture), base_filters, size, size,
                                              0.05, seed});
           }),
           py::arg("architecture") = "rd_unet", py::arg("base_filters") = 16, py::arg("size") = 240,
           py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& path) {
        return Model::from_checkpoint(numerics::read_checkpoint(path));
      })
      .def("save", [](const Model& model, const std::filesystem::path& path) {
        numerics::write_checkpoint(path, model.to_checkpoint());
      })
      .def_property_readonly("architecture", [](const Model& model) {
        return std::string(models::to_string(model.config().architecture));
      })
      .def_property_readonly("size", [](const Model& model) { return model.config().height; })
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("encoder_widths", &Model::encoder_widths)
      .def_property_readonly("decoder_widths", &Model::decoder_widths)
      .def_property_readonly("bridge_dilations", &Model::bridge_dilations)
      .def_property_readonly("statistics_ready", &Model::statistics_ready)
      .def("describe", &Model::describe_text)
      .def("probabilities", &probabilities, py::arg("image"))
      .def(
          "segment",
          [](const Model& model, const FloatArray& image, double threshold) {
            return from_mask(evaluation::binarize(to_raster(probabilities(model, image)), threshold));
          },
          py::arg("image"), py::arg("threshold") = 0.5);

  m.def("run",
        [](const std::vector<std::string>& args) {
          std::vector<const char*> argv{"blastoseg"};
          for (const auto& a : args) argv.push_back(a.c_str());
          std::ostringstream out, err;
          int code = 0;
          {
            py::gil_scoped_release release;
            code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a command line; returns (exit_code, stdout, stderr).");
}
