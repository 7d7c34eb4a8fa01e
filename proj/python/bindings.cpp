#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "triplane/config.hpp"
#include "triplane/error.hpp"
#include "triplane/flops.hpp"
#include "triplane/model.hpp"
#include "triplane/plot.hpp"
#include "triplane/shapes.hpp"
#include "triplane/train.hpp"
#include "triplane/vxg.hpp"

namespace py = pybind11;
using namespace triplane;
using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

namespace {

ModelConfig parse_config(const std::string& text) { return model_config_from_json(nlohmann::json::parse(text)); }

Array to_array(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Array grid_array(const Grid& g) {
  Array out({g.dims[0], g.dims[1], g.dims[2]});
  std::copy(g.values.begin(), g.values.end(), out.mutable_data());
  return out;
}

class Model {
 public:
  explicit Model(const std::string& config) : model_(parse_config(config)) {}

  Array forward(Array volume) const {
    if (volume.ndim() != 4) throw ShapeError("expected a [C, D, H, W] array");
    std::vector<std::size_t> shape(volume.shape(), volume.shape() + 4);
    auto t = Tensor<float>::from(shape, std::span<const float>(volume.data(), volume.size()));
    Tensor<float> out;
    {
      py::gil_scoped_release release;
      out = model_.logits(VoxelGrid<float>(t));
    }
    return to_array(out);
  }

  std::string config() const { return to_json(model_.config()).dump(); }
  std::size_t parameter_count() { return model_.parameter_count(); }

 private:
  TriPlaneModel<float> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tri-plane volumetric models";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("default_config", [](const std::string& variant) {
    return to_json(ModelConfig::defaults(parse_variant(variant))).dump();
  });
  m.def("normalize_config", [](const std::string& text) { return to_json(parse_config(text)).dump(); });
  m.def("config_hash", [](const std::string& text) { return config_hash(parse_config(text)); });

  m.def(
      "count_flops",
      [](const std::string& text, std::array<std::size_t, 3> dims) {
        return count_model(parse_config(text), dims).to_json().dump();
      },
      py::arg("config"), py::arg("dims"));

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("config"))
      .def("forward", &Model::forward, py::arg("volume"))
      .def("config", &Model::config)
      .def("parameter_count", &Model::parameter_count);

  m.def(
      "gen_shapes",
      [](const std::string& task, std::size_t count, std::array<std::size_t, 3> dims, std::uint64_t seed,
         double occlusion) {
        const auto d = gen_shapes({parse_task(task), count, dims, seed, occlusion});
        py::list out;
        for (const auto& s : d.samples) out.append(py::make_tuple(grid_array(s.input), grid_array(s.target), s.label));
        return out;
      },
      py::arg("task"), py::arg("count"), py::arg("dims"), py::arg("seed") = 0, py::arg("occlusion") = 0.4);

  m.def(
      "write_vxg",
      [](const std::string& path, Array values) {
        if (values.ndim() != 4) throw ShapeError("expected a [C, D, H, W] array");
        VxgVolume v;
        v.channels = std::uint32_t(values.shape(0));
        for (int k = 0; k < 3; ++k) v.dims[k] = std::uint32_t(values.shape(k + 1));
        v.values.assign(values.data(), values.data() + values.size());
        write_vxg(path, v);
      },
      py::arg("path"), py::arg("values"));
  m.def("read_vxg", [](const std::string& path) {
    const auto v = read_vxg(path);
    Array out({std::size_t(v.channels), std::size_t(v.dims[0]), std::size_t(v.dims[1]), std::size_t(v.dims[2])});
    std::copy(v.values.begin(), v.values.end(), out.mutable_data());
    return out;
  });

  m.def(
      "plot_metrics",
      [](const std::vector<std::string>& paths, const std::vector<std::string>& labels, const std::string& x,
         const std::string& title) {
        if (labels.size() != paths.size()) throw ConfigError("need one label per metrics file");
        const PlotAxis axis = x == "epoch" ? PlotAxis::epoch : PlotAxis::gflops;
        std::vector<PlotSeries> series;
        for (std::size_t i = 0; i < paths.size(); ++i)
          series.push_back(series_from_metrics(read_metrics_csv(paths[i]), labels[i], axis));
        PlotSpec spec{title, axis == PlotAxis::epoch ? "epoch" : "GFLOPs", "score", axis == PlotAxis::gflops};
        return render_svg(series, spec);
      },
      py::arg("paths"), py::arg("labels"), py::arg("x") = "gflops", py::arg("title") = "");
}
