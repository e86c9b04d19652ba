// Python bindings for the main operations: channel preparation, training,
// classification, and model persistence.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cte/config.hpp"
#include "cte/data.hpp"
#include "cte/ensemble.hpp"
#include "cte/model_io.hpp"
#include "cte/train.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

cte::RawImage image_from_array(const Array& arr) {
  cte::RawImage img;
  if (arr.ndim() == 2) {
    img.depth = 1;
    img.height = int(arr.shape(0));
    img.width = int(arr.shape(1));
  } else if (arr.ndim() == 3) {
    img.depth = int(arr.shape(0));
    img.height = int(arr.shape(1));
    img.width = int(arr.shape(2));
  } else {
    throw py::value_error("image must be (H, W) or (D, H, W)");
  }
  img.data.assign(arr.data(), arr.data() + arr.size());
  return img;
}

std::vector<cte::RawImage> images_from_array(const Array& arr) {
  if (arr.ndim() != 3 && arr.ndim() != 4)
    throw py::value_error("images must be (N, H, W) or (N, D, H, W)");
  const int64_t n = arr.shape(0);
  std::vector<cte::RawImage> out;
  out.reserve(size_t(n));
  const int64_t stride = arr.size() / std::max<int64_t>(n, 1);
  for (int64_t i = 0; i < n; ++i) {
    cte::RawImage img;
    if (arr.ndim() == 3) {
      img.depth = 1;
      img.height = int(arr.shape(1));
      img.width = int(arr.shape(2));
    } else {
      img.depth = int(arr.shape(1));
      img.height = int(arr.shape(2));
      img.width = int(arr.shape(3));
    }
    const float* base = arr.data() + i * stride;
    img.data.assign(base, base + stride);
    out.push_back(std::move(img));
  }
  return out;
}

cte::PrepConfig prep_from_kwargs(const py::dict& kw) {
  cte::PrepConfig prep;
  for (auto item : kw) {
    const std::string key = py::str(item.first);
    if (key == "orientations")
      prep.orientation_count = py::cast<int>(item.second);
    else if (key == "smoothing_radius")
      prep.smoothing_radius = py::cast<int>(item.second);
    else if (key == "gradient_channels")
      prep.gradient_channels = py::cast<bool>(item.second);
    else if (key == "integral_channels")
      prep.integral_channels = py::cast<bool>(item.second);
    else if (key == "spatial_channels")
      prep.spatial_channels = py::cast<bool>(item.second);
    else
      throw py::value_error("unknown prepare_channels option: " + key);
  }
  return prep;
}

cte::TrainConfig config_from_kwargs(const py::dict& kw) {
  cte::TrainConfig cfg;
  for (auto item : kw) {
    const std::string key = py::str(item.first);
    const auto& v = item.second;
    if (key == "tables") cfg.tables = py::cast<int>(v);
    else if (key == "bits") cfg.bits = py::cast<int>(v);
    else if (key == "tree") cfg.tree = py::cast<bool>(v);
    else if (key == "tree_stage_bits") cfg.tree_stage_bits = py::cast<std::vector<int>>(v);
    else if (key == "tree_split_factors") cfg.tree_split_factors = py::cast<std::vector<int>>(v);
    else if (key == "patch_size") cfg.patch_size = py::cast<int>(v);
    else if (key == "orientations") cfg.prep.orientation_count = py::cast<int>(v);
    else if (key == "smoothing_radius") cfg.prep.smoothing_radius = py::cast<int>(v);
    else if (key == "gradient_channels") cfg.prep.gradient_channels = py::cast<bool>(v);
    else if (key == "integral_channels") cfg.prep.integral_channels = py::cast<bool>(v);
    else if (key == "spatial_channels") cfg.prep.spatial_channels = py::cast<bool>(v);
    else if (key == "candidates") cfg.growth.candidate_count = py::cast<int>(v);
    else if (key == "replacement_sweeps") cfg.growth.replacement_sweeps = py::cast<int>(v);
    else if (key == "refinement_sweeps") cfg.growth.refinement_sweeps = py::cast<int>(v);
    else if (key == "split_candidates") cfg.growth.split_candidates = py::cast<int>(v);
    else if (key == "optimal_thresholds") cfg.growth.optimal_thresholds = py::cast<bool>(v);
    else if (key == "spatial_bits") cfg.growth.spatial_bits = py::cast<bool>(v);
    else if (key == "spatial_enforcement") cfg.growth.enforce_spatial_bits = py::cast<bool>(v);
    else if (key == "loss") {
      const std::string name = py::cast<std::string>(v);
      if (name == "svm") cfg.loss.kind = cte::LossKind::Svm;
      else if (name == "softmax") cfg.loss.kind = cte::LossKind::Softmax;
      else if (name == "softmax-distill") cfg.loss.kind = cte::LossKind::SoftmaxDistill;
      else throw py::value_error("unknown loss: " + name);
    }
    else if (key == "lambda_" || key == "lam") cfg.loss.lambda = py::cast<double>(v);
    else if (key == "tolerance") cfg.loss.tolerance = py::cast<double>(v);
    else if (key == "max_iterations") cfg.loss.max_iterations = py::cast<int>(v);
    else if (key == "distill_alpha") cfg.loss.distill_alpha = py::cast<double>(v);
    else if (key == "distill_temperature") cfg.loss.distill_temperature = py::cast<double>(v);
    else if (key == "teacher_file") cfg.teacher_file = py::cast<std::string>(v);
    else if (key == "validation_fraction") cfg.validation_fraction = py::cast<double>(v);
    else if (key == "threads") cfg.threads = py::cast<int>(v);
    else if (key == "seed") cfg.seed = py::cast<uint64_t>(v);
    else throw py::value_error("unknown train option: " + key);
  }
  cfg.validate();
  return cfg;
}

struct Model {
  cte::Ensemble ensemble;
  std::vector<cte::TableLogEntry> log;

  py::array_t<int64_t> classify(const Array& arr) const {
    std::vector<cte::RawImage> images = images_from_array(arr);
    py::array_t<int64_t> out(py::ssize_t(images.size()));
    auto* data = out.mutable_data();
    {
      py::gil_scoped_release release;
      for (size_t i = 0; i < images.size(); ++i) {
        auto sc = cte::class_scores(ensemble, images[i]);
        fprintf(stderr, "dbg img %zu first=%f scores=(%f,%f) label=%d\n", i,
                images[i].data[0], sc[0], sc[1],
                cte::classify(ensemble, images[i]));
        data[i] = cte::classify(ensemble, images[i]);
      }
    }
    fprintf(stderr, "dbg data=%p mutable=%p owndata readback=(%lld,%lld)\n",
            (void*)data, (void*)out.mutable_data(), (long long)data[0],
            (long long)data[1]);
    return out;
  }

  py::array_t<float> scores(const Array& arr) const {
    std::vector<cte::RawImage> images = images_from_array(arr);
    const int C = ensemble.class_count;
    py::array_t<float> out({py::ssize_t(images.size()), py::ssize_t(C)});
    auto* data = out.mutable_data();
    {
      py::gil_scoped_release release;
      for (size_t i = 0; i < images.size(); ++i) {
        const auto s = cte::class_scores(ensemble, images[i]);
        std::copy(s.begin(), s.end(), data + i * size_t(C));
      }
    }
    return out;
  }

  void save(const std::string& path) const { cte::save_model(ensemble, path); }
};

Model train(const Array& images, const std::vector<int>& labels,
            const py::kwargs& kwargs) {
  cte::TrainConfig cfg = config_from_kwargs(kwargs);
  cte::LabeledDataset ds;
  ds.images = images_from_array(images);
  ds.labels = labels;
  int classes = 0;
  for (int l : labels) classes = std::max(classes, l);
  ds.class_count = classes;
  ds.provenance = "python";
  Model model;
  {
    py::gil_scoped_release release;
    cte::TrainResult r = cte::train_ensemble(ds, cfg);
    model.ensemble = std::move(r.ensemble);
    model.log = std::move(r.log);
  }
  return model;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "convolutional tables ensemble classifier";

  m.def(
      "prepare_channels",
      [](const Array& image, const py::kwargs& kwargs) {
        const cte::PrepConfig prep = prep_from_kwargs(kwargs);
        const cte::ExtendedImage ext =
            cte::prepare_channels(image_from_array(image), prep);
        py::array_t<float> out({py::ssize_t(ext.depth()),
                                py::ssize_t(ext.height),
                                py::ssize_t(ext.width)});
        auto* data = out.mutable_data();
        for (int d = 0; d < ext.depth(); ++d) {
          const auto& ch = ext.channel(d).values;
          std::copy(ch.begin(), ch.end(),
                    data + size_t(d) * ch.size());
        }
        return out;
      },
      py::arg("image"),
      "Extended feature channels of one image as a (D_e, H, W) array.");

  m.def("train", &train, py::arg("images"), py::arg("labels"),
        "Train an ensemble. Labels are 1-based class indices.");

  m.def("load_model", [](const std::string& path) {
    Model model;
    model.ensemble = cte::load_model(path);
    return model;
  });

  py::class_<Model>(m, "Model")
      .def("classify", &Model::classify, py::arg("images"),
           "1-based predicted labels for a batch of images.")
      .def("scores", &Model::scores, py::arg("images"),
           "Per-class scores, shape (N, C).")
      .def("save", &Model::save, py::arg("path"))
      .def_property_readonly(
          "classes", [](const Model& m_) { return m_.ensemble.class_count; })
      .def_property_readonly(
          "tables", [](const Model& m_) { return m_.ensemble.table_count(); })
      .def_property_readonly("input_shape",
                             [](const Model& m_) {
                               return py::make_tuple(m_.ensemble.depth,
                                                     m_.ensemble.height,
                                                     m_.ensemble.width);
                             })
      .def_property_readonly("train_log", [](const Model& m_) {
        py::list out;
        for (const auto& e : m_.log) {
          py::dict d;
          d["table"] = e.table;
          d["r_score"] = e.r_score;
          d["objective"] = e.objective;
          d["train_error"] = e.train_error;
          d["val_error"] = e.val_error;
          d["seconds"] = e.seconds;
          out.append(d);
        }
        return out;
      })
      .def("__repr__", [](const Model& m_) {
        std::ostringstream ss;
        ss << "<cte.Model tables=" << m_.ensemble.table_count()
           << " classes=" << m_.ensemble.class_count << " input=("
           << m_.ensemble.depth << ", " << m_.ensemble.height << ", "
           << m_.ensemble.width << ")>";
        return ss.str();
      });
}
