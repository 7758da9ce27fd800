// Python bindings for the main operations: synthetic data generation,
// manifest access, clip sampling, the F5C model, the SupCon objective,
// training, and the AUC evaluation protocol.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "json.hpp"

#include "fingerdiff/checkpoint.hpp"
#include "fingerdiff/config.hpp"
#include "fingerdiff/eval.hpp"
#include "fingerdiff/report.hpp"
#include "fingerdiff/frames.hpp"
#include "fingerdiff/sampler.hpp"
#include "fingerdiff/supcon.hpp"
#include "fingerdiff/synth.hpp"
#include "fingerdiff/trainer.hpp"
#include "fingerdiff/version.hpp"

namespace py = pybind11;
namespace fd = fingerdiff;
using nlohmann::json;

namespace {

json py_to_json(const py::handle& obj) {
  if (obj.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
  if (py::isinstance<py::int_>(obj)) return obj.cast<std::int64_t>();
  if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
  if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
  if (py::isinstance<py::dict>(obj)) {
    json j = json::object();
    for (const auto& item : obj.cast<py::dict>())
      j[item.first.cast<std::string>()] = py_to_json(item.second);
    return j;
  }
  if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
    json j = json::array();
    for (const auto& item : obj.cast<py::sequence>()) j.push_back(py_to_json(item));
    return j;
  }
  throw py::type_error("unsupported config value type");
}

py::object json_to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null: return py::none();
    case json::value_t::boolean: return py::bool_(j.get<bool>());
    case json::value_t::number_integer: return py::int_(j.get<std::int64_t>());
    case json::value_t::number_unsigned: return py::int_(j.get<std::uint64_t>());
    case json::value_t::number_float: return py::float_(j.get<double>());
    case json::value_t::string: return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const auto& v : j) out.append(json_to_py(v));
      return out;
    }
    case json::value_t::object: {
      py::dict out;
      for (const auto& [k, v] : j.items()) out[py::str(k)] = json_to_py(v);
      return out;
    }
    default: return py::none();
  }
}

// Section configs come in as python dicts holding only the keys to override.
template <typename Cfg>
Cfg config_from_dict(const py::dict& overrides) {
  json merged = json(Cfg{});
  const json incoming = py_to_json(overrides);
  for (const auto& [key, value] : incoming.items()) {
    if (!merged.contains(key))
      throw fd::ConfigError("unknown config key '" + key + "'");
    merged[key] = value;
  }
  return merged.get<Cfg>();
}

fd::Tensor<float> clip_from_array(const py::array_t<float, py::array::c_style>& arr) {
  const auto buf = arr.request();
  if (buf.ndim != 4) throw fd::NumericError("clip must be [T, 1, H, W]");
  fd::Tensor<float> clip({buf.shape[0], buf.shape[1], buf.shape[2], buf.shape[3]});
  std::copy(static_cast<const float*>(buf.ptr),
            static_cast<const float*>(buf.ptr) + clip.numel(), clip.ptr());
  return clip;
}

py::array_t<float> array_from_tensor(const fd::Tensor<float>& t) {
  py::array_t<float> out(t.shape);
  std::copy(t.ptr(), t.ptr() + t.numel(), static_cast<float*>(out.request().ptr));
  return out;
}

class PyModel {
 public:
  PyModel(const py::dict& cfg, std::uint64_t seed)
      : model_(config_from_dict<fd::ModelConfig>(cfg), seed) {}
  explicit PyModel(fd::F5CModel<float> model) : model_(std::move(model)) {}

  py::array_t<float> embed(const py::array_t<float, py::array::c_style>& clip) const {
    return array_from_tensor(model_.embed_clip(clip_from_array(clip)));
  }

  py::array_t<float> backbone(const py::array_t<float, py::array::c_style>& clip) const {
    return array_from_tensor(model_.backbone_forward(clip_from_array(clip)));
  }

  py::array_t<float> condition(const py::array_t<float, py::array::c_style>& clip) const {
    return array_from_tensor(model_.condition_forward(clip_from_array(clip)));
  }

  py::array_t<float> embed_video(const std::filesystem::path& manifest_path,
                                 const std::string& video_path,
                                 std::int64_t clip_length) const {
    const fd::Manifest manifest = fd::load_manifest(manifest_path);
    const fd::VideoRecord* rec = manifest.find_by_path(video_path);
    if (!rec) throw fd::DataError("video '" + video_path + "' not in manifest");
    const auto emb = fd::embed_video(model_, *rec, clip_length);
    py::array_t<float> out(static_cast<py::ssize_t>(emb.size()));
    auto* ptr = static_cast<float*>(out.request().ptr);
    for (std::size_t i = 0; i < emb.size(); ++i) ptr[i] = static_cast<float>(emb[i]);
    return out;
  }

  py::dict count_parameters() {
    const auto counts = model_.count_parameters();
    py::dict out;
    out["backbone"] = counts.backbone;
    out["head"] = counts.head;
    out["total"] = counts.total;
    return out;
  }

  py::dict config() const { return json_to_py(json(model_.config())).cast<py::dict>(); }

  void save(const std::filesystem::path& base) {
    fd::CheckpointMeta meta;
    meta.model_config = model_.config();
    fd::save_checkpoint(model_, base, meta);
  }

  static PyModel load(const std::filesystem::path& base) {
    return PyModel(fd::load_checkpoint<float>(base));
  }

  fd::F5CModel<float> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "appearance-agnostic driver verification for synthetic talking-head video";
  m.attr("__version__") = fd::kToolVersion;

  py::register_exception<fd::ConfigError>(m, "FdConfigError");
  py::register_exception<fd::DataError>(m, "FdDataError");
  py::register_exception<fd::NumericError>(m, "FdNumericError");
  py::register_exception<fd::IoError>(m, "FdIoError");

  m.def(
      "generate_synthetic_dataset",
      [](const py::dict& cfg, const std::filesystem::path& out_dir) {
        const auto synth = config_from_dict<fd::SynthConfig>(cfg);
        const fd::Manifest manifest = fd::generate_synthetic_dataset(synth, out_dir);
        return py::make_tuple((out_dir / "manifest.jsonl").string(),
                              manifest.records.size());
      },
      py::arg("config"), py::arg("out_dir"),
      "Render a synthetic dataset; returns (manifest_path, record_count).");

  m.def(
      "load_manifest",
      [](const std::filesystem::path& path) {
        const fd::Manifest manifest = fd::load_manifest(path);
        py::list rows;
        for (const auto& rec : manifest.records) {
          py::dict row;
          row["video_path"] = rec.video_path;
          row["target_id"] = rec.target_id;
          row["driver_id"] = rec.driver_id;
          row["generator"] = rec.generator;
          row["split"] = fd::split_name(rec.split);
          row["num_frames"] = rec.num_frames;
          row["fps"] = rec.fps;
          rows.append(row);
        }
        return rows;
      },
      py::arg("path"), "Load and validate a manifest; returns records as dicts.");

  m.def(
      "read_clip",
      [](const std::filesystem::path& manifest_path, const std::string& video_path,
         std::int64_t start, std::int64_t length) {
        const fd::Manifest manifest = fd::load_manifest(manifest_path);
        const fd::VideoRecord* rec = manifest.find_by_path(video_path);
        if (!rec) throw fd::DataError("video '" + video_path + "' not in manifest");
        return array_from_tensor(fd::read_clip_frames(*rec, start, length));
      },
      py::arg("manifest"), py::arg("video_path"), py::arg("start"), py::arg("length"));

  m.def(
      "sample_start",
      [](std::int64_t num_frames, std::int64_t clip_length, const std::string& mode,
         std::uint64_t seed) {
        fd::SamplerConfig cfg;
        cfg.clip_length = clip_length;
        cfg.rng_seed = seed;
        if (mode == "train_random") {
          cfg.mode = fd::SampleMode::train_random;
          fd::Rng rng(seed);
          return fd::sample_start(num_frames, cfg, &rng);
        }
        cfg.mode = fd::SampleMode::eval_center;
        return fd::sample_start(num_frames, cfg, nullptr);
      },
      py::arg("num_frames"), py::arg("clip_length"), py::arg("mode") = "eval_center",
      py::arg("seed") = 0);

  m.def(
      "supcon_loss",
      [](const py::array_t<double, py::array::c_style>& emb, const std::vector<int>& labels,
         double temperature, const std::string& reduction) {
        const auto buf = emb.request();
        if (buf.ndim != 2) throw fd::NumericError("embeddings must be [B, D]");
        fd::Tensor<double> t({buf.shape[0], buf.shape[1]});
        std::copy(static_cast<const double*>(buf.ptr),
                  static_cast<const double*>(buf.ptr) + t.numel(), t.ptr());
        fd::SupConConfig cfg;
        cfg.temperature = temperature;
        cfg.reduction = reduction == "sum" ? fd::Reduction::sum : fd::Reduction::mean;
        return fd::supcon_loss(t, labels, cfg);
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("temperature") = 0.07,
      py::arg("reduction") = "mean");

  m.def(
      "supcon_grad_check",
      [](const py::array_t<double, py::array::c_style>& emb, const std::vector<int>& labels,
         double temperature) {
        const auto buf = emb.request();
        fd::Tensor<double> t({buf.shape[0], buf.shape[1]});
        std::copy(static_cast<const double*>(buf.ptr),
                  static_cast<const double*>(buf.ptr) + t.numel(), t.ptr());
        fd::SupConConfig cfg;
        cfg.temperature = temperature;
        return fd::supcon_grad_check(t, labels, cfg);
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("temperature") = 0.07);

  m.def(
      "auc",
      [](const std::vector<double>& pos, const std::vector<double>& neg) {
        return fd::auc(pos, neg);
      },
      py::arg("positives"), py::arg("negatives"),
      "Mann-Whitney AUC with ties counted as half.");

  m.def(
      "lr_at",
      [](std::int64_t step, const py::dict& train_cfg) {
        return fd::lr_at(step, config_from_dict<fd::TrainConfig>(train_cfg));
      },
      py::arg("step"), py::arg("train_config"));

  m.def(
      "train",
      [](const std::filesystem::path& manifest_path, const py::dict& model_cfg,
         const py::dict& train_cfg, const py::dict& sampler_cfg,
         const std::filesystem::path& out_dir) {
        const fd::Manifest manifest = fd::load_manifest(manifest_path);
        const auto result = fd::train_model(
            manifest, config_from_dict<fd::ModelConfig>(model_cfg),
            config_from_dict<fd::TrainConfig>(train_cfg),
            config_from_dict<fd::SamplerConfig>(sampler_cfg), out_dir);
        py::dict out;
        out["final_checkpoint"] = result.final_checkpoint.string();
        out["best_checkpoint"] = result.best_checkpoint.string();
        out["best_val_auc"] = result.best_val_auc;
        out["loss_history"] = result.loss_history;
        out["metrics"] = result.metrics_path.string();
        return out;
      },
      py::arg("manifest"), py::arg("model_config"), py::arg("train_config"),
      py::arg("sampler_config"), py::arg("out_dir"));

  m.def(
      "evaluate",
      [](const std::filesystem::path& manifest_path, const std::filesystem::path& checkpoint,
         std::int64_t clip_length, const std::string& split) {
        const fd::Manifest manifest = fd::load_manifest(manifest_path);
        fd::CheckpointMeta meta;
        const fd::F5CModel<float> model = fd::load_checkpoint<float>(checkpoint, &meta);
        fd::EvalOptions opts;
        opts.split = fd::split_from_name(split);
        opts.clip_length = clip_length;
        opts.condition = fd::condition_name(meta.model_config.condition);
        const fd::EvalReport report =
            fd::evaluate(manifest, fd::model_embedder(&model, clip_length), opts);
        return json_to_py(fd::report_to_json(report)).cast<py::dict>();
      },
      py::arg("manifest"), py::arg("checkpoint"), py::arg("clip_length") = 64,
      py::arg("split") = "test");

  py::class_<PyModel>(m, "Model")
      .def(py::init<const py::dict&, std::uint64_t>(), py::arg("config") = py::dict(),
           py::arg("seed") = 0)
      .def("embed", &PyModel::embed, py::arg("clip"),
           "Clip [T,1,H,W] float32 in [0,1] -> unit-norm embedding.")
      .def("backbone", &PyModel::backbone, py::arg("clip"))
      .def("condition", &PyModel::condition, py::arg("clip"))
      .def("embed_video", &PyModel::embed_video, py::arg("manifest"), py::arg("video_path"),
           py::arg("clip_length") = 64)
      .def("count_parameters", &PyModel::count_parameters)
      .def("config", &PyModel::config)
      .def("save", &PyModel::save, py::arg("base_path"))
      .def_static("load", &PyModel::load, py::arg("base_path"));
}
