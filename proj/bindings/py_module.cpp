// Python bindings for the main workflow: world generation, training,
// evaluation, prediction, gradient checks, and VPTF I/O.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>

#include "czproxy/config.hpp"
#include "czproxy/dataio.hpp"
#include "czproxy/eval.hpp"
#include "czproxy/gradcheck.hpp"
#include "czproxy/model.hpp"
#include "czproxy/trainer.hpp"
#include "czproxy/vptf.hpp"
#include "czproxy/world.hpp"

namespace py = pybind11;

namespace {

czp::KVConfig kv_from_dict(const py::dict& overrides) {
  czp::KVConfig kv;
  for (const auto& item : overrides) {
    kv.set(py::str(item.first).cast<std::string>(),
           py::str(item.second).cast<std::string>());
  }
  kv.validate_keys();
  return kv;
}

py::dict report_to_dict(const czp::EvalReport& report) {
  py::dict out;
  out["seen"] = report.seen;
  out["unseen"] = report.unseen;
  out["hm"] = report.hm;
  out["auc"] = report.auc;
  py::list curve;
  for (const czp::SweepPoint& pt : report.curve) {
    py::dict p;
    p["bias"] = pt.bias;
    p["seen_acc"] = pt.seen_acc;
    p["unseen_acc"] = pt.unseen_acc;
    curve.append(p);
  }
  out["curve"] = curve;
  return out;
}

czp::WorldMode parse_mode(const std::string& mode) {
  if (mode == "closed") return czp::WorldMode::Closed;
  if (mode == "open") return czp::WorldMode::Open;
  throw czp::ConfigError("mode: expected closed or open, got '" + mode + "'");
}

}  // namespace

PYBIND11_MODULE(_czproxy, m) {
  m.doc() = "Compositional zero-shot classifier with textual prototypes and "
            "text-initialized visual proxies";

  py::register_exception<czp::Error>(m, "CzproxyError", PyExc_RuntimeError);

  m.def(
      "generate_world",
      [](const std::string& out_dir, std::size_t attrs, std::size_t objs,
         std::size_t dim, std::size_t raw_dim, std::size_t samples_per_comp,
         double gap, double noise, double unseen_frac, std::uint64_t seed) {
        czp::SyntheticWorldConfig wc;
        wc.n_attrs = attrs;
        wc.n_objs = objs;
        wc.feat_dim = dim;
        wc.raw_dim = raw_dim;
        wc.samples_per_comp = samples_per_comp;
        wc.gap = gap;
        wc.noise_sigma = noise;
        wc.unseen_frac = unseen_frac;
        wc.seed = seed;
        const czp::World world = czp::generate_world(wc);
        czp::save_world(world, out_dir);
        py::dict info;
        info["train_samples"] = world.train.records.size();
        info["val_samples"] = world.val.records.size();
        info["test_samples"] = world.test.records.size();
        info["seen_pairs"] = world.space.seen_pairs.size();
        info["unseen_pairs"] = world.space.unseen_pairs.size();
        return info;
      },
      py::arg("out_dir"), py::arg("attrs") = 8, py::arg("objs") = 8,
      py::arg("dim") = 64, py::arg("raw_dim") = 96,
      py::arg("samples_per_comp") = 20, py::arg("gap") = 2.0,
      py::arg("noise") = 0.3, py::arg("unseen_frac") = 0.25,
      py::arg("seed") = 0,
      "Generate a synthetic world directory and return its summary.");

  m.def(
      "train",
      [](const std::string& world_dir, const std::string& out_dir,
         const py::dict& config, const std::string& resume) {
        const czp::World world = czp::load_world(world_dir);
        czp::KVConfig kv = kv_from_dict(config);
        if (!kv.has("feat_dim")) {
          kv.set("feat_dim", std::to_string(world.config.feat_dim));
        }
        if (!kv.has("raw_dim")) {
          kv.set("raw_dim", std::to_string(world.train.features->cols()));
        }
        const czp::ModelConfig mc = czp::model_config_from_kv(kv);
        const czp::TrainConfig tc = czp::train_config_from_kv(kv);
        czp::Model model(world.space, mc);
        const czp::TrainOutcome outcome = czp::train_model(
            model, world, tc, out_dir, czp::kv_from_configs(mc, tc).entries,
            resume);
        py::dict out;
        out["epochs"] = outcome.log.epochs.size();
        out["best_epoch"] = outcome.best_epoch;
        out["best_val_auc"] = outcome.best_val_auc;
        out["final_checkpoint"] = outcome.final_checkpoint;
        out["best_checkpoint"] = outcome.best_checkpoint;
        if (!outcome.log.epochs.empty()) {
          out["final_loss"] = outcome.log.epochs.back().loss.total;
          out["first_loss"] = outcome.log.epochs.front().loss.total;
        }
        return out;
      },
      py::arg("world_dir"), py::arg("out_dir"),
      py::arg("config") = py::dict(), py::arg("resume") = std::string(),
      "Train a model on a world directory; returns a run summary.");

  m.def(
      "evaluate",
      [](const std::string& world_dir, const std::string& ckpt_path,
         const std::string& mode, double lam) {
        const czp::World world = czp::load_world(world_dir);
        const czp::Checkpoint ckpt = czp::load_checkpoint(ckpt_path);
        czp::Model model = czp::model_from_checkpoint(ckpt, world.space);
        czp::FusionOptions fusion;
        fusion.lambda = lam >= 0.0 ? lam : model.config().lambda;
        fusion.use_text = !model.config().no_tp;
        fusion.use_visual = !model.config().no_vp;
        return report_to_dict(czp::evaluate_split(
            model, world.test, parse_mode(mode), fusion));
      },
      py::arg("world_dir"), py::arg("ckpt"), py::arg("mode") = "closed",
      py::arg("lam") = -1.0,
      "Evaluate a checkpoint on the test split; returns the metric report.");

  m.def(
      "predict",
      [](const std::string& world_dir, const std::string& ckpt_path,
         const std::string& split, std::size_t row, const std::string& mode,
         double lam) {
        const czp::World world = czp::load_world(world_dir);
        const czp::Checkpoint ckpt = czp::load_checkpoint(ckpt_path);
        czp::Model model = czp::model_from_checkpoint(ckpt, world.space);
        const czp::SplitData& data = split == "train" ? world.train
                                     : split == "val" ? world.val
                                                      : world.test;
        if (row >= data.records.size()) {
          throw czp::IndexError("predict: row out of range");
        }
        const std::size_t raw_dim = data.features->cols();
        std::vector<double> vals(
            data.features->values().begin() + row * raw_dim,
            data.features->values().begin() + (row + 1) * raw_dim);
        czp::TensorPtr raw = czp::Tensor::from_values(
            {1, raw_dim}, std::move(vals), model.config().dtype);
        czp::TensorPtr feat = model.encode_images(raw);
        czp::FusionOptions fusion;
        fusion.lambda = lam >= 0.0 ? lam : model.config().lambda;
        fusion.use_text = !model.config().no_tp;
        fusion.use_visual = !model.config().no_vp;
        const czp::WorldMode wm = parse_mode(mode);
        const std::size_t pos = czp::predict(model, feat, wm, fusion);
        const auto pred_space = czp::build_prediction_space(world.space, wm);
        py::dict out;
        out["position"] = pos;
        out["attr"] = pred_space[pos].first;
        out["obj"] = pred_space[pos].second;
        out["attr_name"] = world.space.attributes[pred_space[pos].first];
        out["obj_name"] = world.space.objects[pred_space[pos].second];
        return out;
      },
      py::arg("world_dir"), py::arg("ckpt"), py::arg("split") = "test",
      py::arg("row") = 0, py::arg("mode") = "closed", py::arg("lam") = -1.0,
      "Predict the composition of one stored sample.");

  m.def(
      "grad_check",
      [](const std::string& scope, std::uint64_t seed, std::size_t seeds) {
        const auto results = scope == "op" ? czp::grad_check_ops(seeds)
                                           : czp::grad_check_model(seed);
        double worst = 0.0;
        py::dict per_group;
        for (const auto& r : results) {
          per_group[py::str(r.name)] = r.max_rel_err;
          worst = std::max(worst, r.max_rel_err);
        }
        py::dict out;
        out["max_rel_err"] = worst;
        out["groups"] = per_group;
        out["pass"] = worst < 1e-4;
        return out;
      },
      py::arg("scope") = "model", py::arg("seed") = 0, py::arg("seeds") = 20,
      "Finite-difference gradient verification; scope is 'op' or 'model'.");

  m.def(
      "read_vptf",
      [](const std::string& path) {
        const czp::TensorPtr t = czp::read_vptf_file(path);
        py::dict out;
        out["shape"] = t->shape();
        out["dtype"] = t->dtype() == czp::Dtype::F32 ? "f32" : "f64";
        out["values"] = t->values();
        return out;
      },
      py::arg("path"), "Read a VPTF tensor file.");

  m.def(
      "write_vptf",
      [](const std::string& path, const std::vector<std::size_t>& shape,
         const std::vector<double>& values, const std::string& dtype) {
        const czp::Dtype dt = dtype == "f32" ? czp::Dtype::F32
                              : dtype == "f64"
                                  ? czp::Dtype::F64
                                  : throw czp::ConfigError(
                                        "dtype: expected f32 or f64");
        czp::write_vptf_file(path,
                             *czp::Tensor::from_values(shape, values, dt));
      },
      py::arg("path"), py::arg("shape"), py::arg("values"),
      py::arg("dtype") = "f64", "Write a VPTF tensor file.");

  m.attr("__version__") = "0.1.0";
}
