#include "czproxy/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "czproxy/config.hpp"
#include "czproxy/eval.hpp"
#include "czproxy/rng.hpp"

namespace czp {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size == 0) {
    throw ConfigError("train config: batch size must be >= 1");
  }
  // lr = 0 is allowed as an explicit null-step mode.
  if (lr < 0.0 || !std::isfinite(lr)) {
    throw ConfigError("train config: lr must be nonnegative");
  }
  if (weight_decay < 0.0) {
    throw ConfigError("train config: weight decay must be nonnegative");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train config: moment factors must lie in [0,1)");
  }
  if (!(eps > 0.0)) throw ConfigError("train config: eps must be positive");
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

AdamW::AdamW(std::vector<std::pair<std::string, TensorPtr>> params,
             const TrainConfig& cfg)
    : lr_(cfg.lr),
      wd_(cfg.weight_decay),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.eps) {
  for (auto& [name, t] : params) {
    if (!t->requires_grad()) {
      throw ContractError("optimizer: parameter " + name +
                          " does not require grad");
    }
    Slot slot;
    slot.name = name;
    slot.param = t;
    slot.m.assign(t->numel(), 0.0);
    slot.v.assign(t->numel(), 0.0);
    slots_.push_back(std::move(slot));
  }
}

void AdamW::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (Slot& slot : slots_) {
    Tensor& p = *slot.param;
    const std::vector<double>& g = p.grad();
    const bool f32 = p.dtype() == Dtype::F32;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      double m = beta1_ * slot.m[i] + (1.0 - beta1_) * g[i];
      double v = beta2_ * slot.v[i] + (1.0 - beta2_) * g[i] * g[i];
      if (f32) {
        m = static_cast<double>(static_cast<float>(m));
        v = static_cast<double>(static_cast<float>(v));
      }
      slot.m[i] = m;
      slot.v[i] = v;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      // Decoupled weight decay: multiplicative on the parameter, never
      // folded into the gradient.
      double x = p.values()[i] * (1.0 - lr_ * wd_);
      x -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      p.values()[i] = x;
    }
    p.quantize();
  }
}

void AdamW::export_state(
    std::vector<std::pair<std::string, TensorPtr>>& blocks) const {
  for (const Slot& slot : slots_) {
    blocks.emplace_back("opt.m." + slot.name,
                        Tensor::from_values(slot.param->shape(), slot.m,
                                            slot.param->dtype()));
    blocks.emplace_back("opt.v." + slot.name,
                        Tensor::from_values(slot.param->shape(), slot.v,
                                            slot.param->dtype()));
  }
}

void AdamW::load_state(const Checkpoint& ckpt) {
  for (Slot& slot : slots_) {
    const TensorPtr& m = ckpt.block("opt.m." + slot.name);
    const TensorPtr& v = ckpt.block("opt.v." + slot.name);
    if (m->numel() != slot.param->numel() ||
        v->numel() != slot.param->numel()) {
      throw FormatError("checkpoint: optimizer state shape mismatch for " +
                        slot.name);
    }
    slot.m = m->values();
    slot.v = v->values();
  }
  step_ = ckpt.opt_step;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

TensorPtr to_dtype(const TensorPtr& t, Dtype dtype) {
  return Tensor::from_values(t->shape(), t->values(), dtype);
}

Checkpoint snapshot(const Model& model, const AdamW& opt, std::size_t epoch,
                    std::uint64_t seed, double best_auc,
                    std::size_t best_epoch,
                    const std::map<std::string, std::string>& echo) {
  Checkpoint ckpt;
  ckpt.epoch = epoch;
  ckpt.seed = seed;
  ckpt.opt_step = opt.step_count();
  ckpt.best_val_auc = best_auc;
  ckpt.best_epoch = best_epoch;
  ckpt.config = echo;
  for (const auto& [name, t] : model.parameters()) {
    ckpt.blocks.emplace_back(
        name, Tensor::from_values(t->shape(), t->values(), t->dtype()));
  }
  opt.export_state(ckpt.blocks);
  return ckpt;
}

void check_finite(const LossBreakdown& bd, std::size_t epoch,
                  std::size_t batch) {
  const std::pair<const char*, double> parts[] = {
      {"loss_t_a", bd.t_attr}, {"loss_t_o", bd.t_obj},
      {"loss_t_c", bd.t_comp}, {"loss_v_a", bd.v_attr},
      {"loss_v_o", bd.v_obj},  {"loss_v_c", bd.v_comp},
      {"loss_kl", bd.kl},      {"loss_total", bd.total}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) {
      throw DivergenceError("training diverged: " + std::string(name) +
                            " is non-finite at epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(batch));
    }
  }
}

}  // namespace

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,loss_total,loss_t_a,loss_t_o,loss_t_c,loss_v_a,loss_v_o,"
        "loss_v_c,loss_kl,val_S,val_U,val_HM,val_AUC\n";
  for (const EpochLog& e : epochs) {
    os << e.epoch << "," << e.loss.total << "," << e.loss.t_attr << ","
       << e.loss.t_obj << "," << e.loss.t_comp << "," << e.loss.v_attr << ","
       << e.loss.v_obj << "," << e.loss.v_comp << "," << e.loss.kl << ","
       << e.val_seen << "," << e.val_unseen << "," << e.val_hm << ","
       << e.val_auc << "\n";
  }
  return os.str();
}

TrainOutcome train_model(Model& model, const World& world,
                         const TrainConfig& cfg, const std::string& out_dir,
                         const std::map<std::string, std::string>& config_echo,
                         const std::string& resume_from) {
  cfg.validate();
  AdamW opt(model.trainable_parameters(), cfg);

  std::size_t start_epoch = 0;
  double best_auc = -1.0;
  std::size_t best_epoch = 0;
  if (!resume_from.empty()) {
    const Checkpoint ckpt = load_checkpoint(resume_from);
    for (const auto& [name, t] : model.parameters()) {
      t->set_values(ckpt.block(name)->values());
    }
    opt.load_state(ckpt);
    start_epoch = ckpt.epoch;
    best_auc = ckpt.best_val_auc;
    best_epoch = ckpt.best_epoch;
    if (start_epoch > cfg.epochs) {
      throw ConfigError("resume: checkpoint already past requested epochs");
    }
  }

  // The frozen image path never sees gradients, so the whole training split
  // is encoded once up front.
  TensorPtr encoded_train =
      model.encode_images(to_dtype(world.train.features, model.config().dtype));

  const std::size_t n = world.train.records.size();
  const FusionOptions val_fusion{model.config().lambda,
                                 !model.config().no_tp,
                                 !model.config().no_vp};

  TrainOutcome outcome;
  outcome.best_val_auc = best_auc;
  outcome.best_epoch = best_epoch;

  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    CounterRng shuffle_rng(
        CounterRng::derive(CounterRng::derive(cfg.seed, "shuffle"), epoch));
    shuffle_rng.shuffle(order);

    LossBreakdown epoch_loss;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<std::size_t> rows(order.begin() + start,
                                    order.begin() + stop);
      std::vector<Pair> labels;
      labels.reserve(rows.size());
      for (std::size_t r : rows) {
        const SampleRecord& rec = world.train.records[r];
        labels.emplace_back(rec.attr, rec.obj);
      }
      TensorPtr features = ops::embedding_lookup(encoded_train, rows);
      auto [loss, bd] = model.total_loss(features, labels);
      check_finite(bd, epoch + 1, batch_index);
      model.zero_grads();
      backward(loss);
      opt.step();
      model.clamp_temperatures();

      const double w = static_cast<double>(rows.size());
      epoch_loss.t_attr += w * bd.t_attr;
      epoch_loss.t_obj += w * bd.t_obj;
      epoch_loss.t_comp += w * bd.t_comp;
      epoch_loss.v_attr += w * bd.v_attr;
      epoch_loss.v_obj += w * bd.v_obj;
      epoch_loss.v_comp += w * bd.v_comp;
      epoch_loss.kl += w * bd.kl;
      epoch_loss.total += w * bd.total;
      ++batch_index;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    epoch_loss.t_attr *= inv_n;
    epoch_loss.t_obj *= inv_n;
    epoch_loss.t_comp *= inv_n;
    epoch_loss.v_attr *= inv_n;
    epoch_loss.v_obj *= inv_n;
    epoch_loss.v_comp *= inv_n;
    epoch_loss.kl *= inv_n;
    epoch_loss.total *= inv_n;

    const EvalReport val =
        evaluate_split(model, world.val, WorldMode::Closed, val_fusion);

    EpochLog log;
    log.epoch = epoch + 1;
    log.loss = epoch_loss;
    log.val_seen = val.seen;
    log.val_unseen = val.unseen;
    log.val_hm = val.hm;
    log.val_auc = val.auc;
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    outcome.log.epochs.push_back(log);

    if (val.auc > best_auc) {
      best_auc = val.auc;
      best_epoch = epoch + 1;
      outcome.best_val_auc = best_auc;
      outcome.best_epoch = best_epoch;
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        outcome.best_checkpoint = out_dir + "/best.ckpt";
        save_checkpoint(outcome.best_checkpoint,
                        snapshot(model, opt, epoch + 1, cfg.seed, best_auc,
                                 best_epoch, config_echo));
      }
    }
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    outcome.final_checkpoint = out_dir + "/final.ckpt";
    save_checkpoint(outcome.final_checkpoint,
                    snapshot(model, opt, cfg.epochs, cfg.seed, best_auc,
                             best_epoch, config_echo));
  }
  return outcome;
}

Model model_from_checkpoint(const Checkpoint& ckpt,
                            const CompositionSpace& space) {
  KVConfig kv;
  kv.entries = ckpt.config;
  Model model(space, model_config_from_kv(kv));
  for (const auto& [name, t] : model.parameters()) {
    t->set_values(ckpt.block(name)->values());
  }
  return model;
}

}  // namespace czp
