#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "czproxy/dataio.hpp"
#include "czproxy/model.hpp"
#include "czproxy/world.hpp"

namespace czp {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double lr = 5e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

// Adaptive-moment optimizer with decoupled (multiplicative) weight decay.
// Moment state is quantized to each parameter's dtype so checkpoints
// round-trip bit-exactly.
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, TensorPtr>> params,
        const TrainConfig& cfg);

  void step();
  std::size_t step_count() const { return step_; }
  void set_step_count(std::size_t t) { step_ = t; }

  void export_state(
      std::vector<std::pair<std::string, TensorPtr>>& blocks) const;
  void load_state(const Checkpoint& ckpt);

 private:
  struct Slot {
    std::string name;
    TensorPtr param;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  double lr_, wd_, beta1_, beta2_, eps_;
  std::size_t step_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown loss;
  double val_seen = 0, val_unseen = 0, val_hm = 0, val_auc = 0;
  double wall_seconds = 0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::string to_csv() const;
};

struct TrainOutcome {
  TrainLog log;
  std::size_t best_epoch = 0;
  double best_val_auc = -1.0;
  std::string final_checkpoint;  // paths, empty when out_dir is empty
  std::string best_checkpoint;
};

// Runs `epochs` deterministic passes: shuffles keyed by (seed, epoch),
// forward/backward/step per batch, validation metrics per epoch, and emits
// best-validation-AUC and final checkpoints when out_dir is nonempty.
// A non-finite loss aborts with a DivergenceError naming the first
// non-finite component. resume_from continues a previous run's final
// checkpoint up to `epochs` total.
TrainOutcome train_model(Model& model, const World& world,
                         const TrainConfig& cfg, const std::string& out_dir,
                         const std::map<std::string, std::string>& config_echo,
                         const std::string& resume_from = "");

// Rebuilds a model (architecture from the echoed config) and loads its
// parameters from a checkpoint.
Model model_from_checkpoint(const Checkpoint& ckpt,
                            const CompositionSpace& space);

}  // namespace czp
