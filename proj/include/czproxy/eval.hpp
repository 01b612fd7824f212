#pragma once

#include <string>
#include <vector>

#include "czproxy/model.hpp"
#include "czproxy/space.hpp"
#include "czproxy/world.hpp"

namespace czp {

// How text- and visual-path probabilities are combined at inference:
// p = p_text + lambda * p_visual per branch, with either side droppable
// for the ablation grid.
struct FusionOptions {
  double lambda = 1.0;
  bool use_text = true;
  bool use_visual = true;
};

// Per-sample fused composition scores p'(c|x) over the prediction space.
struct ScoreTable {
  std::vector<Pair> pred_space;
  std::vector<bool> column_unseen;        // pair not in C_s
  std::vector<std::size_t> column_flat;   // flat pair index per column
  std::vector<std::vector<double>> scores;
  std::vector<Pair> ground_truth;
  std::vector<bool> gt_seen;
};

struct SweepPoint {
  double bias = 0;
  double seen_acc = 0;
  double unseen_acc = 0;
};

struct EvalReport {
  double seen = 0;    // best seen accuracy over the sweep
  double unseen = 0;  // best unseen accuracy
  double hm = 0;      // best harmonic mean
  double auc = 0;
  std::vector<SweepPoint> curve;
  std::string to_json() const;
};

// Fused per-branch probabilities for one or more samples; plain values.
struct FusedBranchProbs {
  std::vector<std::vector<double>> attr, obj, comp;  // per sample
};

FusedBranchProbs fuse_branches(const Model& model, const TensorPtr& features,
                               const std::vector<Pair>& pred_space,
                               const FusionOptions& fusion);

// p'(c_ij | x) = p(c_ij) + p(a_i) + p(o_j) for one sample, over pred_space.
std::vector<double> assemble_pair_scores(const FusedBranchProbs& probs,
                                         std::size_t sample,
                                         const std::vector<Pair>& pred_space);

// First maximal score; exact ties go to the lowest flat pair index.
std::size_t argmax_lowest_flat(const std::vector<double>& scores,
                               const std::vector<std::size_t>& flat_indices);

// Builds the fused score table for already-encoded features.
ScoreTable build_score_table(const Model& model, const TensorPtr& features,
                             const std::vector<SampleRecord>& records,
                             WorldMode mode, const FusionOptions& fusion);

// Argmax over the prediction space with lowest-flat-pair-index tie-break.
// Returns the position within pred_space.
std::size_t predict(const Model& model, const TensorPtr& feature_row,
                    WorldMode mode, const FusionOptions& fusion);

// Independent route: explicit nested loops over attributes and objects with
// scalar arithmetic and linear membership scans. Must agree with predict on
// every input.
std::size_t predict_oracle(const Model& model, const TensorPtr& feature_row,
                           WorldMode mode, const FusionOptions& fusion);

// Calibration-bias sweep over the exact per-sample critical biases
// (best-seen-score minus best-unseen-score) plus two sentinel endpoints.
// Requires at least one seen-labeled and one unseen-labeled sample.
EvalReport metric_sweep(const ScoreTable& table);

// Convenience: encode a split's raw features and evaluate.
EvalReport evaluate_split(const Model& model, const SplitData& split,
                          WorldMode mode, const FusionOptions& fusion);

// Sweep curve as `bias, seen_acc, unseen_acc` CSV.
std::string sweep_csv(const EvalReport& report);

struct AblationRow {
  std::string cell;
  EvalReport report;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::string to_csv() const;
  const EvalReport& cell(const std::string& name) const;
};

struct TrainConfig;  // trainer.hpp

// Trains/evaluates the component-removal grid (train-time and
// inference-time) and the 2x2 decoupler-exchange grid, all on the same seed,
// evaluating the test split in closed-world mode.
AblationResult run_ablation_suite(const World& world, const ModelConfig& mc,
                                  const struct TrainConfig& tc);

}  // namespace czp
