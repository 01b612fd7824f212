#include "czproxy/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "czproxy/config.hpp"
#include "czproxy/trainer.hpp"

namespace czp {

using nlohmann::json;

namespace {

std::vector<std::vector<double>> rows_of(const TensorPtr& t) {
  std::vector<std::vector<double>> out(t->rows(),
                                       std::vector<double>(t->cols()));
  for (std::size_t i = 0; i < t->rows(); ++i) {
    for (std::size_t j = 0; j < t->cols(); ++j) {
      out[i][j] = t->values()[i * t->cols() + j];
    }
  }
  return out;
}

void fuse_into(std::vector<std::vector<double>>& acc, const TensorPtr& probs,
               double weight, bool init) {
  const auto rows = rows_of(probs);
  if (init) {
    acc.assign(rows.size(), std::vector<double>(rows[0].size(), 0.0));
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      acc[i][j] += weight * rows[i][j];
    }
  }
}

// Strictly-better comparison with lowest-flat-pair-index tie-break.
bool better(double score, std::size_t flat, double best_score,
            std::size_t best_flat) {
  if (score > best_score) return true;
  return score == best_score && flat < best_flat;
}

}  // namespace

FusedBranchProbs fuse_branches(const Model& model, const TensorPtr& features,
                               const std::vector<Pair>& pred_space,
                               const FusionOptions& fusion) {
  if (!fusion.use_text && !fusion.use_visual) {
    throw ContractError("fusion: both paths disabled");
  }
  if (fusion.lambda < 0.0) throw ConfigError("fusion: lambda must be >= 0");
  FusedBranchProbs out;
  bool init = true;
  if (fusion.use_text) {
    const BranchOutput text = model.text_path(features, pred_space);
    fuse_into(out.attr, text.attr_probs, 1.0, init);
    fuse_into(out.obj, text.obj_probs, 1.0, init);
    fuse_into(out.comp, text.comp_probs, 1.0, init);
    init = false;
  }
  if (fusion.use_visual && fusion.lambda != 0.0) {
    const BranchOutput vis = model.visual_path(features, pred_space);
    const double w = fusion.use_text ? fusion.lambda : 1.0;
    fuse_into(out.attr, vis.attr_probs, w, init);
    fuse_into(out.obj, vis.obj_probs, w, init);
    fuse_into(out.comp, vis.comp_probs, w, init);
    init = false;
  }
  if (init) {
    // use_visual with lambda == 0 and no text path: nothing contributed.
    throw ContractError("fusion: no path contributed to the score");
  }
  return out;
}

std::vector<double> assemble_pair_scores(const FusedBranchProbs& probs,
                                         std::size_t sample,
                                         const std::vector<Pair>& pred_space) {
  std::vector<double> row(pred_space.size());
  for (std::size_t c = 0; c < pred_space.size(); ++c) {
    const Pair& p = pred_space[c];
    row[c] = probs.comp[sample][c] + probs.attr[sample][p.first] +
             probs.obj[sample][p.second];
  }
  return row;
}

std::size_t argmax_lowest_flat(const std::vector<double>& scores,
                               const std::vector<std::size_t>& flat_indices) {
  if (scores.empty() || scores.size() != flat_indices.size()) {
    throw ShapeError("argmax: scores/indices disagree");
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (better(scores[c], flat_indices[c], scores[best],
               flat_indices[best])) {
      best = c;
    }
  }
  return best;
}

ScoreTable build_score_table(const Model& model, const TensorPtr& features,
                             const std::vector<SampleRecord>& records,
                             WorldMode mode, const FusionOptions& fusion) {
  const CompositionSpace& space = model.space();
  ScoreTable table;
  table.pred_space = build_prediction_space(space, mode);
  table.column_unseen.reserve(table.pred_space.size());
  table.column_flat.reserve(table.pred_space.size());
  for (const Pair& p : table.pred_space) {
    table.column_unseen.push_back(!space.is_seen(p));
    table.column_flat.push_back(space.flat_index(p));
  }

  const FusedBranchProbs probs =
      fuse_branches(model, features, table.pred_space, fusion);
  table.scores.resize(records.size());
  for (std::size_t s = 0; s < records.size(); ++s) {
    table.scores[s] = assemble_pair_scores(probs, s, table.pred_space);
    const Pair gt{records[s].attr, records[s].obj};
    table.ground_truth.push_back(gt);
    table.gt_seen.push_back(space.is_seen(gt));
  }
  return table;
}

std::size_t predict(const Model& model, const TensorPtr& feature_row,
                    WorldMode mode, const FusionOptions& fusion) {
  const CompositionSpace& space = model.space();
  const std::vector<Pair> pred_space = build_prediction_space(space, mode);
  const FusedBranchProbs probs =
      fuse_branches(model, feature_row, pred_space, fusion);
  const std::vector<double> scores =
      assemble_pair_scores(probs, 0, pred_space);
  std::vector<std::size_t> flat(pred_space.size());
  for (std::size_t c = 0; c < pred_space.size(); ++c) {
    flat[c] = space.flat_index(pred_space[c]);
  }
  return argmax_lowest_flat(scores, flat);
}

std::size_t predict_oracle(const Model& model, const TensorPtr& feature_row,
                           WorldMode mode, const FusionOptions& fusion) {
  const CompositionSpace& space = model.space();
  const std::vector<Pair> pred_space = build_prediction_space(space, mode);
  const FusedBranchProbs probs =
      fuse_branches(model, feature_row, pred_space, fusion);

  bool have_best = false;
  double best_score = 0.0;
  std::size_t best_flat = 0, best_pos = 0;
  for (std::size_t i = 0; i < space.n_attrs(); ++i) {
    for (std::size_t j = 0; j < space.n_objs(); ++j) {
      // Linear membership scan, independent of any index map.
      std::size_t pos = pred_space.size();
      for (std::size_t c = 0; c < pred_space.size(); ++c) {
        if (pred_space[c].first == i && pred_space[c].second == j) {
          pos = c;
          break;
        }
      }
      if (pos == pred_space.size()) continue;
      double score = probs.comp[0][pos];
      score += probs.attr[0][i];
      score += probs.obj[0][j];
      const std::size_t flat = i * space.n_objs() + j;
      if (!have_best || score > best_score ||
          (score == best_score && flat < best_flat)) {
        have_best = true;
        best_score = score;
        best_flat = flat;
        best_pos = pos;
      }
    }
  }
  if (!have_best) throw ContractError("predict_oracle: empty prediction space");
  return best_pos;
}

EvalReport metric_sweep(const ScoreTable& table) {
  const std::size_t n_cols = table.pred_space.size();
  const std::size_t n_samples = table.scores.size();
  bool any_seen_col = false, any_unseen_col = false;
  for (bool u : table.column_unseen) (u ? any_unseen_col : any_seen_col) = true;
  std::size_t n_seen = 0, n_unseen = 0;
  for (bool s : table.gt_seen) (s ? n_seen : n_unseen) += 1;
  if (n_seen == 0 || n_unseen == 0) {
    throw ContractError(
        "metric_sweep: need at least one seen and one unseen sample");
  }
  if (!any_seen_col || !any_unseen_col) {
    throw ContractError(
        "metric_sweep: prediction space must contain seen and unseen pairs");
  }

  // Exact candidate biases: per-sample best-seen minus best-unseen score,
  // plus sentinels outside the critical range.
  std::set<double> candidates;
  for (std::size_t s = 0; s < n_samples; ++s) {
    double best_seen = -std::numeric_limits<double>::infinity();
    double best_unseen = best_seen;
    for (std::size_t c = 0; c < n_cols; ++c) {
      const double v = table.scores[s][c];
      if (table.column_unseen[c]) {
        best_unseen = std::max(best_unseen, v);
      } else {
        best_seen = std::max(best_seen, v);
      }
    }
    candidates.insert(best_seen - best_unseen);
  }
  const double lo = *candidates.begin() - 1.0;
  const double hi = *candidates.rbegin() + 1.0;
  candidates.insert(lo);
  candidates.insert(hi);

  EvalReport report;
  for (double bias : candidates) {
    std::size_t seen_correct = 0, unseen_correct = 0;
    for (std::size_t s = 0; s < n_samples; ++s) {
      double best_score = -std::numeric_limits<double>::infinity();
      std::size_t best_flat = static_cast<std::size_t>(-1);
      std::size_t best_col = 0;
      for (std::size_t c = 0; c < n_cols; ++c) {
        const double v =
            table.scores[s][c] + (table.column_unseen[c] ? bias : 0.0);
        if (better(v, table.column_flat[c], best_score, best_flat)) {
          best_score = v;
          best_flat = table.column_flat[c];
          best_col = c;
        }
      }
      if (table.pred_space[best_col] == table.ground_truth[s]) {
        (table.gt_seen[s] ? seen_correct : unseen_correct) += 1;
      }
    }
    SweepPoint pt;
    pt.bias = bias;
    pt.seen_acc = static_cast<double>(seen_correct) /
                  static_cast<double>(n_seen);
    pt.unseen_acc = static_cast<double>(unseen_correct) /
                    static_cast<double>(n_unseen);
    report.curve.push_back(pt);
  }

  for (const SweepPoint& pt : report.curve) {
    report.seen = std::max(report.seen, pt.seen_acc);
    report.unseen = std::max(report.unseen, pt.unseen_acc);
    if (pt.seen_acc + pt.unseen_acc > 0.0) {
      const double hm =
          2.0 * pt.seen_acc * pt.unseen_acc / (pt.seen_acc + pt.unseen_acc);
      report.hm = std::max(report.hm, hm);
    }
  }
  double auc = 0.0;
  for (std::size_t k = 0; k + 1 < report.curve.size(); ++k) {
    const SweepPoint& a = report.curve[k];
    const SweepPoint& b = report.curve[k + 1];
    auc += std::abs(a.seen_acc - b.seen_acc) * (a.unseen_acc + b.unseen_acc) /
           2.0;
  }
  report.auc = auc;
  return report;
}

EvalReport evaluate_split(const Model& model, const SplitData& split,
                          WorldMode mode, const FusionOptions& fusion) {
  TensorPtr raw = Tensor::from_values(split.features->shape(),
                                      split.features->values(),
                                      model.config().dtype);
  TensorPtr encoded = model.encode_images(raw);
  return metric_sweep(
      build_score_table(model, encoded, split.records, mode, fusion));
}

std::string EvalReport::to_json() const {
  json j;
  j["seen"] = seen;
  j["unseen"] = unseen;
  j["hm"] = hm;
  j["auc"] = auc;
  json curve_j = json::array();
  for (const SweepPoint& pt : curve) {
    curve_j.push_back(
        {{"bias", pt.bias}, {"seen_acc", pt.seen_acc},
         {"unseen_acc", pt.unseen_acc}});
  }
  j["curve"] = curve_j;
  return j.dump(2) + "\n";
}

std::string sweep_csv(const EvalReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "bias,seen_acc,unseen_acc\n";
  for (const SweepPoint& pt : report.curve) {
    os << pt.bias << "," << pt.seen_acc << "," << pt.unseen_acc << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Ablation suite
// ---------------------------------------------------------------------------

std::string AblationResult::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "cell,S,U,HM,AUC\n";
  for (const AblationRow& row : rows) {
    os << row.cell << "," << row.report.seen << "," << row.report.unseen
       << "," << row.report.hm << "," << row.report.auc << "\n";
  }
  return os.str();
}

const EvalReport& AblationResult::cell(const std::string& name) const {
  for (const AblationRow& row : rows) {
    if (row.cell == name) return row.report;
  }
  throw ContractError("ablation: unknown cell " + name);
}

AblationResult run_ablation_suite(const World& world, const ModelConfig& mc,
                                  const TrainConfig& tc) {
  auto train_variant = [&](ModelConfig variant) {
    auto model = std::make_unique<Model>(world.space, variant);
    train_model(*model, world, tc, "", kv_from_configs(variant, tc).entries);
    return model;
  };
  auto eval_test = [&](const Model& m, const FusionOptions& fusion) {
    return evaluate_split(m, world.test, WorldMode::Closed, fusion);
  };
  const FusionOptions fused{mc.lambda, true, true};
  const FusionOptions text_only{0.0, true, false};
  const FusionOptions visual_only{1.0, false, true};

  AblationResult result;

  // Component-removal grid. The fully trained model doubles as the
  // decoupler-grid (i2t=ca, i2v=mlp) cell below.
  ModelConfig full_cfg = mc;
  auto full = train_variant(full_cfg);

  ModelConfig no_vp_cfg = mc;
  no_vp_cfg.no_vp = true;
  auto no_vp = train_variant(no_vp_cfg);
  result.rows.push_back({"t3_no_vp_train", eval_test(*no_vp, text_only)});

  ModelConfig no_tp_cfg = mc;
  no_tp_cfg.no_tp = true;
  auto no_tp = train_variant(no_tp_cfg);
  result.rows.push_back({"t3_no_tp_train", eval_test(*no_tp, visual_only)});

  result.rows.push_back({"t3_no_vp_inference", eval_test(*full, text_only)});
  result.rows.push_back({"t3_no_tp_inference", eval_test(*full, visual_only)});

  // Decoupler-exchange grid.
  result.rows.push_back({"t4_i2t_ca_i2v_mlp", eval_test(*full, fused)});
  for (const auto& [i2t, i2v, name] :
       {std::tuple{DecouplerKind::CrossAttention, DecouplerKind::CrossAttention,
                   "t4_i2t_ca_i2v_ca"},
        std::tuple{DecouplerKind::Mlp, DecouplerKind::CrossAttention,
                   "t4_i2t_mlp_i2v_ca"},
        std::tuple{DecouplerKind::Mlp, DecouplerKind::Mlp,
                   "t4_i2t_mlp_i2v_mlp"}}) {
    ModelConfig cell_cfg = mc;
    cell_cfg.i2t = i2t;
    cell_cfg.i2v = i2v;
    auto cell_model = train_variant(cell_cfg);
    result.rows.push_back({name, eval_test(*cell_model, fused)});
  }
  return result;
}

}  // namespace czp
