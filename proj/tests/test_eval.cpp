#include <cmath>
#include <memory>
#include <set>
#include <vector>

#include <doctest.h>

#include "czproxy/config.hpp"
#include "czproxy/eval.hpp"
#include "czproxy/rng.hpp"
#include "czproxy/trainer.hpp"
#include "czproxy/world.hpp"

using namespace czp;

namespace {

World trained_world(Model** model_out, std::uint64_t seed = 5) {
  SyntheticWorldConfig wc;
  wc.n_attrs = 3;
  wc.n_objs = 3;
  wc.feat_dim = 16;
  wc.raw_dim = 24;
  wc.samples_per_comp = 6;
  wc.noise_sigma = 0.25;
  wc.gap = 1.0;
  wc.unseen_frac = 0.25;
  wc.seed = seed;
  World world = generate_world(wc);

  ModelConfig mc;
  mc.feat_dim = 16;
  mc.tok_dim = 16;
  mc.raw_dim = 24;
  mc.vocab_size = 64;
  mc.dtype = Dtype::F32;
  mc.seed = seed;
  static std::vector<std::unique_ptr<Model>> keep_alive;
  keep_alive.push_back(std::make_unique<Model>(world.space, mc));
  Model* model = keep_alive.back().get();
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 16;
  tc.seed = seed;
  train_model(*model, world, tc, "", {});
  *model_out = model;
  return world;
}

TensorPtr sample_row(const Model& model, const SplitData& split,
                     std::size_t row) {
  const std::size_t dim = split.features->cols();
  std::vector<double> vals(split.features->values().begin() + row * dim,
                           split.features->values().begin() + (row + 1) * dim);
  TensorPtr raw = Tensor::from_values({1, dim}, std::move(vals),
                                      model.config().dtype);
  return model.encode_images(raw);
}

// Test-local sweep evaluator: accuracies at one bias by brute force.
std::pair<double, double> naive_accuracies(const ScoreTable& t, double bias) {
  std::size_t seen_n = 0, unseen_n = 0, seen_ok = 0, unseen_ok = 0;
  for (std::size_t s = 0; s < t.scores.size(); ++s) {
    double best = -1e300;
    std::size_t best_col = 0, best_flat = static_cast<std::size_t>(-1);
    for (std::size_t c = 0; c < t.scores[s].size(); ++c) {
      const double v = t.scores[s][c] + (t.column_unseen[c] ? bias : 0.0);
      if (v > best || (v == best && t.column_flat[c] < best_flat)) {
        best = v;
        best_col = c;
        best_flat = t.column_flat[c];
      }
    }
    const bool ok = t.pred_space[best_col] == t.ground_truth[s];
    if (t.gt_seen[s]) {
      ++seen_n;
      seen_ok += ok;
    } else {
      ++unseen_n;
      unseen_ok += ok;
    }
  }
  return {static_cast<double>(seen_ok) / seen_n,
          static_cast<double>(unseen_ok) / unseen_n};
}

}  // namespace

TEST_CASE("fusion identities: null lambda, mass accounting, default") {
  Model* model = nullptr;
  const World world = trained_world(&model);
  const auto pred_space = build_prediction_space(world.space,
                                                 WorldMode::Closed);
  TensorPtr feats = sample_row(*model, world.test, 0);

  const FusedBranchProbs text_only =
      fuse_branches(*model, feats, pred_space, {0.0, true, true});
  const FusedBranchProbs no_visual =
      fuse_branches(*model, feats, pred_space, {1.0, true, false});
  CHECK(text_only.comp == no_visual.comp);
  CHECK(text_only.attr == no_visual.attr);

  const FusedBranchProbs both =
      fuse_branches(*model, feats, pred_space, {1.0, true, true});
  for (const auto& branch : {both.attr, both.obj, both.comp}) {
    double mass = 0;
    for (double v : branch[0]) mass += v;
    CHECK(std::abs(mass - 2.0) < 1e-6);  // two normalized rows added
  }

  CHECK(ModelConfig{}.lambda == 1.0);
  CHECK_THROWS_AS(
      fuse_branches(*model, feats, pred_space, {1.0, false, false}),
      ContractError);
}

TEST_CASE("pair score assembly and argmax follow the hand case") {
  // 2x2 space, every pair in the prediction set, one sample.
  FusedBranchProbs probs;
  probs.comp = {{0.4, 0.3, 0.2, 0.1}};
  probs.attr = {{0.6, 0.4}};
  probs.obj = {{0.5, 0.5}};
  const std::vector<Pair> pred_space{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const auto scores = assemble_pair_scores(probs, 0, pred_space);
  CHECK(scores[0] == doctest::Approx(1.5));
  CHECK(scores[1] == doctest::Approx(1.4));
  CHECK(scores[2] == doctest::Approx(1.1));
  CHECK(scores[3] == doctest::Approx(1.0));
  CHECK(argmax_lowest_flat(scores, {0, 1, 2, 3}) == 0);

  // Exact tie resolves to the lowest flat index.
  CHECK(argmax_lowest_flat({1.0, 1.0, 0.5}, {7, 3, 1}) == 1);
}

TEST_CASE("predict equals the nested-loop oracle on every test sample") {
  Model* model = nullptr;
  const World world = trained_world(&model);
  for (WorldMode mode : {WorldMode::Closed, WorldMode::Open}) {
    for (std::size_t row = 0; row < world.test.records.size(); ++row) {
      TensorPtr feats = sample_row(*model, world.test, row);
      const FusionOptions fusion{1.0, true, true};
      CHECK(predict(*model, feats, mode, fusion) ==
            predict_oracle(*model, feats, mode, fusion));
    }
  }
}

TEST_CASE("closed and open predictions differ only outside the closed set") {
  Model* model = nullptr;
  const World world = trained_world(&model, 13);
  std::set<Pair> closed_set(world.space.seen_pairs.begin(),
                            world.space.seen_pairs.end());
  closed_set.insert(world.space.unseen_pairs.begin(),
                    world.space.unseen_pairs.end());
  const auto closed_space =
      build_prediction_space(world.space, WorldMode::Closed);
  const auto open_space = build_prediction_space(world.space, WorldMode::Open);
  const FusionOptions fusion{1.0, true, true};
  for (std::size_t row = 0; row < world.test.records.size(); ++row) {
    TensorPtr feats = sample_row(*model, world.test, row);
    const Pair closed_pick =
        closed_space[predict(*model, feats, WorldMode::Closed, fusion)];
    const Pair open_pick =
        open_space[predict(*model, feats, WorldMode::Open, fusion)];
    if (closed_pick != open_pick) {
      CHECK(closed_set.count(open_pick) == 0);
    }
  }
}

TEST_CASE("degenerate single-pair space always predicts that pair") {
  CompositionSpace space;
  space.attributes = {"a0"};
  space.objects = {"o0"};
  space.seen_pairs = {{0, 0}};
  ModelConfig mc;
  mc.feat_dim = 8;
  mc.tok_dim = 8;
  mc.raw_dim = 12;
  mc.heads = 2;
  mc.vocab_size = 16;
  mc.dtype = Dtype::F64;
  Model model(space, mc);
  CounterRng rng(3);
  TensorPtr feats = Tensor::from_values({1, 8}, rng.gaussians(8), Dtype::F64);
  const FusionOptions fusion{1.0, true, true};
  CHECK(predict(model, feats, WorldMode::Closed, fusion) == 0);
  CHECK(predict_oracle(model, feats, WorldMode::Open, fusion) == 0);
}

TEST_CASE("metric sweep: perfect classifier scores ones across the board") {
  ScoreTable t;
  t.pred_space = {{0, 0}, {0, 1}};
  t.column_unseen = {false, true};
  t.column_flat = {0, 1};
  // Seen sample nails the seen column by a margin no bias in the sweep can
  // overcome before the unseen sample is already correct.
  t.scores = {{10.0, 0.0}, {0.0, 10.0}};
  t.ground_truth = {{0, 0}, {0, 1}};
  t.gt_seen = {true, false};
  const EvalReport r = metric_sweep(t);
  CHECK(r.seen == 1.0);
  CHECK(r.unseen == 1.0);
  CHECK(r.hm == 1.0);
  CHECK(r.auc == 1.0);
}

TEST_CASE("metric sweep matches the hand-enumerated four-sample golden") {
  // Columns: seen (0,0) flat 0, seen (1,1) flat 3, unseen (0,1) flat 1,
  // unseen (1,0) flat 2.
  // Dyadic scores keep the per-sample critical differences exact in
  // binary, so the candidate set is exactly {-0.875, 0.125, 0.25, 0.5, 1.5}.
  ScoreTable t;
  t.pred_space = {{0, 0}, {1, 1}, {0, 1}, {1, 0}};
  t.column_unseen = {false, false, true, true};
  t.column_flat = {0, 3, 1, 2};
  t.scores = {
      {3.0, 1.0, 2.5, 0.5},        // seen gt (0,0), critical delta 0.5
      {2.0, 2.25, 1.0, 2.125},     // seen gt (1,1), delta 0.125
      {1.75, 0.25, 1.5, 0.25},     // unseen gt (0,1), delta 0.25
      {0.5, 0.875, 0.125, 0.75},   // unseen gt (1,0), delta 0.125
  };
  t.ground_truth = {{0, 0}, {1, 1}, {0, 1}, {1, 0}};
  t.gt_seen = {true, true, false, false};

  // Hand enumeration over those biases gives the curve (1,0), (0.5,0.5),
  // (0.5,0.5), (0.5,1), (0,1): S = U = 1, HM = 2/3 at bias 0.5, and the
  // trapezoid area is 0.5*0.25 + 0 + 0 + 0.5*1 = 0.625.
  const EvalReport r = metric_sweep(t);
  CHECK(r.curve.size() == 5);
  CHECK(r.seen == doctest::Approx(1.0));
  CHECK(r.unseen == doctest::Approx(1.0));
  CHECK(r.hm == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(r.auc == doctest::Approx(0.625).epsilon(1e-12));

  // The tie cases inside the sweep: at bias 0.125 sample 1 ties its seen
  // column (flat 3) against unseen (flat 2) and the lower flat index wins;
  // sample 3 ties the same way and its unseen column is the ground truth.
  const auto [seen_at_tie, unseen_at_tie] = naive_accuracies(t, 0.125);
  CHECK(seen_at_tie == doctest::Approx(0.5));
  CHECK(unseen_at_tie == doctest::Approx(0.5));

  // Doubling every score rescales the critical biases but not the
  // attainable accuracies.
  ScoreTable doubled = t;
  for (auto& row : doubled.scores) {
    for (double& v : row) v *= 2.0;
  }
  const EvalReport r2 = metric_sweep(doubled);
  CHECK(r2.seen == r.seen);
  CHECK(r2.unseen == r.unseen);
  CHECK(r2.curve[1].bias == doctest::Approx(0.25));

  // Reversing the sweep order leaves the trapezoid area unchanged.
  double reversed_auc = 0;
  for (std::size_t k = r.curve.size(); k-- > 1;) {
    reversed_auc += std::abs(r.curve[k].seen_acc - r.curve[k - 1].seen_acc) *
                    (r.curve[k].unseen_acc + r.curve[k - 1].unseen_acc) / 2.0;
  }
  CHECK(reversed_auc == doctest::Approx(r.auc).epsilon(1e-15));
}

TEST_CASE("metric sweep rejects tables without both sample kinds") {
  ScoreTable t;
  t.pred_space = {{0, 0}, {0, 1}};
  t.column_unseen = {false, true};
  t.column_flat = {0, 1};
  t.scores = {{1.0, 0.0}};
  t.ground_truth = {{0, 0}};
  t.gt_seen = {true};
  CHECK_THROWS_AS(metric_sweep(t), ContractError);
}

TEST_CASE("sweep exactness: accuracies are constant between criticals") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CounterRng rng(seed);
    ScoreTable t;
    t.pred_space = {{0, 0}, {1, 1}, {0, 1}, {1, 0}};
    t.column_unseen = {false, false, true, true};
    t.column_flat = {0, 3, 1, 2};
    for (std::size_t s = 0; s < 6; ++s) {
      t.scores.push_back(rng.gaussians(4));
      const bool seen = s % 2 == 0;
      t.ground_truth.push_back(seen ? Pair{1, 1} : Pair{0, 1});
      t.gt_seen.push_back(seen);
    }
    const EvalReport r = metric_sweep(t);
    for (std::size_t k = 0; k + 1 < r.curve.size(); ++k) {
      const double lo = r.curve[k].bias, hi = r.curve[k + 1].bias;
      const auto a = naive_accuracies(t, lo + 0.25 * (hi - lo));
      const auto b = naive_accuracies(t, lo + 0.75 * (hi - lo));
      CHECK(a.first == b.first);
      CHECK(a.second == b.second);
    }
    CHECK(r.auc >= 0.0);
    CHECK(r.auc <= 1.0);
    CHECK(r.hm <= 1.0);
  }
}

TEST_CASE("restricting an open table to the closed set helps seen accuracy") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CounterRng rng(seed + 100);
    // 2x3 product space, closed set = 4 pairs.
    const std::vector<Pair> open_space{{0, 0}, {0, 1}, {0, 2},
                                       {1, 0}, {1, 1}, {1, 2}};
    const std::vector<bool> open_unseen{false, true, false,
                                        false, true, true};
    // Closed keeps seen {0,0},{0,2},{1,0} and unseen {0,1}.
    const std::vector<std::size_t> closed_cols{0, 2, 3, 1};

    ScoreTable open;
    open.pred_space = open_space;
    open.column_unseen = open_unseen;
    for (const Pair& p : open_space) open.column_flat.push_back(p.first * 3 + p.second);
    ScoreTable closed;
    for (std::size_t c : closed_cols) {
      closed.pred_space.push_back(open_space[c]);
      closed.column_unseen.push_back(open_unseen[c]);
      closed.column_flat.push_back(open.column_flat[c]);
    }
    for (std::size_t s = 0; s < 8; ++s) {
      const auto row = rng.gaussians(6);
      open.scores.push_back(row);
      std::vector<double> restricted;
      for (std::size_t c : closed_cols) restricted.push_back(row[c]);
      closed.scores.push_back(restricted);
      const bool seen = s % 2 == 0;
      open.ground_truth.push_back(seen ? Pair{0, 0} : Pair{0, 1});
      open.gt_seen.push_back(seen);
      closed.ground_truth.push_back(open.ground_truth.back());
      closed.gt_seen.push_back(seen);
    }
    const double open_seen = naive_accuracies(open, 0.0).first;
    const double closed_seen = naive_accuracies(closed, 0.0).first;
    CHECK(closed_seen >= open_seen);
  }
}

TEST_CASE("evaluation report fields stay in range and serialize") {
  Model* model = nullptr;
  const World world = trained_world(&model, 8);
  const EvalReport r = evaluate_split(*model, world.test, WorldMode::Closed,
                                      {1.0, true, true});
  for (double v : {r.seen, r.unseen, r.hm, r.auc}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const std::string json = r.to_json();
  CHECK(json.find("\"auc\"") != std::string::npos);
  CHECK(json.find("\"curve\"") != std::string::npos);
  const std::string csv = sweep_csv(r);
  CHECK(csv.rfind("bias,seen_acc,unseen_acc\n", 0) == 0);
}

TEST_CASE("ablation suite shape on a miniature run") {
  SyntheticWorldConfig wc;
  wc.n_attrs = 3;
  wc.n_objs = 3;
  wc.feat_dim = 12;
  wc.raw_dim = 20;
  wc.samples_per_comp = 5;
  wc.noise_sigma = 0.3;
  wc.gap = 1.0;
  wc.unseen_frac = 0.25;
  wc.seed = 4;
  const World world = generate_world(wc);
  ModelConfig mc;
  mc.feat_dim = 12;
  mc.tok_dim = 16;
  mc.raw_dim = 20;
  mc.vocab_size = 64;
  mc.heads = 4;
  mc.dtype = Dtype::F32;
  mc.seed = 4;
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 16;
  tc.seed = 4;

  const AblationResult result = run_ablation_suite(world, mc, tc);
  REQUIRE(result.rows.size() == 8);
  const std::vector<std::string> expected{
      "t3_no_vp_train",     "t3_no_tp_train",   "t3_no_vp_inference",
      "t3_no_tp_inference", "t4_i2t_ca_i2v_mlp", "t4_i2t_ca_i2v_ca",
      "t4_i2t_mlp_i2v_ca",  "t4_i2t_mlp_i2v_mlp"};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(result.rows[i].cell == expected[i]);
    CHECK(result.rows[i].report.auc >= 0.0);
    CHECK(result.rows[i].report.auc <= 1.0);
  }
  const std::string csv = result.to_csv();
  CHECK(csv.rfind("cell,S,U,HM,AUC\n", 0) == 0);
  CHECK_THROWS_AS(result.cell("nonexistent"), ContractError);
}
