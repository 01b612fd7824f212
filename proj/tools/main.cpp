// czproxy command-line entry point: synthetic world generation, training,
// evaluation, the ablation grids, gradient verification, and curve export.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "czproxy/config.hpp"
#include "czproxy/dataio.hpp"
#include "czproxy/eval.hpp"
#include "czproxy/gradcheck.hpp"
#include "czproxy/model.hpp"
#include "czproxy/trainer.hpp"
#include "czproxy/world.hpp"

namespace {

namespace fs = std::filesystem;

std::string flag_name(const std::string& key) {
  std::string out = "--" + key;
  for (char& c : out) {
    if (c == '_') c = '-';
  }
  return out;
}

// One CLI option per config key; flag beats file beats default. The two
// ablation switches are bare flags added separately.
void add_config_options(CLI::App* cmd,
                        std::map<std::string, std::string>& flag_values) {
  for (const std::string& key : czp::known_config_keys()) {
    if (key == "no_vp" || key == "no_tp") continue;
    cmd->add_option_function<std::string>(
        flag_name(key),
        [&flag_values, key](const std::string& v) { flag_values[key] = v; },
        "config key " + key);
  }
}

czp::KVConfig resolve_config(const std::string& config_path,
                             const std::map<std::string, std::string>& flags) {
  czp::KVConfig kv;
  if (!config_path.empty()) kv = czp::KVConfig::load_file(config_path);
  czp::KVConfig overrides;
  overrides.entries = flags;
  overrides.validate_keys();
  kv.merge(overrides);
  return kv;
}

void print_resolved(const czp::KVConfig& kv, std::uint64_t seed) {
  std::cout << "resolved config:\n" << kv.to_string()
            << "seed: " << seed << "\n";
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw czp::FormatError("cannot open " + path + " for writing");
  os << text;
}

int run(int argc, char** argv) {
  CLI::App app{"Compositional zero-shot classifier with textual prototypes "
               "and visual proxies"};
  app.require_subcommand(1);

  // gen-data ----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data",
                                 "Generate a synthetic world directory");
  std::string gen_out;
  czp::SyntheticWorldConfig wc;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--attrs", wc.n_attrs, "number of attributes");
  gen->add_option("--objs", wc.n_objs, "number of objects");
  gen->add_option("--dim", wc.feat_dim, "feature dimension d");
  gen->add_option("--raw-dim", wc.raw_dim, "raw feature dimension");
  gen->add_option("--samples-per-comp", wc.samples_per_comp,
                  "samples per composition");
  gen->add_option("--gap", wc.gap, "modality gap magnitude");
  gen->add_option("--noise", wc.noise_sigma, "intra-class noise sigma");
  gen->add_option("--unseen-frac", wc.unseen_frac, "unseen pair fraction");
  gen->add_option("--seed", wc.seed, "world seed");
  gen->callback([&] {
    wc.validate();
    std::cout << "generating world: attrs=" << wc.n_attrs
              << " objs=" << wc.n_objs << " d=" << wc.feat_dim
              << " raw=" << wc.raw_dim << " spc=" << wc.samples_per_comp
              << " gap=" << wc.gap << " noise=" << wc.noise_sigma
              << " unseen_frac=" << wc.unseen_frac << "\nseed: " << wc.seed
              << "\n";
    const czp::World world = czp::generate_world(wc);
    czp::save_world(world, gen_out);
    std::cout << "world written to " << gen_out << " ("
              << world.train.records.size() << " train / "
              << world.val.records.size() << " val / "
              << world.test.records.size() << " test samples, "
              << world.space.seen_pairs.size() << " seen / "
              << world.space.unseen_pairs.size() << " unseen pairs)\n";
  });

  // train ---------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train on a world directory");
  std::string train_world, train_out, train_config, train_resume;
  std::map<std::string, std::string> train_flags;
  bool flag_no_vp = false, flag_no_tp = false;
  train->add_option("--world", train_world, "world directory")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--config", train_config, "flat key=value config file");
  train->add_option("--resume", train_resume,
                    "checkpoint to resume from (continues to --epochs)");
  train->add_flag("--no-vp", flag_no_vp,
                  "drop the visual-proxy path during training");
  train->add_flag("--no-tp", flag_no_tp,
                  "drop the textual-prototype path during training");
  add_config_options(train, train_flags);
  train->callback([&] {
    if (flag_no_vp) train_flags["no_vp"] = "1";
    if (flag_no_tp) train_flags["no_tp"] = "1";
    const czp::World world = czp::load_world(train_world);
    czp::KVConfig kv = resolve_config(train_config, train_flags);
    if (!kv.has("feat_dim")) {
      kv.set("feat_dim", std::to_string(world.config.feat_dim));
    }
    if (!kv.has("raw_dim")) {
      kv.set("raw_dim", std::to_string(world.train.features->cols()));
    }
    const czp::ModelConfig mc = czp::model_config_from_kv(kv);
    const czp::TrainConfig tc = czp::train_config_from_kv(kv);
    print_resolved(czp::kv_from_configs(mc, tc), tc.seed);

    czp::Model model(world.space, mc);
    const czp::TrainOutcome outcome =
        czp::train_model(model, world, tc, train_out,
                         czp::kv_from_configs(mc, tc).entries, train_resume);
    write_file(train_out + "/trainlog.csv", outcome.log.to_csv());
    double wall = 0;
    for (const auto& e : outcome.log.epochs) wall += e.wall_seconds;
    std::cout << "trained " << outcome.log.epochs.size() << " epochs in "
              << wall << "s; best val AUC " << outcome.best_val_auc
              << " at epoch " << outcome.best_epoch << "\n"
              << "checkpoints: " << outcome.final_checkpoint << ", "
              << outcome.best_checkpoint << "\n"
              << "log: " << train_out << "/trainlog.csv\n";
  });

  // eval ---------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_world, eval_ckpt, eval_mode = "closed", eval_out = ".";
  double eval_lambda = -1.0;
  eval_cmd->add_option("--world", eval_world, "world directory")->required();
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--mode", eval_mode, "closed|open")
      ->check(CLI::IsMember({"closed", "open"}));
  eval_cmd->add_option("--lambda", eval_lambda,
                       "fusion weight (default: the trained value)")
      ->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--out", eval_out, "output directory");
  eval_cmd->callback([&] {
    const czp::World world = czp::load_world(eval_world);
    const czp::Checkpoint ckpt = czp::load_checkpoint(eval_ckpt);
    czp::Model model = czp::model_from_checkpoint(ckpt, world.space);
    czp::FusionOptions fusion;
    fusion.lambda = eval_lambda >= 0.0 ? eval_lambda : model.config().lambda;
    fusion.use_text = !model.config().no_tp;
    fusion.use_visual = !model.config().no_vp;
    czp::KVConfig echo;
    echo.entries = ckpt.config;
    print_resolved(echo, ckpt.seed);
    std::cout << "mode: " << eval_mode << ", lambda: " << fusion.lambda
              << "\n";
    const czp::WorldMode mode =
        eval_mode == "open" ? czp::WorldMode::Open : czp::WorldMode::Closed;
    const czp::EvalReport report =
        czp::evaluate_split(model, world.test, mode, fusion);
    fs::create_directories(eval_out);
    write_file(eval_out + "/report.json", report.to_json());
    write_file(eval_out + "/sweep.csv", czp::sweep_csv(report));
    std::cout << "S=" << report.seen << " U=" << report.unseen
              << " HM=" << report.hm << " AUC=" << report.auc << "\n"
              << "report: " << eval_out << "/report.json, sweep: " << eval_out
              << "/sweep.csv\n";
  });

  // ablate ---------------------------------------------------------------------
  auto* ablate = app.add_subcommand(
      "ablate", "Run the component-removal and decoupler-exchange grids");
  std::string ab_world, ab_config, ab_out = ".";
  std::map<std::string, std::string> ab_flags;
  ablate->add_option("--world", ab_world, "world directory")->required();
  ablate->add_option("--config", ab_config, "flat key=value config file");
  ablate->add_option("--out", ab_out, "output directory");
  add_config_options(ablate, ab_flags);
  ablate->callback([&] {
    const czp::World world = czp::load_world(ab_world);
    czp::KVConfig kv = resolve_config(ab_config, ab_flags);
    if (!kv.has("feat_dim")) {
      kv.set("feat_dim", std::to_string(world.config.feat_dim));
    }
    if (!kv.has("raw_dim")) {
      kv.set("raw_dim", std::to_string(world.train.features->cols()));
    }
    const czp::ModelConfig mc = czp::model_config_from_kv(kv);
    const czp::TrainConfig tc = czp::train_config_from_kv(kv);
    print_resolved(czp::kv_from_configs(mc, tc), tc.seed);
    const czp::AblationResult result = czp::run_ablation_suite(world, mc, tc);
    fs::create_directories(ab_out);
    write_file(ab_out + "/ablation.csv", result.to_csv());
    std::cout << result.to_csv() << "ablation table: " << ab_out
              << "/ablation.csv\n";
  });

  // grad-check -------------------------------------------------------------------
  auto* gc = app.add_subcommand("grad-check",
                                "Verify gradients against finite differences");
  std::string gc_scope = "model";
  std::uint64_t gc_seed = 0;
  std::size_t gc_seeds = 20;
  gc->add_option("--scope", gc_scope, "op|model")
      ->check(CLI::IsMember({"op", "model"}));
  gc->add_option("--seed", gc_seed, "seed for the model-scope world");
  gc->add_option("--seeds", gc_seeds, "random instances per op (op scope)");
  gc->callback([&] {
    std::cout << "grad-check scope: " << gc_scope << "\nseed: " << gc_seed
              << "\n";
    const auto results = gc_scope == "op" ? czp::grad_check_ops(gc_seeds)
                                          : czp::grad_check_model(gc_seed);
    double worst = 0.0;
    for (const auto& r : results) {
      std::cout << "  " << r.name << ": max rel err " << r.max_rel_err
                << "\n";
      worst = std::max(worst, r.max_rel_err);
    }
    std::cout << "worst: " << worst << " (threshold 1e-4)\n";
    if (!(worst < 1e-4)) {
      throw czp::ContractError("gradient check exceeded 1e-4");
    }
  });

  // export-curves -------------------------------------------------------------
  auto* exp = app.add_subcommand("export-curves",
                                 "Export a report's sweep curve as CSV");
  std::string exp_report, exp_out;
  exp->add_option("--report", exp_report, "report.json path")->required();
  exp->add_option("--out", exp_out, "output CSV path")->required();
  exp->callback([&] {
    std::ifstream is(exp_report);
    if (!is) throw czp::FormatError("cannot open " + exp_report);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw czp::FormatError(exp_report + ": " + std::string(e.what()));
    }
    czp::EvalReport report;
    for (const auto& pt : j.at("curve")) {
      report.curve.push_back({pt.at("bias").get<double>(),
                              pt.at("seen_acc").get<double>(),
                              pt.at("unseen_acc").get<double>()});
    }
    write_file(exp_out, czp::sweep_csv(report));
    std::cout << "curve with " << report.curve.size() << " points written to "
              << exp_out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints usage/help text
    return code == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const czp::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const czp::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const czp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
