#include "czproxy/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace czp {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

DecouplerKind parse_decoupler(const std::string& v, const std::string& key) {
  if (v == "ca") return DecouplerKind::CrossAttention;
  if (v == "mlp") return DecouplerKind::Mlp;
  throw ConfigError(key + ": expected ca or mlp, got '" + v + "'");
}

std::string decoupler_name(DecouplerKind k) {
  return k == DecouplerKind::CrossAttention ? "ca" : "mlp";
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      // model
      "feat_dim", "tok_dim", "raw_dim", "heads", "prefix_len", "vocab_size",
      "tau_t", "tau_v_init", "gamma_ao", "gamma_c", "alpha", "beta", "lambda",
      "kl_branches", "kl_detach_target", "i2t", "i2v", "no_vp", "no_tp",
      "dtype", "seed",
      // trainer
      "epochs", "batch_size", "lr", "weight_decay", "adam_beta1",
      "adam_beta2", "adam_eps",
      // world generation
      "attrs", "objs", "samples_per_comp", "noise", "gap", "unseen_frac",
  };
  return keys;
}

KVConfig KVConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  KVConfig kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    }
    kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  kv.validate_keys();
  return kv;
}

void KVConfig::set(const std::string& key, const std::string& value) {
  entries[key] = value;
}

std::string KVConfig::get(const std::string& key,
                          const std::string& fallback) const {
  const auto it = entries.find(key);
  return it == entries.end() ? fallback : it->second;
}

double KVConfig::get_double(const std::string& key, double fallback) const {
  const auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: '" + it->second + "'");
  }
}

std::size_t KVConfig::get_size(const std::string& key,
                               std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

std::uint64_t KVConfig::get_u64(const std::string& key,
                                std::uint64_t fallback) const {
  const auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a nonnegative integer: '" + it->second +
                      "'");
  }
}

bool KVConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError(key + ": not a boolean: '" + v + "'");
}

void KVConfig::merge(const KVConfig& overrides) {
  for (const auto& [k, v] : overrides.entries) entries[k] = v;
}

void KVConfig::validate_keys() const {
  const auto& known = known_config_keys();
  for (const auto& [k, v] : entries) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError("config: unknown key '" + k + "'");
    }
  }
}

std::string KVConfig::to_string() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries) os << k << " = " << v << "\n";
  return os.str();
}

ModelConfig model_config_from_kv(const KVConfig& kv) {
  ModelConfig mc;
  mc.feat_dim = kv.get_size("feat_dim", mc.feat_dim);
  mc.tok_dim = kv.get_size("tok_dim", mc.tok_dim);
  mc.raw_dim = kv.get_size("raw_dim", mc.raw_dim);
  mc.heads = kv.get_size("heads", mc.heads);
  mc.prefix_len = kv.get_size("prefix_len", mc.prefix_len);
  mc.vocab_size = kv.get_size("vocab_size", mc.vocab_size);
  mc.tau_t = kv.get_double("tau_t", mc.tau_t);
  mc.tau_v_init = kv.get_double("tau_v_init", mc.tau_v_init);
  mc.gamma_ao = kv.get_double("gamma_ao", mc.gamma_ao);
  mc.gamma_c = kv.get_double("gamma_c", mc.gamma_c);
  mc.alpha = kv.get_double("alpha", mc.alpha);
  mc.beta = kv.get_double("beta", mc.beta);
  mc.lambda = kv.get_double("lambda", mc.lambda);
  const std::string klb = kv.get("kl_branches", "aoc");
  if (klb == "aoc") {
    mc.kl_branches = KlBranches::All;
  } else if (klb == "c") {
    mc.kl_branches = KlBranches::CompositionOnly;
  } else {
    throw ConfigError("kl_branches: expected c or aoc, got '" + klb + "'");
  }
  mc.kl_detach_target = kv.get_bool("kl_detach_target", mc.kl_detach_target);
  mc.i2t = parse_decoupler(kv.get("i2t", "ca"), "i2t");
  mc.i2v = parse_decoupler(kv.get("i2v", "mlp"), "i2v");
  mc.no_vp = kv.get_bool("no_vp", mc.no_vp);
  mc.no_tp = kv.get_bool("no_tp", mc.no_tp);
  const std::string dt = kv.get("dtype", "f32");
  if (dt == "f32") {
    mc.dtype = Dtype::F32;
  } else if (dt == "f64") {
    mc.dtype = Dtype::F64;
  } else {
    throw ConfigError("dtype: expected f32 or f64, got '" + dt + "'");
  }
  mc.seed = kv.get_u64("seed", mc.seed);
  mc.validate();
  return mc;
}

TrainConfig train_config_from_kv(const KVConfig& kv) {
  TrainConfig tc;
  tc.epochs = kv.get_size("epochs", tc.epochs);
  tc.batch_size = kv.get_size("batch_size", tc.batch_size);
  tc.lr = kv.get_double("lr", tc.lr);
  tc.weight_decay = kv.get_double("weight_decay", tc.weight_decay);
  tc.beta1 = kv.get_double("adam_beta1", tc.beta1);
  tc.beta2 = kv.get_double("adam_beta2", tc.beta2);
  tc.eps = kv.get_double("adam_eps", tc.eps);
  tc.seed = kv.get_u64("seed", tc.seed);
  tc.validate();
  return tc;
}

SyntheticWorldConfig world_config_from_kv(const KVConfig& kv) {
  SyntheticWorldConfig wc;
  wc.n_attrs = kv.get_size("attrs", wc.n_attrs);
  wc.n_objs = kv.get_size("objs", wc.n_objs);
  wc.feat_dim = kv.get_size("feat_dim", wc.feat_dim);
  wc.raw_dim = kv.get_size("raw_dim", wc.raw_dim);
  wc.samples_per_comp = kv.get_size("samples_per_comp", wc.samples_per_comp);
  wc.noise_sigma = kv.get_double("noise", wc.noise_sigma);
  wc.gap = kv.get_double("gap", wc.gap);
  wc.unseen_frac = kv.get_double("unseen_frac", wc.unseen_frac);
  wc.seed = kv.get_u64("seed", wc.seed);
  wc.validate();
  return wc;
}

KVConfig kv_from_configs(const ModelConfig& mc, const TrainConfig& tc) {
  KVConfig kv;
  kv.set("feat_dim", std::to_string(mc.feat_dim));
  kv.set("tok_dim", std::to_string(mc.tok_dim));
  kv.set("raw_dim", std::to_string(mc.raw_dim));
  kv.set("heads", std::to_string(mc.heads));
  kv.set("prefix_len", std::to_string(mc.prefix_len));
  kv.set("vocab_size", std::to_string(mc.vocab_size));
  kv.set("tau_t", format_double(mc.tau_t));
  kv.set("tau_v_init", format_double(mc.tau_v_init));
  kv.set("gamma_ao", format_double(mc.gamma_ao));
  kv.set("gamma_c", format_double(mc.gamma_c));
  kv.set("alpha", format_double(mc.alpha));
  kv.set("beta", format_double(mc.beta));
  kv.set("lambda", format_double(mc.lambda));
  kv.set("kl_branches",
         mc.kl_branches == KlBranches::All ? "aoc" : "c");
  kv.set("kl_detach_target", mc.kl_detach_target ? "1" : "0");
  kv.set("i2t", decoupler_name(mc.i2t));
  kv.set("i2v", decoupler_name(mc.i2v));
  kv.set("no_vp", mc.no_vp ? "1" : "0");
  kv.set("no_tp", mc.no_tp ? "1" : "0");
  kv.set("dtype", mc.dtype == Dtype::F32 ? "f32" : "f64");
  kv.set("seed", std::to_string(mc.seed));
  kv.set("epochs", std::to_string(tc.epochs));
  kv.set("batch_size", std::to_string(tc.batch_size));
  kv.set("lr", format_double(tc.lr));
  kv.set("weight_decay", format_double(tc.weight_decay));
  kv.set("adam_beta1", format_double(tc.beta1));
  kv.set("adam_beta2", format_double(tc.beta2));
  kv.set("adam_eps", format_double(tc.eps));
  return kv;
}

}  // namespace czp
