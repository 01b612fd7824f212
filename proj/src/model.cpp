#include "czproxy/model.hpp"

#include <cmath>

#include "czproxy/rng.hpp"

namespace czp {

namespace {

TensorPtr learnable_gaussian(std::uint64_t seed, const std::string& name,
                             std::vector<std::size_t> shape, double stddev,
                             Dtype dtype) {
  CounterRng rng(CounterRng::derive(seed, name));
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return Tensor::from_values(std::move(shape), rng.gaussians(n, stddev),
                             dtype, true);
}

TensorPtr learnable_const(std::vector<std::size_t> shape, double v,
                          Dtype dtype) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return Tensor::from_values(std::move(shape), std::vector<double>(n, v),
                             dtype, true);
}

constexpr double kMinLogTau = -9.210340371976182;  // ln(1e-4)

}  // namespace

void ModelConfig::validate() const {
  if (tau_t <= 0.0) throw ConfigError("model config: tau_t must be > 0");
  if (tau_v_init <= 0.0) {
    throw ConfigError("model config: tau_v_init must be > 0");
  }
  if (lambda < 0.0) throw ConfigError("model config: lambda must be >= 0");
  if (heads == 0 || feat_dim % heads != 0) {
    throw ConfigError("model config: heads must divide feat_dim");
  }
  if (prefix_len == 0) throw ConfigError("model config: prefix_len >= 1");
  if (no_vp && no_tp) {
    throw ConfigError("model config: cannot drop both paths");
  }
  if (dtype != Dtype::F32 && dtype != Dtype::F64) {
    throw ConfigError("model config: unknown dtype");
  }
}

// ---------------------------------------------------------------------------
// CrossModalDecoupler
// ---------------------------------------------------------------------------

CrossModalDecoupler::CrossModalDecoupler(std::size_t dim, std::size_t heads,
                                         Dtype dtype, std::uint64_t seed,
                                         const std::string& name)
    : dim_(dim), heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("decoupler: heads must divide dim");
  }
  const std::size_t hd = dim / heads;
  const double w_std = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string hp = name + ".h" + std::to_string(h) + ".";
    wq_.push_back(learnable_gaussian(seed, hp + "wq", {dim, hd}, w_std, dtype));
    wk_.push_back(learnable_gaussian(seed, hp + "wk", {dim, hd}, w_std, dtype));
    wv_.push_back(learnable_gaussian(seed, hp + "wv", {dim, hd}, w_std, dtype));
  }
  wo_ = learnable_gaussian(seed, name + ".wo", {dim, dim}, w_std, dtype);
  ln_g_ = learnable_const({dim}, 1.0, dtype);
  ln_b_ = learnable_const({dim}, 0.0, dtype);
  ffn_w1_ = learnable_gaussian(seed, name + ".ffn_w1", {dim, 4 * dim}, w_std,
                               dtype);
  ffn_b1_ = learnable_const({4 * dim}, 0.0, dtype);
  // Small second layer keeps the branch feature near the input at init.
  ffn_w2_ = learnable_gaussian(seed, name + ".ffn_w2", {4 * dim, dim}, 0.01,
                               dtype);
  ffn_b2_ = learnable_const({dim}, 0.0, dtype);
}

std::pair<TensorPtr, TensorPtr> CrossModalDecoupler::forward(
    const TensorPtr& f, const TensorPtr& prototypes) const {
  if (f->rank() != 2 || f->cols() != dim_ || prototypes->rank() != 2 ||
      prototypes->cols() != dim_) {
    throw ShapeError("decoupler: inputs must be {B, d} and {n, d}");
  }
  const double inv_sqrt_hd =
      1.0 / std::sqrt(static_cast<double>(dim_ / heads_));
  TensorPtr score_sum;
  std::vector<TensorPtr> head_outs;
  for (std::size_t h = 0; h < heads_; ++h) {
    TensorPtr q = ops::matmul(f, wq_[h]);
    TensorPtr k = ops::matmul(prototypes, wk_[h]);
    TensorPtr v = ops::matmul(prototypes, wv_[h]);
    TensorPtr scores = ops::softmax(
        ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt_hd), -1);
    head_outs.push_back(ops::matmul(scores, v));
    score_sum = score_sum ? ops::add(score_sum, scores) : scores;
  }
  TensorPtr attn = ops::scale(score_sum, 1.0 / static_cast<double>(heads_));
  TensorPtr projected = ops::matmul(ops::concat_cols(head_outs), wo_);
  TensorPtr normed = ops::layer_norm(ops::add(f, projected), ln_g_, ln_b_);
  TensorPtr ffn = ops::linear(ops::gelu(ops::linear(normed, ffn_w1_, ffn_b1_)),
                              ffn_w2_, ffn_b2_);
  return {ops::add(f, ffn), attn};
}

void CrossModalDecoupler::collect_parameters(
    const std::string& prefix,
    std::vector<std::pair<std::string, TensorPtr>>& out) const {
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h) + ".";
    out.emplace_back(hp + "wq", wq_[h]);
    out.emplace_back(hp + "wk", wk_[h]);
    out.emplace_back(hp + "wv", wv_[h]);
  }
  out.emplace_back(prefix + ".wo", wo_);
  out.emplace_back(prefix + ".ln_g", ln_g_);
  out.emplace_back(prefix + ".ln_b", ln_b_);
  out.emplace_back(prefix + ".ffn_w1", ffn_w1_);
  out.emplace_back(prefix + ".ffn_b1", ffn_b1_);
  out.emplace_back(prefix + ".ffn_w2", ffn_w2_);
  out.emplace_back(prefix + ".ffn_b2", ffn_b2_);
}

// ---------------------------------------------------------------------------
// MlpDecoupler
// ---------------------------------------------------------------------------

MlpDecoupler::MlpDecoupler(std::size_t dim, Dtype dtype, std::uint64_t seed,
                           const std::string& name, double out_init_std) {
  const double w_std = 1.0 / std::sqrt(static_cast<double>(dim));
  w1_ = learnable_gaussian(seed, name + ".w1", {dim, dim}, w_std, dtype);
  b1_ = learnable_const({dim}, 0.0, dtype);
  w2_ = learnable_gaussian(seed, name + ".w2", {dim, dim}, out_init_std,
                           dtype);
  b2_ = learnable_const({dim}, 0.0, dtype);
}

TensorPtr MlpDecoupler::forward(const TensorPtr& x) const {
  return ops::add(x, ops::linear(ops::gelu(ops::linear(x, w1_, b1_)), w2_,
                                 b2_));
}

void MlpDecoupler::collect_parameters(
    const std::string& prefix,
    std::vector<std::pair<std::string, TensorPtr>>& out) const {
  out.emplace_back(prefix + ".w1", w1_);
  out.emplace_back(prefix + ".b1", b1_);
  out.emplace_back(prefix + ".w2", w2_);
  out.emplace_back(prefix + ".b2", b2_);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

Model::Model(const CompositionSpace& space, const ModelConfig& cfg)
    : space_(space), cfg_(cfg) {
  cfg_.validate();
  space_.validate();
  const std::size_t reserved = cfg.prefix_len + space.n_attrs() + space.n_objs();
  if (cfg.vocab_size < reserved) {
    throw ConfigError("model config: vocab_size too small for this space");
  }

  FrozenTextEncoder::Config tc;
  tc.vocab_size = cfg.vocab_size;
  tc.tok_dim = cfg.tok_dim;
  tc.out_dim = cfg.feat_dim;
  tc.seed = cfg.seed;
  tc.dtype = cfg.dtype;
  text_enc_ = std::make_shared<FrozenTextEncoder>(tc);

  FrozenImageEncoder::Config ic;
  ic.raw_dim = cfg.raw_dim;
  ic.out_dim = cfg.feat_dim;
  ic.seed = cfg.seed;
  ic.dtype = cfg.dtype;
  image_enc_ = std::make_shared<FrozenImageEncoder>(ic);

  init_prompts();

  if (cfg.i2t == DecouplerKind::CrossAttention) {
    text_attr_ca_ = std::make_unique<CrossModalDecoupler>(
        cfg.feat_dim, cfg.heads, cfg.dtype, cfg.seed, "text_dec.attr");
    text_obj_ca_ = std::make_unique<CrossModalDecoupler>(
        cfg.feat_dim, cfg.heads, cfg.dtype, cfg.seed, "text_dec.obj");
  } else {
    text_attr_mlp_ = std::make_unique<MlpDecoupler>(cfg.feat_dim, cfg.dtype,
                                                    cfg.seed, "text_dec.attr");
    text_obj_mlp_ = std::make_unique<MlpDecoupler>(cfg.feat_dim, cfg.dtype,
                                                   cfg.seed, "text_dec.obj");
  }
  if (cfg.i2v == DecouplerKind::CrossAttention) {
    vis_attr_ca_ = std::make_unique<CrossModalDecoupler>(
        cfg.feat_dim, cfg.heads, cfg.dtype, cfg.seed, "vis_dec.attr");
    vis_obj_ca_ = std::make_unique<CrossModalDecoupler>(
        cfg.feat_dim, cfg.heads, cfg.dtype, cfg.seed, "vis_dec.obj");
  } else {
    vis_attr_mlp_ = std::make_unique<MlpDecoupler>(
        cfg.feat_dim, cfg.dtype, cfg.seed, "vis_dec.attr", 0.05);
    vis_obj_mlp_ = std::make_unique<MlpDecoupler>(
        cfg.feat_dim, cfg.dtype, cfg.seed, "vis_dec.obj", 0.05);
  }

  init_visual_proxies();
  log_tau_v_ = Tensor::scalar(std::log(cfg.tau_v_init), cfg.dtype, true);

  params_.emplace_back("prompt.prefix_attr", prompts_.prefix_attr);
  params_.emplace_back("prompt.prefix_obj", prompts_.prefix_obj);
  params_.emplace_back("prompt.prefix_comp", prompts_.prefix_comp);
  params_.emplace_back("prompt.attr_tokens", prompts_.attr_tokens);
  params_.emplace_back("prompt.obj_tokens", prompts_.obj_tokens);
  if (text_attr_ca_) {
    text_attr_ca_->collect_parameters("text_dec.attr", params_);
    text_obj_ca_->collect_parameters("text_dec.obj", params_);
  } else {
    text_attr_mlp_->collect_parameters("text_dec.attr", params_);
    text_obj_mlp_->collect_parameters("text_dec.obj", params_);
  }
  if (vis_attr_ca_) {
    vis_attr_ca_->collect_parameters("vis_dec.attr", params_);
    vis_obj_ca_->collect_parameters("vis_dec.obj", params_);
  } else {
    vis_attr_mlp_->collect_parameters("vis_dec.attr", params_);
    vis_obj_mlp_->collect_parameters("vis_dec.obj", params_);
  }
  params_.emplace_back("proxy.attr", proxies_.attr_proxies);
  params_.emplace_back("proxy.obj", proxies_.obj_proxies);
  params_.emplace_back("proxy.comp_w", proxies_.comp_w);
  params_.emplace_back("proxy.comp_b", proxies_.comp_b);
  params_.emplace_back("log_tau_v", log_tau_v_);
}

void Model::init_prompts() {
  const std::size_t dt = cfg_.tok_dim;
  auto rows_from_vocab = [&](std::size_t first_id, std::size_t count) {
    std::vector<double> vals;
    vals.reserve(count * dt);
    for (std::size_t r = 0; r < count; ++r) {
      const auto row = text_enc_->vocab_embedding(first_id + r);
      vals.insert(vals.end(), row.begin(), row.end());
    }
    return vals;
  };
  // Vocabulary ids 0..prefix_len-1 stand in for the fixed prefix phrase;
  // primitives get the ids after them.
  prompts_.prefix_attr = Tensor::from_values(
      {cfg_.prefix_len, dt}, rows_from_vocab(0, cfg_.prefix_len), cfg_.dtype,
      true);
  prompts_.prefix_obj = Tensor::from_values(
      {cfg_.prefix_len, dt}, rows_from_vocab(0, cfg_.prefix_len), cfg_.dtype,
      true);
  prompts_.prefix_comp = Tensor::from_values(
      {cfg_.prefix_len, dt}, rows_from_vocab(0, cfg_.prefix_len), cfg_.dtype,
      true);
  prompts_.attr_tokens = Tensor::from_values(
      {space_.n_attrs(), dt},
      rows_from_vocab(cfg_.prefix_len, space_.n_attrs()), cfg_.dtype, true);
  prompts_.obj_tokens = Tensor::from_values(
      {space_.n_objs(), dt},
      rows_from_vocab(cfg_.prefix_len + space_.n_attrs(), space_.n_objs()),
      cfg_.dtype, true);
}

void Model::init_visual_proxies() {
  const std::size_t d = cfg_.feat_dim;
  auto encode_primitive = [&](const TensorPtr& bank, std::size_t row) {
    TensorPtr tok = ops::detach(ops::embedding_lookup(bank, {row}));
    TensorPtr enc = ops::l2_normalize(text_enc_->encode({tok}));
    return enc->values();
  };
  std::vector<double> va;
  for (std::size_t i = 0; i < space_.n_attrs(); ++i) {
    const auto v = encode_primitive(prompts_.attr_tokens, i);
    va.insert(va.end(), v.begin(), v.end());
  }
  proxies_.attr_proxies =
      Tensor::from_values({space_.n_attrs(), d}, std::move(va), cfg_.dtype,
                          true);
  std::vector<double> vo;
  for (std::size_t j = 0; j < space_.n_objs(); ++j) {
    const auto v = encode_primitive(prompts_.obj_tokens, j);
    vo.insert(vo.end(), v.begin(), v.end());
  }
  proxies_.obj_proxies = Tensor::from_values({space_.n_objs(), d},
                                             std::move(vo), cfg_.dtype, true);

  // Projector starts as the midpoint map [I | I] / 2 plus small noise.
  CounterRng rng(CounterRng::derive(cfg_.seed, "proxy.comp_w"));
  std::vector<double> wc(2 * d * d);
  for (std::size_t r = 0; r < 2 * d; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double eye = (r % d == c) ? 0.5 : 0.0;
      wc[r * d + c] = eye + 0.01 * rng.next_gaussian();
    }
  }
  proxies_.comp_w = Tensor::from_values({2 * d, d}, std::move(wc), cfg_.dtype,
                                        true);
  proxies_.comp_b = learnable_const({d}, 0.0, cfg_.dtype);
}

std::vector<std::pair<std::string, TensorPtr>> Model::trainable_parameters()
    const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  for (const auto& [name, t] : params_) {
    const bool text_param = name.rfind("prompt.", 0) == 0 ||
                            name.rfind("text_dec.", 0) == 0;
    const bool visual_param = name.rfind("proxy.", 0) == 0 ||
                              name.rfind("vis_dec.", 0) == 0 ||
                              name == "log_tau_v";
    if (cfg_.no_tp && text_param) continue;
    if (cfg_.no_vp && visual_param) continue;
    out.emplace_back(name, t);
  }
  return out;
}

void Model::zero_grads() const {
  for (const auto& [name, t] : params_) t->zero_grad();
}

void Model::clamp_temperatures() const {
  auto& vals = log_tau_v_->values();
  if (vals[0] < kMinLogTau) vals[0] = kMinLogTau;
  log_tau_v_->quantize();
}

TensorPtr Model::encode_images(const TensorPtr& raw) const {
  return image_enc_->encode(raw);
}

TensorPtr Model::encode_prompt(
    const TensorPtr& prefix,
    const std::vector<std::pair<const TensorPtr*, std::size_t>>& tokens)
    const {
  std::vector<TensorPtr> seq;
  seq.reserve(prefix->rows() + tokens.size());
  for (std::size_t r = 0; r < prefix->rows(); ++r) {
    seq.push_back(ops::embedding_lookup(prefix, {r}));
  }
  for (const auto& [table, row] : tokens) {
    seq.push_back(ops::embedding_lookup(*table, {row}));
  }
  return text_enc_->encode(seq);
}

TensorPtr Model::attr_prototypes() const {
  std::vector<TensorPtr> rows;
  rows.reserve(space_.n_attrs());
  for (std::size_t i = 0; i < space_.n_attrs(); ++i) {
    rows.push_back(
        encode_prompt(prompts_.prefix_attr, {{&prompts_.attr_tokens, i}}));
  }
  return ops::l2_normalize(ops::concat_rows(rows));
}

TensorPtr Model::obj_prototypes() const {
  std::vector<TensorPtr> rows;
  rows.reserve(space_.n_objs());
  for (std::size_t j = 0; j < space_.n_objs(); ++j) {
    rows.push_back(
        encode_prompt(prompts_.prefix_obj, {{&prompts_.obj_tokens, j}}));
  }
  return ops::l2_normalize(ops::concat_rows(rows));
}

TextualPrototypes Model::compute_textual_prototypes(
    const std::vector<Pair>& pairs) const {
  TextualPrototypes out;
  out.attr = attr_prototypes();
  out.obj = obj_prototypes();
  std::vector<TensorPtr> rows;
  rows.reserve(pairs.size());
  for (const Pair& p : pairs) {
    if (p.first >= space_.n_attrs() || p.second >= space_.n_objs()) {
      throw IndexError("compute_textual_prototypes: pair out of range");
    }
    rows.push_back(encode_prompt(prompts_.prefix_comp,
                                 {{&prompts_.attr_tokens, p.first},
                                  {&prompts_.obj_tokens, p.second}}));
  }
  out.comp = ops::l2_normalize(ops::concat_rows(rows));
  return out;
}

TensorPtr Model::compose_proxy(std::size_t attr, std::size_t obj) const {
  if (attr >= space_.n_attrs() || obj >= space_.n_objs()) {
    throw IndexError("compose_proxy: index out of range");
  }
  TensorPtr cat = ops::concat_cols(
      {ops::embedding_lookup(proxies_.attr_proxies, {attr}),
       ops::embedding_lookup(proxies_.obj_proxies, {obj})});
  return ops::l2_normalize(ops::linear(cat, proxies_.comp_w,
                                       proxies_.comp_b));
}

BranchOutput Model::text_path(const TensorPtr& features,
                              const std::vector<Pair>& pairs) const {
  const TextualPrototypes protos = compute_textual_prototypes(pairs);
  const TensorPtr fn = ops::l2_normalize(features);
  const double inv_tau = 1.0 / cfg_.tau_t;

  BranchOutput out;
  TensorPtr f_attr, f_obj;
  if (text_attr_ca_) {
    auto [fa, sa] = text_attr_ca_->forward(features, protos.attr);
    auto [fo, so] = text_obj_ca_->forward(features, protos.obj);
    f_attr = fa;
    f_obj = fo;
    out.attn_attr = sa;
    out.attn_obj = so;
  } else {
    f_attr = text_attr_mlp_->forward(features);
    f_obj = text_obj_mlp_->forward(features);
  }

  TensorPtr sim_attr =
      ops::matmul(ops::l2_normalize(f_attr), ops::transpose(protos.attr));
  TensorPtr sim_obj =
      ops::matmul(ops::l2_normalize(f_obj), ops::transpose(protos.obj));
  if (out.attn_attr) sim_attr = ops::add(sim_attr, out.attn_attr);
  if (out.attn_obj) sim_obj = ops::add(sim_obj, out.attn_obj);
  out.attr_logits = ops::scale(sim_attr, inv_tau);
  out.obj_logits = ops::scale(sim_obj, inv_tau);
  out.comp_logits =
      ops::scale(ops::matmul(fn, ops::transpose(protos.comp)), inv_tau);
  out.attr_probs = ops::softmax(out.attr_logits, -1);
  out.obj_probs = ops::softmax(out.obj_logits, -1);
  out.comp_probs = ops::softmax(out.comp_logits, -1);
  return out;
}

BranchOutput Model::visual_path(const TensorPtr& features,
                                const std::vector<Pair>& pairs) const {
  const TensorPtr va = ops::l2_normalize(proxies_.attr_proxies);
  const TensorPtr vo = ops::l2_normalize(proxies_.obj_proxies);
  std::vector<std::size_t> firsts, seconds;
  firsts.reserve(pairs.size());
  seconds.reserve(pairs.size());
  for (const Pair& p : pairs) {
    if (p.first >= space_.n_attrs() || p.second >= space_.n_objs()) {
      throw IndexError("visual_path: pair out of range");
    }
    firsts.push_back(p.first);
    seconds.push_back(p.second);
  }
  TensorPtr vc = ops::l2_normalize(ops::linear(
      ops::concat_cols({ops::embedding_lookup(proxies_.attr_proxies, firsts),
                        ops::embedding_lookup(proxies_.obj_proxies, seconds)}),
      proxies_.comp_w, proxies_.comp_b));

  BranchOutput out;
  TensorPtr f_attr, f_obj;
  if (vis_attr_ca_) {
    // The cross-modal module always attends over the textual prototypes;
    // swapped onto the visual branch it keeps that wiring. The prototypes
    // enter as fixed context here: the intra-modal branch does not steer
    // the prompt parameters.
    auto [fa, sa] = vis_attr_ca_->forward(features,
                                          ops::detach(attr_prototypes()));
    auto [fo, so] = vis_obj_ca_->forward(features,
                                         ops::detach(obj_prototypes()));
    f_attr = fa;
    f_obj = fo;
    out.attn_attr = sa;
    out.attn_obj = so;
  } else {
    f_attr = vis_attr_mlp_->forward(features);
    f_obj = vis_obj_mlp_->forward(features);
  }

  const TensorPtr inv_tau_v = ops::exp(ops::scale(log_tau_v_, -1.0));
  out.attr_logits = ops::scale_by(
      ops::matmul(ops::l2_normalize(f_attr), ops::transpose(va)), inv_tau_v);
  out.obj_logits = ops::scale_by(
      ops::matmul(ops::l2_normalize(f_obj), ops::transpose(vo)), inv_tau_v);
  out.comp_logits = ops::scale_by(
      ops::matmul(ops::l2_normalize(features), ops::transpose(vc)), inv_tau_v);
  out.attr_probs = ops::softmax(out.attr_logits, -1);
  out.obj_probs = ops::softmax(out.obj_logits, -1);
  out.comp_probs = ops::softmax(out.comp_logits, -1);
  return out;
}

TensorPtr Model::kl_loss(const BranchOutput& text,
                         const BranchOutput& visual) const {
  auto term = [&](const TensorPtr& pt, const TensorPtr& pv) {
    const TensorPtr target = cfg_.kl_detach_target ? ops::detach(pt) : pt;
    return ops::kl_divergence(target, pv);
  };
  TensorPtr kl = term(text.comp_probs, visual.comp_probs);
  if (cfg_.kl_branches == KlBranches::All) {
    kl = ops::add(kl, term(text.attr_probs, visual.attr_probs));
    kl = ops::add(kl, term(text.obj_probs, visual.obj_probs));
  }
  return kl;
}

std::pair<TensorPtr, LossBreakdown> Model::total_loss(
    const TensorPtr& features, const std::vector<Pair>& labels) const {
  if (features->rank() != 2 || features->rows() != labels.size()) {
    throw ShapeError("total_loss: features/labels disagree");
  }
  std::vector<std::size_t> attr_t, obj_t, comp_t;
  attr_t.reserve(labels.size());
  for (const Pair& p : labels) {
    const std::size_t pos = space_.seen_position(p);
    if (pos == static_cast<std::size_t>(-1)) {
      throw ContractError("total_loss: batch contains an unseen pair label");
    }
    attr_t.push_back(p.first);
    obj_t.push_back(p.second);
    comp_t.push_back(pos);
  }

  const std::vector<Pair>& pairs = space_.seen_pairs;
  LossBreakdown bd;
  TensorPtr lt, lv, lkl;
  BranchOutput text, visual;
  if (!cfg_.no_tp) {
    text = text_path(features, pairs);
    TensorPtr ce_a = ops::cross_entropy_from_logits(text.attr_logits, attr_t);
    TensorPtr ce_o = ops::cross_entropy_from_logits(text.obj_logits, obj_t);
    TensorPtr ce_c = ops::cross_entropy_from_logits(text.comp_logits, comp_t);
    bd.t_attr = ce_a->item();
    bd.t_obj = ce_o->item();
    bd.t_comp = ce_c->item();
    lt = ops::add(ops::scale(ops::add(ce_a, ce_o), cfg_.gamma_ao),
                  ops::scale(ce_c, cfg_.gamma_c));
  }
  if (!cfg_.no_vp) {
    visual = visual_path(features, pairs);
    TensorPtr ce_a =
        ops::cross_entropy_from_logits(visual.attr_logits, attr_t);
    TensorPtr ce_o = ops::cross_entropy_from_logits(visual.obj_logits, obj_t);
    TensorPtr ce_c =
        ops::cross_entropy_from_logits(visual.comp_logits, comp_t);
    bd.v_attr = ce_a->item();
    bd.v_obj = ce_o->item();
    bd.v_comp = ce_c->item();
    lv = ops::add(ops::scale(ops::add(ce_a, ce_o), cfg_.gamma_ao),
                  ops::scale(ce_c, cfg_.gamma_c));
  }
  if (!cfg_.no_tp && !cfg_.no_vp) {
    lkl = kl_loss(text, visual);
    bd.kl = lkl->item();
  }

  TensorPtr modal = lt && lv ? ops::add(lt, lv) : (lt ? lt : lv);
  TensorPtr total = ops::scale(modal, cfg_.alpha);
  if (lkl) total = ops::add(total, ops::scale(lkl, cfg_.beta));
  bd.total = total->item();
  return {total, bd};
}

}  // namespace czp
