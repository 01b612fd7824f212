#include "czproxy/encoders.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "czproxy/rng.hpp"

namespace czp {

namespace {

TensorPtr frozen_gaussian(std::uint64_t seed, const std::string& name,
                          std::vector<std::size_t> shape, double stddev,
                          Dtype dtype) {
  CounterRng rng(CounterRng::derive(seed, name));
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return Tensor::from_values(std::move(shape), rng.gaussians(n, stddev),
                             dtype, false);
}

TensorPtr frozen_const(std::vector<std::size_t> shape, double v, Dtype dtype) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return Tensor::from_values(std::move(shape),
                             std::vector<double>(n, v), dtype, false);
}

std::uint64_t hash_values(std::uint64_t h, const Tensor& t) {
  for (double v : t.values()) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h = CounterRng::mix(h ^ bits);
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// FrozenTextEncoder
// ---------------------------------------------------------------------------

FrozenTextEncoder::FrozenTextEncoder(const Config& cfg) : cfg_(cfg) {
  if (cfg.tok_dim % cfg.heads != 0) {
    throw ConfigError("text encoder: heads must divide tok_dim");
  }
  const std::size_t d = cfg.tok_dim;
  const std::size_t hd = d / cfg.heads;
  const double w_std = 1.0 / std::sqrt(static_cast<double>(d));

  vocab_ = frozen_gaussian(cfg.seed, "vocab", {cfg.vocab_size, d}, 0.05,
                           cfg.dtype);
  positions_ = frozen_gaussian(cfg.seed, "positions", {cfg.max_len, d}, 0.05,
                               cfg.dtype);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    Block blk;
    const std::string p = "block" + std::to_string(b) + ".";
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string hp = p + "h" + std::to_string(h) + ".";
      blk.wq.push_back(
          frozen_gaussian(cfg.seed, hp + "wq", {d, hd}, w_std, cfg.dtype));
      blk.wk.push_back(
          frozen_gaussian(cfg.seed, hp + "wk", {d, hd}, w_std, cfg.dtype));
      blk.wv.push_back(
          frozen_gaussian(cfg.seed, hp + "wv", {d, hd}, w_std, cfg.dtype));
    }
    blk.wo = frozen_gaussian(cfg.seed, p + "wo", {d, d}, w_std, cfg.dtype);
    blk.ln1_g = frozen_const({d}, 1.0, cfg.dtype);
    blk.ln1_b = frozen_const({d}, 0.0, cfg.dtype);
    blk.ln2_g = frozen_const({d}, 1.0, cfg.dtype);
    blk.ln2_b = frozen_const({d}, 0.0, cfg.dtype);
    blk.ffn_w1 = frozen_gaussian(cfg.seed, p + "ffn_w1", {d, 4 * d}, w_std,
                                 cfg.dtype);
    blk.ffn_b1 = frozen_const({4 * d}, 0.0, cfg.dtype);
    blk.ffn_w2 = frozen_gaussian(cfg.seed, p + "ffn_w2", {4 * d, d},
                                 1.0 / std::sqrt(4.0 * static_cast<double>(d)),
                                 cfg.dtype);
    blk.ffn_b2 = frozen_const({d}, 0.0, cfg.dtype);
    blocks_.push_back(std::move(blk));
  }
  out_proj_ = frozen_gaussian(cfg.seed, "out_proj", {d, cfg.out_dim}, w_std,
                              cfg.dtype);
}

TensorPtr FrozenTextEncoder::encode(const std::vector<TensorPtr>& tokens) const {
  if (tokens.empty()) throw ContractError("encode_text: empty token sequence");
  if (tokens.size() > cfg_.max_len) {
    throw ContractError("encode_text: sequence longer than max_len");
  }
  const std::size_t len = tokens.size();
  const std::size_t d = cfg_.tok_dim;
  for (const auto& t : tokens) {
    if (t->rank() != 2 || t->rows() != 1 || t->cols() != d) {
      throw ShapeError("encode_text: tokens must be {1, tok_dim}");
    }
  }

  std::vector<std::size_t> pos_ids(len);
  for (std::size_t i = 0; i < len; ++i) pos_ids[i] = i;
  TensorPtr x = ops::add(ops::concat_rows(tokens),
                         ops::embedding_lookup(positions_, pos_ids));

  const double inv_sqrt_hd =
      1.0 / std::sqrt(static_cast<double>(d / cfg_.heads));
  for (const Block& blk : blocks_) {
    TensorPtr h = ops::layer_norm(x, blk.ln1_g, blk.ln1_b);
    std::vector<TensorPtr> head_outs;
    for (std::size_t hi = 0; hi < cfg_.heads; ++hi) {
      TensorPtr q = ops::matmul(h, blk.wq[hi]);
      TensorPtr k = ops::matmul(h, blk.wk[hi]);
      TensorPtr v = ops::matmul(h, blk.wv[hi]);
      TensorPtr scores = ops::softmax(
          ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt_hd), -1);
      head_outs.push_back(ops::matmul(scores, v));
    }
    x = ops::add(x, ops::matmul(ops::concat_cols(head_outs), blk.wo));
    TensorPtr h2 = ops::layer_norm(x, blk.ln2_g, blk.ln2_b);
    TensorPtr ff = ops::linear(ops::gelu(ops::linear(h2, blk.ffn_w1,
                                                     blk.ffn_b1)),
                               blk.ffn_w2, blk.ffn_b2);
    x = ops::add(x, ff);
  }

  // Pool at the final token (the usual contrastive-encoder convention);
  // earlier tokens reach it through attention. A constant selector row
  // keeps the tape simple.
  std::vector<double> selector(len, 0.0);
  selector.back() = 1.0;
  TensorPtr pool = Tensor::from_values({1, len}, std::move(selector),
                                       cfg_.dtype, false);
  return ops::matmul(ops::matmul(pool, x), out_proj_);
}

std::vector<double> FrozenTextEncoder::vocab_embedding(
    std::size_t token_id) const {
  if (token_id >= cfg_.vocab_size) {
    throw IndexError("vocab_embedding: token id out of range");
  }
  const std::size_t d = cfg_.tok_dim;
  return {vocab_->values().begin() + token_id * d,
          vocab_->values().begin() + (token_id + 1) * d};
}

std::vector<TensorPtr> FrozenTextEncoder::frozen_weights() const {
  std::vector<TensorPtr> out{vocab_, positions_, out_proj_};
  for (const Block& blk : blocks_) {
    for (const auto& t : blk.wq) out.push_back(t);
    for (const auto& t : blk.wk) out.push_back(t);
    for (const auto& t : blk.wv) out.push_back(t);
    out.insert(out.end(), {blk.wo, blk.ln1_g, blk.ln1_b, blk.ln2_g, blk.ln2_b,
                           blk.ffn_w1, blk.ffn_b1, blk.ffn_w2, blk.ffn_b2});
  }
  return out;
}

std::uint64_t FrozenTextEncoder::weight_hash() const {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (const auto& t : frozen_weights()) h = hash_values(h, *t);
  return h;
}

// ---------------------------------------------------------------------------
// FrozenImageEncoder
// ---------------------------------------------------------------------------

FrozenImageEncoder::FrozenImageEncoder(const Config& cfg) : cfg_(cfg) {
  const double s1 = 1.0 / std::sqrt(static_cast<double>(cfg.raw_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(cfg.out_dim));
  w1_ = frozen_gaussian(cfg.seed, "img.w1", {cfg.raw_dim, cfg.out_dim}, s1,
                        cfg.dtype);
  b1_ = frozen_gaussian(cfg.seed, "img.b1", {cfg.out_dim}, 0.02, cfg.dtype);
  w2_ = frozen_gaussian(cfg.seed, "img.w2", {cfg.out_dim, cfg.out_dim}, s2,
                        cfg.dtype);
  b2_ = frozen_gaussian(cfg.seed, "img.b2", {cfg.out_dim}, 0.02, cfg.dtype);
}

TensorPtr FrozenImageEncoder::encode(const TensorPtr& raw) const {
  if (raw->rank() != 2 || raw->cols() != cfg_.raw_dim) {
    throw ShapeError("encode_image: expected {B, raw_dim} input");
  }
  return ops::linear(ops::gelu(ops::linear(raw, w1_, b1_)), w2_, b2_);
}

std::vector<TensorPtr> FrozenImageEncoder::frozen_weights() const {
  return {w1_, b1_, w2_, b2_};
}

std::uint64_t FrozenImageEncoder::weight_hash() const {
  std::uint64_t h = 0xbb67ae8584caa73bULL;
  for (const auto& t : frozen_weights()) h = hash_values(h, *t);
  return h;
}

// ---------------------------------------------------------------------------
// modality_gap_decompose
// ---------------------------------------------------------------------------

GapDecomposition modality_gap_decompose(
    const std::vector<double>& z,
    const std::vector<std::vector<double>>& visual_basis) {
  const std::size_t d = z.size();
  if (visual_basis.empty()) {
    throw ContractError("gap decompose: empty basis");
  }
  for (std::size_t i = 0; i < visual_basis.size(); ++i) {
    if (visual_basis[i].size() != d) {
      throw ShapeError("gap decompose: basis row dimension mismatch");
    }
    for (std::size_t j = i; j < visual_basis.size(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        dot += visual_basis[i][k] * visual_basis[j][k];
      }
      const double expect = (i == j) ? 1.0 : 0.0;
      if (std::abs(dot - expect) > 1e-6) {
        throw ContractError("gap decompose: basis is not orthonormal");
      }
    }
  }
  double znorm = 0.0;
  for (double v : z) znorm += v * v;
  if (std::abs(std::sqrt(znorm) - 1.0) > 1e-6) {
    throw ContractError("gap decompose: z must be unit norm");
  }

  std::vector<double> proj(d, 0.0);
  for (const auto& row : visual_basis) {
    double coef = 0.0;
    for (std::size_t k = 0; k < d; ++k) coef += z[k] * row[k];
    for (std::size_t k = 0; k < d; ++k) proj[k] += coef * row[k];
  }
  double pn2 = 0.0;
  for (double v : proj) pn2 += v * v;

  GapDecomposition out;
  out.a = pn2;
  out.z_x.assign(d, 0.0);
  out.z_perp.assign(d, 0.0);
  const double pn = std::sqrt(pn2);
  if (pn >= 1e-10) {
    for (std::size_t k = 0; k < d; ++k) out.z_x[k] = proj[k] / pn;
  }
  double rn2 = 0.0;
  std::vector<double> resid(d);
  for (std::size_t k = 0; k < d; ++k) {
    resid[k] = z[k] - proj[k];
    rn2 += resid[k] * resid[k];
  }
  const double rn = std::sqrt(rn2);
  if (rn >= 1e-10) {
    for (std::size_t k = 0; k < d; ++k) out.z_perp[k] = resid[k] / rn;
  }
  return out;
}

}  // namespace czp
