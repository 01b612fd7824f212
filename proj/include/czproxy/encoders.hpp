#pragma once

#include <cstdint>
#include <vector>

#include "czproxy/tensor.hpp"

namespace czp {

// Frozen, seed-deterministic stand-in for a contrastively pretrained text
// encoder. Weights are a pure function of (seed, dims): two pre-LN
// transformer blocks (4 heads, FFN ratio 4) over soft token vectors, mean
// pooling, then a projection into the shared feature space. No weight is a
// tape leaf, but gradients flow through the blocks to the input tokens.
class FrozenTextEncoder {
 public:
  struct Config {
    std::size_t vocab_size = 512;
    std::size_t tok_dim = 32;
    std::size_t out_dim = 64;
    std::size_t max_len = 16;
    std::size_t heads = 4;
    std::size_t blocks = 2;
    std::uint64_t seed = 0;
    Dtype dtype = Dtype::F32;
  };

  explicit FrozenTextEncoder(const Config& cfg);

  const Config& config() const { return cfg_; }

  // tokens: each {1, tok_dim}; 1 <= len <= max_len. Returns {1, out_dim}.
  TensorPtr encode(const std::vector<TensorPtr>& tokens) const;

  // Raw vocabulary embedding row (copied values, no tape).
  std::vector<double> vocab_embedding(std::size_t token_id) const;

  // Deterministic content hash of every frozen weight, for freeze checks.
  std::uint64_t weight_hash() const;

  // All frozen tensors, for tests that assert grads never reach them.
  std::vector<TensorPtr> frozen_weights() const;

 private:
  struct Block {
    std::vector<TensorPtr> wq, wk, wv;  // per head {tok_dim, head_dim}
    TensorPtr wo;                       // {tok_dim, tok_dim}
    TensorPtr ln1_g, ln1_b, ln2_g, ln2_b;
    TensorPtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };

  Config cfg_;
  TensorPtr vocab_;      // {vocab_size, tok_dim}
  TensorPtr positions_;  // {max_len, tok_dim}
  std::vector<Block> blocks_;
  TensorPtr out_proj_;   // {tok_dim, out_dim}
};

// Frozen affine stack standing in for a pretrained image encoder:
// raw -> gelu(linear) -> linear -> feature space.
class FrozenImageEncoder {
 public:
  struct Config {
    std::size_t raw_dim = 96;
    std::size_t out_dim = 64;
    std::uint64_t seed = 0;
    Dtype dtype = Dtype::F32;
  };

  explicit FrozenImageEncoder(const Config& cfg);

  const Config& config() const { return cfg_; }

  // raw: {B, raw_dim} -> {B, out_dim}. Deterministic, no tape leaves.
  TensorPtr encode(const TensorPtr& raw) const;

  std::uint64_t weight_hash() const;
  std::vector<TensorPtr> frozen_weights() const;

 private:
  Config cfg_;
  TensorPtr w1_, b1_, w2_, b2_;
};

// Decomposition of a unit vector z against an orthonormal row basis:
// z = sqrt(a) z_x + sqrt(1-a) z_perp with z_x in span(basis), z_perp
// orthogonal to it, and a the squared projection mass.
struct GapDecomposition {
  std::vector<double> z_x;
  std::vector<double> z_perp;
  double a = 0.0;
};

GapDecomposition modality_gap_decompose(const std::vector<double>& z,
                                        const std::vector<std::vector<double>>& visual_basis);

}  // namespace czp
