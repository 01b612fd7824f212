#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "czproxy/encoders.hpp"
#include "czproxy/space.hpp"
#include "czproxy/tensor.hpp"

namespace czp {

enum class DecouplerKind { CrossAttention, Mlp };
enum class KlBranches { CompositionOnly, All };

struct ModelConfig {
  std::size_t feat_dim = 64;  // d
  std::size_t tok_dim = 32;
  std::size_t raw_dim = 96;
  std::size_t heads = 4;
  std::size_t prefix_len = 3;  // tokens spent on the shared prompt prefix
  std::size_t vocab_size = 512;
  double tau_t = 0.01;
  // The visual temperature is a learnable log-parameter. It starts softer
  // than tau_t: the text-initialized proxies are not yet aligned with the
  // visual features, and sharp logits at that point stall the branch.
  double tau_v_init = 0.05;
  double gamma_ao = 1.0;
  double gamma_c = 1.0;
  double alpha = 1.0;
  double beta = 3.0;
  double lambda = 1.0;  // fusion weight, inference-time
  KlBranches kl_branches = KlBranches::All;
  // The textual distribution acts as a fixed target by default; gradient
  // flow into it is opt-in.
  bool kl_detach_target = true;
  DecouplerKind i2t = DecouplerKind::CrossAttention;
  DecouplerKind i2v = DecouplerKind::Mlp;
  bool no_vp = false;  // drop the visual-proxy path (loss and fusion)
  bool no_tp = false;  // drop the textual-prototype path
  Dtype dtype = Dtype::F32;
  std::uint64_t seed = 0;

  void validate() const;
};

// Multi-head cross-attention from a batch of image features (queries) over a
// prototype bank (keys/values), followed by an output projection, residual
// layer-norm and FFN. Returns the branch feature and the head-averaged
// attention scores.
class CrossModalDecoupler {
 public:
  CrossModalDecoupler(std::size_t dim, std::size_t heads, Dtype dtype,
                      std::uint64_t seed, const std::string& name);

  // f: {B, d}, prototypes: {n, d} -> ({B, d}, {B, n})
  std::pair<TensorPtr, TensorPtr> forward(const TensorPtr& f,
                                          const TensorPtr& prototypes) const;

  void collect_parameters(
      const std::string& prefix,
      std::vector<std::pair<std::string, TensorPtr>>& out) const;

 private:
  std::size_t dim_, heads_;
  std::vector<TensorPtr> wq_, wk_, wv_;  // per head {d, d/h}
  TensorPtr wo_;                         // {d, d}
  TensorPtr ln_g_, ln_b_;
  TensorPtr ffn_w1_, ffn_b1_, ffn_w2_, ffn_b2_;
};

// Residual two-layer MLP: x + W2 gelu(W1 x + b1) + b2.
class MlpDecoupler {
 public:
  MlpDecoupler(std::size_t dim, Dtype dtype, std::uint64_t seed,
               const std::string& name, double out_init_std = 0.01);

  TensorPtr forward(const TensorPtr& x) const;

  void collect_parameters(
      const std::string& prefix,
      std::vector<std::pair<std::string, TensorPtr>>& out) const;

 private:
  TensorPtr w1_, b1_, w2_, b2_;
};

// Learnable soft prompts. The composition prompt reuses the same attribute
// and object token tensors as the primitive prompts, so one parameter update
// moves all prompts that mention that primitive.
struct PromptBank {
  TensorPtr prefix_attr, prefix_obj, prefix_comp;  // {prefix_len, tok_dim}
  TensorPtr attr_tokens;                           // {|A|, tok_dim}
  TensorPtr obj_tokens;                            // {|O|, tok_dim}
};

// Learnable class centers in the visual space. Composition proxies are always
// recomputed from the primitive proxies through the projector, which is what
// lets them cover unseen pairs.
struct VisualProxyBank {
  TensorPtr attr_proxies;  // {|A|, d}
  TensorPtr obj_proxies;   // {|O|, d}
  TensorPtr comp_w;        // {2d, d}
  TensorPtr comp_b;        // {d}
};

struct TextualPrototypes {
  TensorPtr attr;  // {|A|, d}, rows unit norm
  TensorPtr obj;   // {|O|, d}
  TensorPtr comp;  // {|pairs|, d}
};

// One modality's branch outputs for a batch.
struct BranchOutput {
  TensorPtr attr_logits, obj_logits, comp_logits;
  TensorPtr attr_probs, obj_probs, comp_probs;
  TensorPtr attn_attr, attn_obj;  // null for MLP decoupling
};

struct LossBreakdown {
  double t_attr = 0, t_obj = 0, t_comp = 0;
  double v_attr = 0, v_obj = 0, v_comp = 0;
  double kl = 0;
  double total = 0;
};

class Model {
 public:
  Model(const CompositionSpace& space, const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const CompositionSpace& space() const { return space_; }
  const FrozenTextEncoder& text_encoder() const { return *text_enc_; }
  const FrozenImageEncoder& image_encoder() const { return *image_enc_; }
  const PromptBank& prompts() const { return prompts_; }
  const VisualProxyBank& proxies() const { return proxies_; }
  const TensorPtr& log_tau_v() const { return log_tau_v_; }

  // All learnable parameters in a fixed order.
  const std::vector<std::pair<std::string, TensorPtr>>& parameters() const {
    return params_;
  }
  // Parameters the optimizer may touch, honoring no_vp / no_tp.
  std::vector<std::pair<std::string, TensorPtr>> trainable_parameters() const;
  void zero_grads() const;
  // Keeps the visual temperature above 1e-4; called after optimizer steps.
  void clamp_temperatures() const;

  // Raw image features -> shared feature space (frozen path, no tape).
  TensorPtr encode_images(const TensorPtr& raw) const;

  TextualPrototypes compute_textual_prototypes(
      const std::vector<Pair>& pairs) const;
  // Current composition proxy for any (i, j) in A x O, unit norm.
  TensorPtr compose_proxy(std::size_t attr, std::size_t obj) const;

  BranchOutput text_path(const TensorPtr& features,
                         const std::vector<Pair>& pairs) const;
  BranchOutput visual_path(const TensorPtr& features,
                           const std::vector<Pair>& pairs) const;

  // Joint loss over a batch of already-encoded features labeled with seen
  // pairs (anything else is a ContractError).
  std::pair<TensorPtr, LossBreakdown> total_loss(
      const TensorPtr& features, const std::vector<Pair>& labels) const;

  // KL term between two sets of branch distributions, honoring the
  // configured branch set and target detachment.
  TensorPtr kl_loss(const BranchOutput& text, const BranchOutput& visual) const;

 private:
  TensorPtr encode_prompt(const TensorPtr& prefix,
                          const std::vector<std::pair<const TensorPtr*,
                                                      std::size_t>>& tokens)
      const;
  TensorPtr attr_prototypes() const;
  TensorPtr obj_prototypes() const;
  void init_prompts();
  void init_visual_proxies();

  CompositionSpace space_;
  ModelConfig cfg_;
  std::shared_ptr<FrozenTextEncoder> text_enc_;
  std::shared_ptr<FrozenImageEncoder> image_enc_;

  PromptBank prompts_;
  VisualProxyBank proxies_;
  TensorPtr log_tau_v_;

  std::unique_ptr<CrossModalDecoupler> text_attr_ca_, text_obj_ca_;
  std::unique_ptr<MlpDecoupler> text_attr_mlp_, text_obj_mlp_;
  std::unique_ptr<CrossModalDecoupler> vis_attr_ca_, vis_obj_ca_;
  std::unique_ptr<MlpDecoupler> vis_attr_mlp_, vis_obj_mlp_;

  std::vector<std::pair<std::string, TensorPtr>> params_;
};

}  // namespace czp
