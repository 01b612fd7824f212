#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "czproxy/errors.hpp"

namespace czp {

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1 };

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor with optional participation in a dynamic gradient
// tape. The tape is the DAG hanging off an op's output: each non-leaf tensor
// owns its parents and a backward function; backward(loss) walks the DAG in
// reverse topological order exactly once and then marks it consumed.
//
// Values are held in doubles. An F32 tensor rounds every stored value through
// IEEE float after each forward op, so f32 serialization is lossless while all
// kernels share one code path. F64 tensors are exact doubles (used for
// finite-difference verification).
class Tensor : public std::enable_shared_from_this<Tensor> {
 public:
  static TensorPtr zeros(std::vector<std::size_t> shape, Dtype dtype,
                         bool requires_grad = false);
  static TensorPtr from_values(std::vector<std::size_t> shape,
                               std::vector<double> values, Dtype dtype,
                               bool requires_grad = false);
  static TensorPtr scalar(double value, Dtype dtype,
                          bool requires_grad = false);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only
  Dtype dtype() const { return dtype_; }
  bool requires_grad() const { return requires_grad_; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }
  double item() const;  // numel()==1 only

  // Gradient accumulator; allocated iff requires_grad.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  // Rounds values through float when dtype is F32; no-op for F64.
  void quantize();

  // Writes raw values (keeps shape), re-quantizing for F32. Detached tensors.
  void set_values(const std::vector<double>& values);

  // --- tape plumbing (used by ops and backward) ---
  std::vector<TensorPtr> parents_;
  std::function<void(Tensor&)> backward_fn_;
  bool consumed_ = false;

 private:
  Tensor() = default;

  std::vector<std::size_t> shape_;
  Dtype dtype_ = Dtype::F64;
  std::vector<double> data_;
  bool requires_grad_ = false;
  std::vector<double> grad_;
};

// Populates dL/dleaf for every requires_grad leaf reachable from `loss`
// (a scalar). Grads accumulate: callers zero them between steps. A second
// backward through any already-consumed node throws StaleGraphError.
void backward(const TensorPtr& loss);

namespace ops {

// Elementwise. `add` and `mul` accept equal shapes or a trailing-axis
// broadcast of a rank-1 vector against a rank-2 matrix; anything richer is a
// ShapeError by design.
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double c);
// Multiply by a scalar tensor (shape {1}), e.g. a learnable temperature.
TensorPtr scale_by(const TensorPtr& a, const TensorPtr& s);
TensorPtr gelu(const TensorPtr& a);
TensorPtr log(const TensorPtr& a);   // requires strictly positive input
TensorPtr exp(const TensorPtr& a);

// Linear algebra (rank-2).
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);
// x[B,in] * w[in,out] + b[out]
TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);

// Structure.
TensorPtr reshape(const TensorPtr& a, std::vector<std::size_t> shape);
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);  // last axis
TensorPtr concat_rows(const std::vector<TensorPtr>& parts);  // first axis
TensorPtr embedding_lookup(const TensorPtr& table,
                           const std::vector<std::size_t>& indices);
TensorPtr detach(const TensorPtr& a);

// Reductions to a {1} scalar.
TensorPtr sum_all(const TensorPtr& a);
TensorPtr mean_all(const TensorPtr& a);

// Row-stable softmax along `axis` (negative axis counts from the back).
TensorPtr softmax(const TensorPtr& a, int axis = -1);

// Per-row layer normalization with affine gain/bias of size d.
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain,
                     const TensorPtr& bias, double eps = 1e-5);

// Per-row L2 normalization; rows with norm <= 1e-12 are a
// DegenerateInputError.
TensorPtr l2_normalize(const TensorPtr& x);

// Mean over the batch of -log softmax(logits)[target].
TensorPtr cross_entropy_from_logits(const TensorPtr& logits,
                                    const std::vector<std::size_t>& targets);

// Mean over the batch of sum_k p_t log(p_t / max(p_v, 1e-8)). Target
// entries at or below the 1e-8 floor contribute zero (the 0*log(0/q) = 0
// convention), and floor dust never drives the result negative. Both
// inputs must be probability rows (sum 1 +- 1e-5, nonnegative) or a
// ContractError is thrown.
TensorPtr kl_divergence(const TensorPtr& p_target, const TensorPtr& p_approx);

}  // namespace ops
}  // namespace czp
