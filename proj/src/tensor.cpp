#include "czproxy/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace czp {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "{";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "}";
  return os.str();
}

void check_same_dtype(const TensorPtr& a, const TensorPtr& b,
                      const char* op) {
  if (a->dtype() != b->dtype()) {
    throw ShapeError(std::string(op) + ": dtype mismatch");
  }
}

}  // namespace

TensorPtr Tensor::zeros(std::vector<std::size_t> shape, Dtype dtype,
                        bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive");
  }
  auto t = TensorPtr(new Tensor());
  t->shape_ = std::move(shape);
  t->dtype_ = dtype;
  t->data_.assign(shape_numel(t->shape_), 0.0);
  t->requires_grad_ = requires_grad;
  if (requires_grad) t->grad_.assign(t->data_.size(), 0.0);
  return t;
}

TensorPtr Tensor::from_values(std::vector<std::size_t> shape,
                              std::vector<double> values, Dtype dtype,
                              bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("from_values: " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  auto t = zeros(std::move(shape), dtype, requires_grad);
  t->data_ = std::move(values);
  t->quantize();
  return t;
}

TensorPtr Tensor::scalar(double value, Dtype dtype, bool requires_grad) {
  return from_values({1}, {value}, dtype, requires_grad);
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor is not rank-2");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): tensor is not rank-2");
  return shape_[1];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item(): tensor is not a scalar");
  return data_[0];
}

std::vector<double>& Tensor::grad() {
  if (!requires_grad_) throw ContractError("grad(): tensor has no gradient");
  return grad_;
}

const std::vector<double>& Tensor::grad() const {
  if (!requires_grad_) throw ContractError("grad(): tensor has no gradient");
  return grad_;
}

void Tensor::zero_grad() {
  if (requires_grad_) std::fill(grad_.begin(), grad_.end(), 0.0);
}

void Tensor::quantize() {
  if (dtype_ == Dtype::F32) {
    for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
  }
}

void Tensor::set_values(const std::vector<double>& values) {
  if (values.size() != data_.size()) {
    throw ShapeError("set_values: size mismatch");
  }
  data_ = values;
  quantize();
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const TensorPtr& loss) {
  if (!loss) throw ContractError("backward: null tensor");
  if (loss->numel() != 1) throw ContractError("backward: loss is not scalar");
  if (!loss->requires_grad()) {
    throw ContractError("backward: loss does not require grad");
  }

  // Iterative post-order DFS; reject reuse of consumed interior nodes.
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> visited;
  std::vector<std::pair<Tensor*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (node->consumed_ && node->backward_fn_) {
      throw StaleGraphError(
          "backward: graph already consumed; rebuild the forward pass");
    }
    if (idx < node->parents_.size()) {
      Tensor* parent = node->parents_[idx].get();
      ++idx;
      if (parent->requires_grad() && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->grad().assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor* node = *it;
    node->consumed_ = true;
    if (node->backward_fn_) node->backward_fn_(*node);
  }
}

// ---------------------------------------------------------------------------
// op helpers
// ---------------------------------------------------------------------------

namespace ops {
namespace {

TensorPtr make_result(std::vector<std::size_t> shape,
                      std::vector<double> values,
                      const std::vector<TensorPtr>& inputs) {
  bool rg = false;
  Dtype dt = inputs.front()->dtype();
  for (const auto& in : inputs) rg = rg || in->requires_grad();
  auto out = Tensor::from_values(std::move(shape), std::move(values), dt, rg);
  if (rg) out->parents_ = inputs;
  return out;
}

// Accumulate g into t's grad if it participates in the tape.
void accum(Tensor& t, std::size_t i, double g) {
  if (t.requires_grad()) t.grad()[i] += g;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kKlFloor = 1e-8;

}  // namespace

// --- elementwise -----------------------------------------------------------

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  check_same_dtype(a, b, "add");
  const bool bcast = a->rank() == 2 && b->rank() == 1 &&
                     b->shape()[0] == a->cols();
  if (!bcast && a->shape() != b->shape()) {
    throw ShapeError("add: incompatible shapes " + shape_str(a->shape()) +
                     " vs " + shape_str(b->shape()));
  }
  std::vector<double> out(a->numel());
  const std::size_t c = bcast ? a->cols() : 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a->values()[i] + (bcast ? b->values()[i % c] : b->values()[i]);
  }
  auto res = make_result(a->shape(), std::move(out), {a, b});
  if (res->requires_grad()) {
    res->backward_fn_ = [bcast, c](Tensor& o) {
      Tensor& pa = *o.parents_[0];
      Tensor& pb = *o.parents_[1];
      for (std::size_t i = 0; i < o.numel(); ++i) {
        const double g = o.grad()[i];
        accum(pa, i, g);
        accum(pb, bcast ? (i % c) : i, g);
      }
    };
  }
  return res;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
  check_same_dtype(a, b, "mul");
  const bool bcast = a->rank() == 2 && b->rank() == 1 &&
                     b->shape()[0] == a->cols();
  if (!bcast && a->shape() != b->shape()) {
    throw ShapeError("mul: incompatible shapes " + shape_str(a->shape()) +
                     " vs " + shape_str(b->shape()));
  }
  const std::size_t c = bcast ? a->cols() : 0;
  std::vector<double> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a->values()[i] * (bcast ? b->values()[i % c] : b->values()[i]);
  }
  auto res = make_result(a->shape(), std::move(out), {a, b});
  if (res->requires_grad()) {
    res->backward_fn_ = [bcast, c](Tensor& o) {
      Tensor& pa = *o.parents_[0];
      Tensor& pb = *o.parents_[1];
      for (std::size_t i = 0; i < o.numel(); ++i) {
        const double g = o.grad()[i];
        const std::size_t bi = bcast ? (i % c) : i;
        accum(pa, i, g * pb.values()[bi]);
        accum(pb, bi, g * pa.values()[i]);
      }
    };
  }
  return res;
}

TensorPtr scale(const TensorPtr& a, double cst) {
  std::vector<double> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values()[i] * cst;
  auto res = make_result(a->shape(), std::move(out), {a});
  if (res->requires_grad()) {
    res->backward_fn_ = [cst](Tensor& o) {
      Tensor& pa = *o.parents_[0];
      for (std::size_t i = 0; i < o.numel(); ++i) {
        accum(pa, i, o.grad()[i] * cst);
      }
    };
  }
  return res;
}

TensorPtr scale_by(const TensorPtr& a, const TensorPtr& s) {
  check_same_dtype(a, s, "scale_by");
  if (s->numel() != 1) throw ShapeError("scale_by: scaler must be a scalar");
  const double sv = s->values()[0];
  std::vector<double> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values()[i] * sv;
  auto res = make_result(a->shape(), std::move(out), {a, s});
  if (res->requires_grad()) {
    res->backward_fn_ = [](Tensor& o) {
      Tensor& pa = *o.parents_[0];
      Tensor& ps = *o.parents_[1];
      const double sv2 = ps.values()[0];
      double gs = 0.0;
      for (std::size_t i = 0; i < o.numel(); ++i) {
        const double g = o.grad()[i];
        accum(pa, i, g * sv2);
        gs += g * pa.values()[i];
      }
      accum(ps, 0, gs);
    };
  }
  return res;
}

TensorPtr gelu(const TensorPtr& a) {
  std::vector<double> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a->values()[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  auto res = make_result(a->shape(), std::move(out), {a});
  if (res->requires_grad()) {
    res->backward_fn_ = [](Tensor& o) {
      Tensor& pa = *o.parents_[0];
      for (std::size_t i = 0; i < o.numel(); ++i) {
        const double x = pa.values()[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        accum(pa, i, o.grad()[i] * (cdf + x * pdf));
      }
    };
  }
  return res;
}

TensorPtr log(const TensorPtr& a) {
  std::vector<double> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a->values()[i];
    if (!(x > 0.0)) throw DegenerateInputError("log: input must be positive");
    out[i] = std::log(x);
  }
  auto res = make_result(a->shape(), std::move(out), {a});
  if (res->requires_grad()) {
    res->backward_fn_ = [](Tensor& o) {
      Tensor& pa = *o.parents_[0];
      for (std::size_t i = 0; i < o.numel(); ++i) {
        accum(pa, i, o.grad()[i] / pa.values()[i]);
      }
    };
  }
  return res;
}

TensorPtr exp(const TensorPtr& a) {
  std::vector<double> out(a->numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(a->values()[i]);
  }
  auto res = make_result(a->shape(), std::move(out), {a});
  if (res->requires_grad()) {
    res->backward_fn_ = [](Tensor& o) {
      Tensor& pa = *o.parents_[0];
      for (std::size_t i = 0; i < o.numel(); ++i) {
        accum(pa, i, o.grad()[i] * o.values()[i]);
      }
    };
  }
  return res;
}

// --- linear algebra ---------------------------------------------------------

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
  check_same_dtype(a, b, "matmul");
  if (a->rank() != 2 || b->rank() != 2 || a->cols() != b->rows()) {
    throw ShapeError("matmul: " + shape_str(a->shape()) + " x " +
                     shape_str(b->shape()));
  }
  const std::size_t m = a->rows(), k = a->cols(), n = b->cols();
  std::vector<double> out(m * n, 0.0);
  const double* av = a->values().data();
  const double* bv = b->values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  auto res = make_result({m, n}, std::move(out), {a, b});
  if (res->requires_grad()) {
    res->backward_fn_ = [m, k, n](Tensor& o) {
      Tensor& pa = *o.parents_[0];
      Tensor& pb = *o.parents_[1];
      const double* g = o.grad().data();
      if (pa.requires_grad()) {
        // dA = dOut * B^T
        double* ga = pa.grad().data();
        const double* bv2 = pb.values().data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = g + i * n;
            const double* brow = bv2 + p * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (pb.requires_grad()) {
        // dB = A^T * dOut
        double* gb = pb.grad().data();
        const double* av2 = pa.values().data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av2[i * k + p];
            if (aip == 0.0) continue;
            double* gbrow = gb + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
          }
        }
      }
    };
  }
  return res;
}

TensorPtr transpose(const TensorPtr& a) {
  if (a->rank() != 2) throw ShapeError("transpose: rank-2 required");
  const std::size_t r = a->rows(), c = a->cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a->values()[i * c + j];
  }
  auto res = make_result({c, r}, std::move(out), {a});
  if (res->requires_grad()) {
    res->backward_fn_ = [r, c](Tensor& o) {
      Tensor& pa = *o.parents_[0];
      if (!pa.requires_grad()) return;
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          pa.grad()[i * c + j] += o.grad()[j * r + i];
        }
      }
    };
  }
  return res;
}

TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
  if (b->rank() != 1 || w->rank() != 2 || b->shape()[0] != w->cols()) {
    throw ShapeError("linear: bias/weight shapes disagree");
  }
  return add(matmul(x, w), b);
}

// --- structure ---------------------------------------------------------------

TensorPtr reshape(const TensorPtr& a, std::vector<std::size_t> shape) {
  if (shape_numel(shape) != a->numel()) {
    throw ShapeError("reshape: element count mismatch");
  }
  auto res = make_result(std::move(shape), a->values(), {a});
  if (res->requires_grad()) {
    res->backward_fn_ = [](Tensor& o) {
      Tensor& pa = *o.parents_[0];
      for (std::size_t i = 0; i < o.numel(); ++i) accum(pa, i, o.grad()[i]);
    };
  }
  return res;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t r = parts[0]->rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_same_dtype(parts[0], p, "concat_cols");
    if (p->rank() != 2 || p->rows() != r) {
      throw ShapeError("concat_cols: row counts disagree");
    }
    total += p->cols();
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t c = p->cols();
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(p->values().begin() + i * c, c,
                  out.begin() + i * total + off);
    }
    off += c;
  }
  auto res = make_result({r, total}, std::move(out), parts);
  if (res->requires_grad()) {
    res->backward_fn_ = [r, total](Tensor& o) {
      std::size_t off2 = 0;
      for (auto& pp : o.parents_) {
        Tensor& p = *pp;
        const std::size_t c = p.cols();
        if (p.requires_grad()) {
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              p.grad()[i * c + j] += o.grad()[i * total + off2 + j];
            }
          }
        }
        off2 += c;
      }
    };
  }
  return res;
}

TensorPtr concat_rows(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t c = parts[0]->cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_same_dtype(parts[0], p, "concat_rows");
    if (p->rank() != 2 || p->cols() != c) {
      throw ShapeError("concat_rows: column counts disagree");
    }
    total += p->rows();
  }
  std::vector<double> out;
  out.reserve(total * c);
  for (const auto& p : parts) {
    out.insert(out.end(), p->values().begin(), p->values().end());
  }
  auto res = make_result({total, c}, std::move(out), parts);
  if (res->requires_grad()) {
    res->backward_fn_ = [](Tensor& o) {
      std::size_t off = 0;
      for (auto& pp : o.parents_) {
        Tensor& p = *pp;
        if (p.requires_grad()) {
          for (std::size_t i = 0; i < p.numel(); ++i) {
            p.grad()[i] += o.grad()[off + i];
          }
        }
        off += p.numel();
      }
    };
  }
  return res;
}

TensorPtr embedding_lookup(const TensorPtr& table,
                           const std::vector<std::size_t>& indices) {
  if (table->rank() != 2) throw ShapeError("embedding_lookup: rank-2 table");
  if (indices.empty()) throw ShapeError("embedding_lookup: empty index list");
  const std::size_t r = table->rows(), c = table->cols();
  std::vector<double> out(indices.size() * c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= r) {
      throw IndexError("embedding_lookup: index " +
                       std::to_string(indices[i]) + " out of range");
    }
    std::copy_n(table->values().begin() + indices[i] * c, c,
                out.begin() + i * c);
  }
  auto res = make_result({indices.size(), c}, std::move(out), {table});
  if (res->requires_grad()) {
    res->backward_fn_ = [indices, c](Tensor& o) {
      Tensor& t = *o.parents_[0];
      if (!t.requires_grad()) return;
      for (std::size_t i = 0; i < indices.size(); ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          t.grad()[indices[i] * c + j] += o.grad()[i * c + j];
        }
      }
    };
  }
  return res;
}

TensorPtr detach(const TensorPtr& a) {
  return Tensor::from_values(a->shape(), a->values(), a->dtype(), false);
}

// --- reductions ---------------------------------------------------------------

TensorPtr sum_all(const TensorPtr& a) {
  double s = 0.0;
  for (double v : a->values()) s += v;
  auto res = make_result({1}, {s}, {a});
  if (res->requires_grad()) {
    res->backward_fn_ = [](Tensor& o) {
      Tensor& pa = *o.parents_[0];
      const double g = o.grad()[0];
      for (std::size_t i = 0; i < pa.numel(); ++i) accum(pa, i, g);
    };
  }
  return res;
}

TensorPtr mean_all(const TensorPtr& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a->numel()));
}

// --- softmax / normalization ---------------------------------------------------

namespace {

struct AxisView {
  std::size_t outer, n, inner;
};

AxisView axis_view(const Tensor& t, int axis) {
  const int r = static_cast<int>(t.rank());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("softmax: bad axis");
  AxisView v{1, t.shape()[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) v.outer *= t.shape()[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < r; ++i) {
    v.inner *= t.shape()[static_cast<std::size_t>(i)];
  }
  return v;
}

}  // namespace

TensorPtr softmax(const TensorPtr& a, int axis) {
  const AxisView v = axis_view(*a, axis);
  std::vector<double> out(a->numel());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.n * v.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < v.n; ++k) {
        mx = std::max(mx, a->values()[base + k * v.inner]);
      }
      double denom = 0.0;
      for (std::size_t k = 0; k < v.n; ++k) {
        const double e = std::exp(a->values()[base + k * v.inner] - mx);
        out[base + k * v.inner] = e;
        denom += e;
      }
      for (std::size_t k = 0; k < v.n; ++k) out[base + k * v.inner] /= denom;
    }
  }
  auto res = make_result(a->shape(), std::move(out), {a});
  if (res->requires_grad()) {
    res->backward_fn_ = [v](Tensor& o) {
      Tensor& pa = *o.parents_[0];
      if (!pa.requires_grad()) return;
      for (std::size_t ou = 0; ou < v.outer; ++ou) {
        for (std::size_t in = 0; in < v.inner; ++in) {
          const std::size_t base = ou * v.n * v.inner + in;
          double dot = 0.0;
          for (std::size_t k = 0; k < v.n; ++k) {
            const std::size_t i = base + k * v.inner;
            dot += o.grad()[i] * o.values()[i];
          }
          for (std::size_t k = 0; k < v.n; ++k) {
            const std::size_t i = base + k * v.inner;
            pa.grad()[i] += o.values()[i] * (o.grad()[i] - dot);
          }
        }
      }
    };
  }
  return res;
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain,
                     const TensorPtr& bias, double eps) {
  check_same_dtype(x, gain, "layer_norm");
  check_same_dtype(x, bias, "layer_norm");
  const std::size_t d = x->rank() == 1 ? x->shape()[0] : x->cols();
  const std::size_t rows = x->numel() / d;
  if (x->rank() > 2) throw ShapeError("layer_norm: rank-1/2 only");
  if (d < 2) throw ShapeError("layer_norm: d >= 2 required");
  if (gain->numel() != d || bias->numel() != d) {
    throw ShapeError("layer_norm: gain/bias must have d entries");
  }
  std::vector<double> out(x->numel());
  std::vector<double> xhat(x->numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x->values().data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * inv;
      xhat[r * d + j] = h;
      out[r * d + j] = gain->values()[j] * h + bias->values()[j];
    }
  }
  auto res = make_result(x->shape(), std::move(out), {x, gain, bias});
  if (res->requires_grad()) {
    res->backward_fn_ = [d, rows, xhat = std::move(xhat),
                         inv_std = std::move(inv_std)](Tensor& o) {
      Tensor& px = *o.parents_[0];
      Tensor& pg = *o.parents_[1];
      Tensor& pb = *o.parents_[2];
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g = o.grad().data() + r * d;
        const double* h = xhat.data() + r * d;
        double sum_dh = 0.0, sum_dh_h = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = g[j] * pg.values()[j];
          sum_dh += dh;
          sum_dh_h += dh * h[j];
          if (pg.requires_grad()) pg.grad()[j] += g[j] * h[j];
          if (pb.requires_grad()) pb.grad()[j] += g[j];
        }
        if (px.requires_grad()) {
          const double inv = inv_std[r];
          const double nd = static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = g[j] * pg.values()[j];
            px.grad()[r * d + j] +=
                inv * (dh - sum_dh / nd - h[j] * sum_dh_h / nd);
          }
        }
      }
    };
  }
  return res;
}

TensorPtr l2_normalize(const TensorPtr& x) {
  const std::size_t d = x->rank() == 1 ? x->shape()[0] : x->cols();
  if (x->rank() > 2) throw ShapeError("l2_normalize: rank-1/2 only");
  const std::size_t rows = x->numel() / d;
  std::vector<double> out(x->numel());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x->values().data() + r * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += row[j] * row[j];
    const double norm = std::sqrt(s);
    if (norm <= 1e-12) {
      throw DegenerateInputError("l2_normalize: near-zero row");
    }
    norms[r] = norm;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = row[j] / norm;
  }
  auto res = make_result(x->shape(), std::move(out), {x});
  if (res->requires_grad()) {
    res->backward_fn_ = [d, rows, norms = std::move(norms)](Tensor& o) {
      Tensor& px = *o.parents_[0];
      if (!px.requires_grad()) return;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g = o.grad().data() + r * d;
        const double* y = o.values().data() + r * d;
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < d; ++j) {
          px.grad()[r * d + j] += (g[j] - dot * y[j]) / norms[r];
        }
      }
    };
  }
  return res;
}

// --- losses ---------------------------------------------------------------------

TensorPtr cross_entropy_from_logits(const TensorPtr& logits,
                                    const std::vector<std::size_t>& targets) {
  if (logits->rank() != 2) throw ShapeError("cross_entropy: rank-2 logits");
  const std::size_t b = logits->rows(), n = logits->cols();
  if (targets.size() != b) {
    throw ShapeError("cross_entropy: batch/target count mismatch");
  }
  std::vector<double> probs(b * n);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (targets[i] >= n) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[i]) +
                       " out of range for " + std::to_string(n) + " classes");
    }
    const double* row = logits->values().data() + i * n;
    double mx = row[0];
    for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, row[k]);
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double e = std::exp(row[k] - mx);
      probs[i * n + k] = e;
      denom += e;
    }
    for (std::size_t k = 0; k < n; ++k) probs[i * n + k] /= denom;
    loss += std::log(denom) + mx - row[targets[i]];
  }
  loss /= static_cast<double>(b);
  auto res = make_result({1}, {loss}, {logits});
  if (res->requires_grad()) {
    res->backward_fn_ = [b, n, targets, probs = std::move(probs)](Tensor& o) {
      Tensor& pl = *o.parents_[0];
      if (!pl.requires_grad()) return;
      const double g = o.grad()[0] / static_cast<double>(b);
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
          const double delta = (k == targets[i]) ? 1.0 : 0.0;
          pl.grad()[i * n + k] += g * (probs[i * n + k] - delta);
        }
      }
    };
  }
  return res;
}

TensorPtr kl_divergence(const TensorPtr& p_target, const TensorPtr& p_approx) {
  check_same_dtype(p_target, p_approx, "kl_divergence");
  if (p_target->shape() != p_approx->shape() || p_target->rank() != 2) {
    throw ShapeError("kl_divergence: matching rank-2 shapes required");
  }
  
  const std::size_t b = p_target->rows(), n = p_target->cols();
  for (const TensorPtr& t : {p_target, p_approx}) {
    for (std::size_t i = 0; i < b; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double v = t->values()[i * n + k];
        if (v < -1e-12) {
          throw ContractError("kl_divergence: negative probability entry");
        }
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-5) {
        throw ContractError("kl_divergence: row does not sum to 1");
      }
    }
  }
  // Target entries at or below the floor are treated as zero mass (the
  // 0 * log(0/q) = 0 convention extended to the floor), so identical
  // distributions give exactly zero and the result never dips below zero
  // from floor dust.
  double total = 0.0;
  for (std::size_t i = 0; i < b * n; ++i) {
    const double pt = p_target->values()[i];
    if (pt <= kKlFloor) continue;
    const double pv = std::max(p_approx->values()[i], kKlFloor);
    total += pt * (std::log(pt) - std::log(pv));
  }
  total /= static_cast<double>(b);
  const bool clamped = total < 0.0;
  if (clamped) total = 0.0;
  auto res = make_result({1}, {total}, {p_target, p_approx});
  if (res->requires_grad()) {
    res->backward_fn_ = [b, n, clamped](Tensor& o) {
      if (clamped) return;
      Tensor& pt = *o.parents_[0];
      Tensor& pv = *o.parents_[1];
      const double g = o.grad()[0] / static_cast<double>(b);
      for (std::size_t i = 0; i < b * n; ++i) {
        const double t = pt.values()[i];
        if (t <= kKlFloor) continue;
        const double vfloored = std::max(pv.values()[i], kKlFloor);
        if (pt.requires_grad()) {
          pt.grad()[i] += g * (std::log(t) - std::log(vfloored) + 1.0);
        }
        if (pv.requires_grad() && pv.values()[i] > kKlFloor) {
          pv.grad()[i] -= g * t / vfloored;
        }
      }
    };
  }
  return res;
}

}  // namespace ops
}  // namespace czp
