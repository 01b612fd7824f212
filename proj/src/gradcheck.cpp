#include "czproxy/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "czproxy/rng.hpp"
#include "czproxy/world.hpp"

namespace czp {

namespace {

TensorPtr random_leaf(CounterRng& rng, std::vector<std::size_t> shape,
                      double stddev = 1.0) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return Tensor::from_values(std::move(shape), rng.gaussians(n, stddev),
                             Dtype::F64, true);
}

// Random fixed weights turn "sum of output" into a non-degenerate scalar.
// The weight tensor is materialized once per case so repeated forward passes
// evaluate the same function.
TensorPtr fixed_weights(std::uint64_t seed, const std::string& label,
                        std::vector<std::size_t> shape) {
  CounterRng rng(CounterRng::derive(seed, label));
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return Tensor::from_values(std::move(shape), rng.gaussians(n), Dtype::F64,
                             false);
}

TensorPtr weighted_sum(const TensorPtr& out, const TensorPtr& w) {
  return ops::sum_all(ops::mul(out, w));
}

double check_params(const std::vector<TensorPtr>& params,
                    const std::function<TensorPtr()>& loss_fn) {
  TensorPtr loss = loss_fn();
  for (const TensorPtr& p : params) p->zero_grad();
  backward(loss);
  double worst = 0.0;
  for (const TensorPtr& p : params) {
    worst = std::max(
        worst,
        finite_difference_error(p, [&] { return loss_fn()->item(); }));
  }
  return worst;
}

}  // namespace

double finite_difference_error(const TensorPtr& param,
                               const std::function<double()>& forward) {
  double max_rel = 0.0;
  std::vector<double>& vals = param->values();
  const std::vector<double>& analytic = param->grad();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double x0 = vals[i];
    // Fourth-order central stencil: the O(h^4) truncation allows a step
    // wide enough to keep roundoff negligible even for sharp-temperature
    // losses.
    const double h = 1e-4 * std::max(1.0, std::abs(x0));
    auto eval = [&](double x) {
      vals[i] = x;
      return forward();
    };
    const double f1 = eval(x0 + h);
    const double f2 = eval(x0 - h);
    const double f3 = eval(x0 + 2.0 * h);
    const double f4 = eval(x0 - 2.0 * h);
    vals[i] = x0;
    const double numeric = (8.0 * (f1 - f2) - (f3 - f4)) / (12.0 * h);
    const double rel =
        std::abs(numeric - analytic[i]) /
        std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

std::vector<GradCheckResult> grad_check_ops(std::size_t seeds) {
  std::vector<GradCheckResult> results;
  auto run = [&](const std::string& name,
                 const std::function<double(std::uint64_t)>& one_seed) {
    GradCheckResult r;
    r.name = name;
    for (std::uint64_t s = 0; s < seeds; ++s) {
      r.max_rel_err = std::max(r.max_rel_err, one_seed(s));
    }
    results.push_back(r);
  };

  run("matmul", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.matmul"));
    TensorPtr a = random_leaf(rng, {3, 4});
    TensorPtr b = random_leaf(rng, {4, 2});
    return check_params(
        {a, b}, [&] { return ops::sum_all(ops::matmul(a, b)); });
  });
  run("softmax", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.softmax"));
    TensorPtr x = random_leaf(rng, {2, 5});
    TensorPtr wts = fixed_weights(seed, "gc.softmax.w", {2, 5});
    return check_params(
        {x}, [&] { return weighted_sum(ops::softmax(x, -1), wts); });
  });
  run("layer_norm", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.layer_norm"));
    TensorPtr x = random_leaf(rng, {2, 8});
    TensorPtr g = random_leaf(rng, {8});
    TensorPtr b = random_leaf(rng, {8});
    TensorPtr wts = fixed_weights(seed, "gc.layer_norm.w", {2, 8});
    return check_params({x, g, b}, [&] {
      return weighted_sum(ops::layer_norm(x, g, b), wts);
    });
  });
  run("l2_normalize", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.l2"));
    TensorPtr x = random_leaf(rng, {3, 6});
    TensorPtr wts = fixed_weights(seed, "gc.l2.w", {3, 6});
    return check_params(
        {x}, [&] { return weighted_sum(ops::l2_normalize(x), wts); });
  });
  run("cross_entropy_from_logits", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.ce"));
    TensorPtr x = random_leaf(rng, {4, 5});
    const std::vector<std::size_t> targets{0, 3, 2, 4};
    return check_params(
        {x}, [&] { return ops::cross_entropy_from_logits(x, targets); });
  });
  run("kl_divergence", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.kl"));
    TensorPtr x = random_leaf(rng, {3, 4});
    TensorPtr y = random_leaf(rng, {3, 4});
    return check_params({x, y}, [&] {
      return ops::kl_divergence(ops::softmax(x, -1), ops::softmax(y, -1));
    });
  });
  run("linear", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.linear"));
    TensorPtr x = random_leaf(rng, {3, 4});
    TensorPtr w = random_leaf(rng, {4, 2});
    TensorPtr b = random_leaf(rng, {2});
    TensorPtr wts = fixed_weights(seed, "gc.linear.w", {3, 2});
    return check_params({x, w, b}, [&] {
      return weighted_sum(ops::linear(x, w, b), wts);
    });
  });
  run("concat", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.concat"));
    TensorPtr a = random_leaf(rng, {2, 3});
    TensorPtr b = random_leaf(rng, {2, 2});
    TensorPtr c = random_leaf(rng, {3, 5});
    TensorPtr wts = fixed_weights(seed, "gc.concat.w", {5, 5});
    return check_params({a, b, c}, [&] {
      return weighted_sum(
          ops::concat_rows({ops::concat_cols({a, b}), c}), wts);
    });
  });
  run("embedding_lookup", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.embed"));
    TensorPtr table = random_leaf(rng, {5, 4});
    const std::vector<std::size_t> idx{1, 3, 1, 0};
    TensorPtr wts = fixed_weights(seed, "gc.embed.w", {4, 4});
    return check_params({table}, [&] {
      return weighted_sum(ops::embedding_lookup(table, idx), wts);
    });
  });
  run("elementwise", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.elem"));
    TensorPtr a = random_leaf(rng, {3, 4});
    TensorPtr b = random_leaf(rng, {3, 4});
    TensorPtr v = random_leaf(rng, {4});
    TensorPtr s = random_leaf(rng, {1});
    TensorPtr wts = fixed_weights(seed, "gc.elem.w", {3, 4});
    return check_params({a, b, v, s}, [&] {
      TensorPtr t = ops::mul(ops::add(a, b), v);
      return weighted_sum(ops::scale_by(ops::scale(t, 0.7), s), wts);
    });
  });
  run("gelu", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.gelu"));
    TensorPtr x = random_leaf(rng, {2, 6});
    TensorPtr wts = fixed_weights(seed, "gc.gelu.w", {2, 6});
    return check_params({x},
                        [&] { return weighted_sum(ops::gelu(x), wts); });
  });
  run("log_exp", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.logexp"));
    TensorPtr x = random_leaf(rng, {2, 4});
    TensorPtr wts = fixed_weights(seed, "gc.logexp.w", {2, 4});
    TensorPtr shift = Tensor::from_values({2, 4},
                                          std::vector<double>(8, 0.5),
                                          Dtype::F64);
    return check_params({x}, [&]() -> TensorPtr {
      return weighted_sum(
          ops::log(ops::add(ops::gelu(ops::exp(x)), shift)), wts);
    });
  });
  run("transpose_reshape", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.tr"));
    TensorPtr x = random_leaf(rng, {3, 4});
    TensorPtr wts = fixed_weights(seed, "gc.tr.w", {2, 6});
    return check_params({x}, [&] {
      return weighted_sum(ops::reshape(ops::transpose(x), {2, 6}), wts);
    });
  });
  run("reductions", [](std::uint64_t seed) {
    CounterRng rng(CounterRng::derive(seed, "gc.red"));
    TensorPtr x = random_leaf(rng, {3, 4});
    return check_params({x}, [&] {
      return ops::add(ops::mean_all(ops::mul(x, x)), ops::sum_all(x));
    });
  });
  return results;
}

std::vector<GradCheckResult> grad_check_model(std::uint64_t seed) {
  SyntheticWorldConfig wc;
  wc.n_attrs = 3;
  wc.n_objs = 3;
  wc.feat_dim = 16;
  wc.raw_dim = 24;
  wc.samples_per_comp = 5;
  wc.noise_sigma = 0.2;
  wc.gap = 1.0;
  wc.unseen_frac = 0.25;
  wc.seed = seed;
  const World world = generate_world(wc);

  ModelConfig mc;
  mc.feat_dim = 16;
  mc.tok_dim = 16;
  mc.raw_dim = 24;
  mc.heads = 4;
  mc.dtype = Dtype::F64;
  mc.seed = seed;
  // The check needs the fully differentiable loss: a detached KL target is
  // a deliberate hole between the value and its gradient.
  mc.kl_detach_target = false;
  Model model(world.space, mc);

  const std::size_t batch = 2;
  std::vector<Pair> labels;
  std::vector<double> raw_rows;
  for (std::size_t b = 0; b < batch; ++b) {
    const SampleRecord& rec = world.train.records[b];
    labels.emplace_back(rec.attr, rec.obj);
    const double* row = world.train.features->values().data() +
                        rec.row * wc.raw_dim;
    raw_rows.insert(raw_rows.end(), row, row + wc.raw_dim);
  }
  TensorPtr raw = Tensor::from_values({batch, wc.raw_dim}, raw_rows,
                                      Dtype::F64);
  TensorPtr features = model.encode_images(raw);

  auto loss_value = [&] {
    return model.total_loss(features, labels).first->item();
  };
  model.zero_grads();
  backward(model.total_loss(features, labels).first);

  std::vector<GradCheckResult> results;
  for (const auto& [name, param] : model.trainable_parameters()) {
    GradCheckResult r;
    r.name = name;
    r.max_rel_err = finite_difference_error(param, loss_value);
    results.push_back(r);
  }
  return results;
}

}  // namespace czp
