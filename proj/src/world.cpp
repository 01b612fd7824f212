#include "czproxy/world.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "czproxy/rng.hpp"

namespace czp {

namespace {

// Latent dimensionality per primitive; kept well below raw_dim so the gap
// direction has an orthogonal complement to live in.
std::size_t latent_half(std::size_t raw_dim) {
  return std::max<std::size_t>(1, std::min<std::size_t>(8, raw_dim / 4));
}

// Gram-Schmidt over the columns of the latent->raw map.
std::vector<std::vector<double>> orthonormalize(
    const std::vector<std::vector<double>>& vectors) {
  std::vector<std::vector<double>> basis;
  for (const auto& v : vectors) {
    std::vector<double> w = v;
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) dot += w[k] * b[k];
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= dot * b[k];
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 1e-10) {
      for (double& x : w) x /= norm;
      basis.push_back(std::move(w));
    }
  }
  return basis;
}

std::vector<Pair> choose_unseen(const SyntheticWorldConfig& cfg,
                                std::size_t target) {
  const std::size_t na = cfg.n_attrs, no = cfg.n_objs;
  std::vector<Pair> all;
  all.reserve(na * no);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < no; ++j) all.emplace_back(i, j);
  }
  CounterRng rng(CounterRng::derive(cfg.seed, "unseen_pairs"));
  rng.shuffle(all);

  // Greedy removal that keeps every primitive covered by a seen pair.
  std::vector<std::size_t> attr_seen(na, no), obj_seen(no, na);
  std::vector<Pair> unseen;
  for (const Pair& p : all) {
    if (unseen.size() == target) break;
    if (attr_seen[p.first] > 1 && obj_seen[p.second] > 1) {
      --attr_seen[p.first];
      --obj_seen[p.second];
      unseen.push_back(p);
    }
  }
  if (unseen.size() < target) {
    throw InfeasibleSplitError(
        "generate_world: unseen fraction would leave a primitive with no "
        "seen composition");
  }
  std::sort(unseen.begin(), unseen.end());
  return unseen;
}

}  // namespace

void SyntheticWorldConfig::validate() const {
  if (n_attrs * n_objs < 4) {
    throw ConfigError("world config: |A|*|O| must be at least 4");
  }
  if (!(unseen_frac > 0.0 && unseen_frac < 1.0)) {
    throw ConfigError("world config: unseen fraction must lie in (0,1)");
  }
  if (noise_sigma < 0.0) throw ConfigError("world config: sigma must be >= 0");
  if (gap < 0.0) throw ConfigError("world config: gap must be >= 0");
  if (samples_per_comp == 0) {
    throw ConfigError("world config: samples per composition must be >= 1");
  }
  if (feat_dim == 0 || raw_dim == 0) {
    throw ConfigError("world config: dimensions must be positive");
  }
  if (raw_dim < 2 * latent_half(raw_dim) + 1) {
    throw ConfigError("world config: raw_dim too small for the latent map");
  }
}

World generate_world(const SyntheticWorldConfig& cfg) {
  cfg.validate();
  const std::size_t na = cfg.n_attrs, no = cfg.n_objs;
  const std::size_t lh = latent_half(cfg.raw_dim);
  const std::size_t latent = 2 * lh;

  World world;
  world.config = cfg;
  for (std::size_t i = 0; i < na; ++i) {
    world.space.attributes.push_back("a" + std::to_string(i));
  }
  for (std::size_t j = 0; j < no; ++j) {
    world.space.objects.push_back("o" + std::to_string(j));
  }

  const std::size_t n_unseen = static_cast<std::size_t>(
      std::llround(cfg.unseen_frac * static_cast<double>(na * no)));
  world.space.unseen_pairs = choose_unseen(cfg, n_unseen);
  std::set<Pair> unseen_set(world.space.unseen_pairs.begin(),
                            world.space.unseen_pairs.end());
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < no; ++j) {
      if (!unseen_set.count({i, j})) world.space.seen_pairs.emplace_back(i, j);
    }
  }
  world.space.validate();

  // Latent structure.
  CounterRng attr_rng(CounterRng::derive(cfg.seed, "attr_latents"));
  CounterRng obj_rng(CounterRng::derive(cfg.seed, "obj_latents"));
  std::vector<double> attr_lat = attr_rng.gaussians(na * lh);
  std::vector<double> obj_lat = obj_rng.gaussians(no * lh);

  CounterRng map_rng(CounterRng::derive(cfg.seed, "raw_map"));
  const double map_std = 1.0 / std::sqrt(static_cast<double>(latent));
  std::vector<double> raw_map =
      map_rng.gaussians(cfg.raw_dim * latent, map_std);  // raw_dim x latent

  std::vector<std::vector<double>> columns(latent,
                                           std::vector<double>(cfg.raw_dim));
  for (std::size_t c = 0; c < latent; ++c) {
    for (std::size_t r = 0; r < cfg.raw_dim; ++r) {
      columns[c][r] = raw_map[r * latent + c];
    }
  }
  world.text_basis = orthonormalize(columns);

  // Gap direction: unit vector orthogonal to the text-reachable subspace.
  CounterRng gap_rng(CounterRng::derive(cfg.seed, "gap_dir"));
  std::vector<double> ghat = gap_rng.gaussians(cfg.raw_dim);
  for (const auto& b : world.text_basis) {
    double dot = 0.0;
    for (std::size_t k = 0; k < cfg.raw_dim; ++k) dot += ghat[k] * b[k];
    for (std::size_t k = 0; k < cfg.raw_dim; ++k) ghat[k] -= dot * b[k];
  }
  double gnorm = 0.0;
  for (double v : ghat) gnorm += v * v;
  gnorm = std::sqrt(gnorm);
  if (gnorm < 1e-10) {
    throw DegenerateInputError("generate_world: degenerate gap direction");
  }
  for (double& v : ghat) v /= gnorm;

  // Per-pair raw-space means.
  const std::size_t n_pairs = na * no;
  std::vector<double> means(n_pairs * cfg.raw_dim, 0.0);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < no; ++j) {
      double* mean = means.data() + (i * no + j) * cfg.raw_dim;
      for (std::size_t r = 0; r < cfg.raw_dim; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < lh; ++k) {
          acc += raw_map[r * latent + k] * attr_lat[i * lh + k];
          acc += raw_map[r * latent + lh + k] * obj_lat[j * lh + k];
        }
        mean[r] = acc + cfg.gap * ghat[r];
      }
    }
  }

  // Samples, split deterministically per pair.
  CounterRng noise_rng(CounterRng::derive(cfg.seed, "noise"));
  std::vector<double> train_rows, val_rows, test_rows;
  std::vector<SampleRecord> train_rec, val_rec, test_rec;
  const std::size_t spc = cfg.samples_per_comp;
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < no; ++j) {
      const bool seen = !unseen_set.count({i, j});
      const double* mean = means.data() + (i * no + j) * cfg.raw_dim;
      // Seen pairs split 60/20/20 (train takes the rounding remainder);
      // unseen pairs split evenly between val and test.
      const std::size_t n_val = seen ? (spc * 2) / 10 : (spc + 1) / 2;
      const std::size_t n_test_seen = (spc * 2) / 10;
      const std::size_t n_train = seen ? spc - n_val - n_test_seen : 0;
      for (std::size_t s = 0; s < spc; ++s) {
        std::vector<double> x(cfg.raw_dim);
        for (std::size_t r = 0; r < cfg.raw_dim; ++r) {
          x[r] = mean[r] + cfg.noise_sigma * noise_rng.next_gaussian();
        }
        auto push = [&](std::vector<double>& rows,
                        std::vector<SampleRecord>& recs) {
          recs.push_back({rows.size() / cfg.raw_dim, i, j});
          rows.insert(rows.end(), x.begin(), x.end());
        };
        if (s < n_train) {
          push(train_rows, train_rec);
        } else if (s < n_train + n_val) {
          push(val_rows, val_rec);
        } else {
          push(test_rows, test_rec);
        }
      }
    }
  }

  auto pack = [&](std::vector<double>&& rows, std::vector<SampleRecord>&& recs) {
    SplitData split;
    split.records = std::move(recs);
    if (split.records.empty()) {
      throw ContractError("generate_world: a split ended up empty");
    }
    split.features = Tensor::from_values(
        {split.records.size(), cfg.raw_dim}, std::move(rows), Dtype::F64);
    return split;
  };
  world.train = pack(std::move(train_rows), std::move(train_rec));
  world.val = pack(std::move(val_rows), std::move(val_rec));
  world.test = pack(std::move(test_rows), std::move(test_rec));
  return world;
}

std::vector<std::pair<bool, std::vector<double>>> class_centers(
    const SplitData& split, const CompositionSpace& space) {
  const std::size_t n_pairs = space.n_attrs() * space.n_objs();
  const std::size_t dim = split.features->cols();
  std::vector<std::pair<bool, std::vector<double>>> centers(
      n_pairs, {false, std::vector<double>(dim, 0.0)});
  std::vector<std::size_t> counts(n_pairs, 0);
  for (const SampleRecord& rec : split.records) {
    const std::size_t flat = rec.attr * space.n_objs() + rec.obj;
    ++counts[flat];
    const double* row = split.features->values().data() + rec.row * dim;
    for (std::size_t k = 0; k < dim; ++k) centers[flat].second[k] += row[k];
  }
  for (std::size_t p = 0; p < n_pairs; ++p) {
    if (counts[p] == 0) continue;
    centers[p].first = true;
    for (double& v : centers[p].second) v /= static_cast<double>(counts[p]);
  }
  return centers;
}

}  // namespace czp
