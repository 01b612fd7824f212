#pragma once

#include <cstdint>
#include <vector>

#include "czproxy/space.hpp"
#include "czproxy/tensor.hpp"

namespace czp {

// Synthetic compositional benchmark with a controllable modality gap.
// Every composition (a_i, o_j) gets a latent mean concat(u_i, u_j) pushed
// through a fixed linear map into raw feature space plus a gap offset g*ghat,
// where ghat is orthogonal to the text-reachable subspace (the map's column
// span). Samples add isotropic Gaussian noise.
struct SyntheticWorldConfig {
  std::size_t n_attrs = 8;
  std::size_t n_objs = 8;
  std::size_t feat_dim = 64;   // d, echoed for model construction
  std::size_t raw_dim = 96;
  std::size_t samples_per_comp = 20;
  double noise_sigma = 0.3;
  double gap = 2.0;
  double unseen_frac = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SampleRecord {
  std::size_t row;   // row in the split's feature matrix
  std::size_t attr;
  std::size_t obj;
};

struct SplitData {
  TensorPtr features;                 // {rows, raw_dim}, f64, no tape
  std::vector<SampleRecord> records;  // one per row
};

struct World {
  SyntheticWorldConfig config;
  CompositionSpace space;
  SplitData train, val, test;
  // Orthonormal rows spanning the text-reachable subspace in raw coordinates.
  // Populated by the generator (re-derivable from the seed); not persisted.
  std::vector<std::vector<double>> text_basis;
};

// |C_u| = round(unseen_frac * |A| * |O|); every attribute and object keeps at
// least one seen composition or an InfeasibleSplitError is thrown. Seen-pair
// samples split 60/20/20 across train/val/test; unseen-pair samples split
// evenly between val and test.
World generate_world(const SyntheticWorldConfig& cfg);

// Per-composition raw-space class centers of a split (sample means), for the
// gap decomposition diagnostic. Returned in flat pair order; pairs without
// samples in the split are absent (flagged by the bool).
std::vector<std::pair<bool, std::vector<double>>> class_centers(
    const SplitData& split, const CompositionSpace& space);

}  // namespace czp
