#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "czproxy/errors.hpp"

namespace czp {

using Pair = std::pair<std::size_t, std::size_t>;  // (attribute, object)

enum class WorldMode { Closed, Open };

// The label universe: attribute and object name lists plus the disjoint
// seen/unseen pair sets. A pair (i, j) has flat index i * |objects| + j.
struct CompositionSpace {
  std::vector<std::string> attributes;
  std::vector<std::string> objects;
  std::vector<Pair> seen_pairs;
  std::vector<Pair> unseen_pairs;

  std::size_t n_attrs() const { return attributes.size(); }
  std::size_t n_objs() const { return objects.size(); }
  std::size_t flat_index(const Pair& p) const {
    return p.first * n_objs() + p.second;
  }

  bool is_seen(const Pair& p) const;
  // Position of `p` within seen_pairs, or npos.
  std::size_t seen_position(const Pair& p) const;

  // Throws ContractError on overlapping/out-of-range/empty-seen manifests.
  void validate() const;
};

// Closed: seen pairs then unseen pairs, each in manifest order.
// Open: the full product in attribute-major order.
std::vector<Pair> build_prediction_space(const CompositionSpace& space,
                                         WorldMode mode);

}  // namespace czp
