#include "czproxy/space.hpp"

#include <algorithm>
#include <set>

namespace czp {

bool CompositionSpace::is_seen(const Pair& p) const {
  return std::find(seen_pairs.begin(), seen_pairs.end(), p) !=
         seen_pairs.end();
}

std::size_t CompositionSpace::seen_position(const Pair& p) const {
  const auto it = std::find(seen_pairs.begin(), seen_pairs.end(), p);
  if (it == seen_pairs.end()) return static_cast<std::size_t>(-1);
  return static_cast<std::size_t>(it - seen_pairs.begin());
}

void CompositionSpace::validate() const {
  if (attributes.empty() || objects.empty()) {
    throw ContractError("space: attribute/object lists must be nonempty");
  }
  if (seen_pairs.empty()) {
    throw ContractError("space: seen pair list must be nonempty");
  }
  std::set<Pair> seen_set;
  for (const Pair& p : seen_pairs) {
    if (p.first >= n_attrs() || p.second >= n_objs()) {
      throw ContractError("space: seen pair index out of range");
    }
    if (!seen_set.insert(p).second) {
      throw ContractError("space: duplicate seen pair");
    }
  }
  std::set<Pair> unseen_set;
  for (const Pair& p : unseen_pairs) {
    if (p.first >= n_attrs() || p.second >= n_objs()) {
      throw ContractError("space: unseen pair index out of range");
    }
    if (!unseen_set.insert(p).second) {
      throw ContractError("space: duplicate unseen pair");
    }
    if (seen_set.count(p)) {
      throw ContractError("space: seen and unseen pair sets overlap");
    }
  }
}

std::vector<Pair> build_prediction_space(const CompositionSpace& space,
                                         WorldMode mode) {
  std::vector<Pair> out;
  if (mode == WorldMode::Closed) {
    out.reserve(space.seen_pairs.size() + space.unseen_pairs.size());
    out.insert(out.end(), space.seen_pairs.begin(), space.seen_pairs.end());
    out.insert(out.end(), space.unseen_pairs.begin(),
               space.unseen_pairs.end());
  } else {
    out.reserve(space.n_attrs() * space.n_objs());
    for (std::size_t i = 0; i < space.n_attrs(); ++i) {
      for (std::size_t j = 0; j < space.n_objs(); ++j) out.emplace_back(i, j);
    }
  }
  return out;
}

}  // namespace czp
