#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "czproxy/tensor.hpp"
#include "czproxy/world.hpp"

namespace czp {

// World directory layout: space.json + {train,val,test}.vptf feature
// matrices + parallel {split}.labels.json with per-row attribute/object
// indices. Loading validates shapes, index ranges, and that no training
// record carries an unseen pair.
void save_world(const World& world, const std::string& dir);
World load_world(const std::string& dir);

// Single-file checkpoint: a JSON header (format version, epoch, seed,
// optimizer step, best-validation bookkeeping, config echo) followed by
// named VPTF blocks. Round-trips bit-exactly.
struct Checkpoint {
  int format_version = 1;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  std::size_t opt_step = 0;
  double best_val_auc = -1.0;
  std::size_t best_epoch = 0;
  std::map<std::string, std::string> config;  // flat key/value echo
  std::vector<std::pair<std::string, TensorPtr>> blocks;

  const TensorPtr& block(const std::string& name) const;
  bool has_block(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace czp
