#include "czproxy/dataio.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "czproxy/vptf.hpp"

namespace czp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kCkptMagic[4] = {'C', 'Z', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;
constexpr int kWorldFormatVersion = 1;

json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw FormatError("write failed for " + path);
}

json config_to_json(const SyntheticWorldConfig& cfg) {
  return json{{"n_attrs", cfg.n_attrs},
              {"n_objs", cfg.n_objs},
              {"feat_dim", cfg.feat_dim},
              {"raw_dim", cfg.raw_dim},
              {"samples_per_comp", cfg.samples_per_comp},
              {"noise_sigma", cfg.noise_sigma},
              {"gap", cfg.gap},
              {"unseen_frac", cfg.unseen_frac},
              {"seed", cfg.seed}};
}

SyntheticWorldConfig config_from_json(const json& j) {
  SyntheticWorldConfig cfg;
  cfg.n_attrs = j.value("n_attrs", cfg.n_attrs);
  cfg.n_objs = j.value("n_objs", cfg.n_objs);
  cfg.feat_dim = j.value("feat_dim", cfg.feat_dim);
  cfg.raw_dim = j.value("raw_dim", cfg.raw_dim);
  cfg.samples_per_comp = j.value("samples_per_comp", cfg.samples_per_comp);
  cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
  cfg.gap = j.value("gap", cfg.gap);
  cfg.unseen_frac = j.value("unseen_frac", cfg.unseen_frac);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

json pairs_to_json(const std::vector<Pair>& pairs) {
  json arr = json::array();
  for (const Pair& p : pairs) arr.push_back({p.first, p.second});
  return arr;
}

std::vector<Pair> pairs_from_json(const json& arr, const char* what) {
  if (!arr.is_array()) throw FormatError(std::string(what) + ": not an array");
  std::vector<Pair> out;
  for (const auto& e : arr) {
    if (!e.is_array() || e.size() != 2) {
      throw FormatError(std::string(what) + ": malformed pair");
    }
    out.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
  }
  return out;
}

void save_split(const SplitData& split, const std::string& dir,
                const std::string& name) {
  write_vptf_file(dir + "/" + name + ".vptf", *split.features);
  json labels;
  labels["format_version"] = kWorldFormatVersion;
  json attrs = json::array(), objs = json::array();
  for (const SampleRecord& r : split.records) {
    attrs.push_back(r.attr);
    objs.push_back(r.obj);
  }
  labels["attribute_index"] = attrs;
  labels["object_index"] = objs;
  write_text_file(dir + "/" + name + ".labels.json", labels.dump(2) + "\n");
}

SplitData load_split(const std::string& dir, const std::string& name,
                     const CompositionSpace& space, bool train_split) {
  SplitData split;
  split.features = read_vptf_file(dir + "/" + name + ".vptf");
  if (split.features->rank() != 2) {
    throw FormatError(name + ".vptf: expected a rank-2 feature matrix");
  }
  const json labels = load_json_file(dir + "/" + name + ".labels.json");
  const auto& attrs = labels.at("attribute_index");
  const auto& objs = labels.at("object_index");
  if (!attrs.is_array() || !objs.is_array() || attrs.size() != objs.size()) {
    throw FormatError(name + ".labels.json: malformed label arrays");
  }
  if (attrs.size() != split.features->rows()) {
    throw FormatError(name + ": label count does not match feature rows");
  }
  for (std::size_t r = 0; r < attrs.size(); ++r) {
    SampleRecord rec{r, attrs[r].get<std::size_t>(),
                     objs[r].get<std::size_t>()};
    if (rec.attr >= space.n_attrs() || rec.obj >= space.n_objs()) {
      throw FormatError(name + ": label index out of range at row " +
                        std::to_string(r));
    }
    if (train_split && !space.is_seen({rec.attr, rec.obj})) {
      throw ContractError(name + ": training record labeled with unseen pair");
    }
    split.records.push_back(rec);
  }
  return split;
}

template <typename T>
void write_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError(std::string("checkpoint: truncated ") + what);
  return v;
}

}  // namespace

void save_world(const World& world, const std::string& dir) {
  fs::create_directories(dir);
  json space;
  space["format_version"] = kWorldFormatVersion;
  space["attributes"] = world.space.attributes;
  space["objects"] = world.space.objects;
  space["seen_pairs"] = pairs_to_json(world.space.seen_pairs);
  space["unseen_pairs"] = pairs_to_json(world.space.unseen_pairs);
  space["config"] = config_to_json(world.config);
  write_text_file(dir + "/space.json", space.dump(2) + "\n");
  save_split(world.train, dir, "train");
  save_split(world.val, dir, "val");
  save_split(world.test, dir, "test");
}

World load_world(const std::string& dir) {
  const json space_j = load_json_file(dir + "/space.json");
  const int version = space_j.value("format_version", -1);
  if (version != kWorldFormatVersion) {
    throw FormatError("space.json: unsupported format_version");
  }
  World world;
  world.space.attributes =
      space_j.at("attributes").get<std::vector<std::string>>();
  world.space.objects = space_j.at("objects").get<std::vector<std::string>>();
  world.space.seen_pairs = pairs_from_json(space_j.at("seen_pairs"),
                                           "seen_pairs");
  world.space.unseen_pairs =
      pairs_from_json(space_j.at("unseen_pairs"), "unseen_pairs");
  world.space.validate();
  if (space_j.contains("config")) {
    world.config = config_from_json(space_j["config"]);
  }
  world.train = load_split(dir, "train", world.space, true);
  world.val = load_split(dir, "val", world.space, false);
  world.test = load_split(dir, "test", world.space, false);
  const std::size_t raw = world.train.features->cols();
  if (world.val.features->cols() != raw ||
      world.test.features->cols() != raw) {
    throw FormatError("world: split feature dimensions disagree");
  }
  return world;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const TensorPtr& Checkpoint::block(const std::string& name) const {
  for (const auto& [n, t] : blocks) {
    if (n == name) return t;
  }
  throw FormatError("checkpoint: missing block " + name);
}

bool Checkpoint::has_block(const std::string& name) const {
  for (const auto& [n, t] : blocks) {
    if (n == name) return true;
  }
  return false;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json header;
  header["format_version"] = ckpt.format_version;
  header["epoch"] = ckpt.epoch;
  header["seed"] = ckpt.seed;
  header["opt_step"] = ckpt.opt_step;
  header["best_val_auc"] = ckpt.best_val_auc;
  header["best_epoch"] = ckpt.best_epoch;
  header["config"] = ckpt.config;
  const std::string header_text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("checkpoint: cannot open " + path);
  os.write(kCkptMagic, 4);
  write_raw<std::uint32_t>(os, kCkptVersion);
  write_raw<std::uint64_t>(os, header_text.size());
  os.write(header_text.data(),
           static_cast<std::streamsize>(header_text.size()));
  write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& [name, tensor] : ckpt.blocks) {
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_vptf(os, *tensor);
  }
  if (!os) throw FormatError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCkptMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  const auto version = read_raw<std::uint32_t>(is, "version");
  if (version != kCkptVersion) {
    throw FormatError("checkpoint: unsupported version");
  }
  const auto header_len = read_raw<std::uint64_t>(is, "header length");
  std::string header_text(header_len, '\0');
  is.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw FormatError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.format_version = header.value("format_version", -1);
  if (ckpt.format_version != 1) {
    throw FormatError("checkpoint: unsupported format_version");
  }
  ckpt.epoch = header.value("epoch", std::size_t{0});
  ckpt.seed = header.value("seed", std::uint64_t{0});
  ckpt.opt_step = header.value("opt_step", std::size_t{0});
  ckpt.best_val_auc = header.value("best_val_auc", -1.0);
  ckpt.best_epoch = header.value("best_epoch", std::size_t{0});
  if (header.contains("config")) {
    ckpt.config =
        header["config"].get<std::map<std::string, std::string>>();
  }
  const auto n_blocks = read_raw<std::uint32_t>(is, "block count");
  for (std::uint32_t b = 0; b < n_blocks; ++b) {
    const auto name_len = read_raw<std::uint32_t>(is, "block name length");
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!is) throw FormatError("checkpoint: truncated block name");
    ckpt.blocks.emplace_back(std::move(name), read_vptf(is));
  }
  return ckpt;
}

}  // namespace czp
