#include "czproxy/vptf.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace czp {

namespace {

static_assert(std::endian::native == std::endian::little,
              "VPTF I/O assumes a little-endian host");

constexpr char kMagic[4] = {'V', 'P', 'T', 'F'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError(std::string("VPTF: truncated ") + what);
  return v;
}

}  // namespace

void write_vptf(std::ostream& os, const Tensor& t) {
  os.write(kMagic, 4);
  write_raw<std::uint32_t>(os, kVersion);
  write_raw<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype()));
  write_raw<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
  for (std::size_t e : t.shape()) {
    write_raw<std::uint64_t>(os, static_cast<std::uint64_t>(e));
  }
  if (t.dtype() == Dtype::F32) {
    for (double v : t.values()) write_raw<float>(os, static_cast<float>(v));
  } else {
    for (double v : t.values()) write_raw<double>(os, v);
  }
  if (!os) throw FormatError("VPTF: write failed");
}

void write_vptf_file(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("VPTF: cannot open " + path + " for writing");
  write_vptf(os, t);
}

TensorPtr read_vptf(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("VPTF: bad magic");
  }
  const auto version = read_raw<std::uint32_t>(is, "version");
  if (version != kVersion) {
    throw FormatError("VPTF: unsupported version " + std::to_string(version));
  }
  const auto dtype_code = read_raw<std::uint8_t>(is, "dtype");
  if (dtype_code > 1) throw FormatError("VPTF: unknown dtype code");
  const auto rank = read_raw<std::uint8_t>(is, "rank");
  std::vector<std::size_t> shape(rank);
  std::size_t numel = 1;
  for (auto& e : shape) {
    e = static_cast<std::size_t>(read_raw<std::uint64_t>(is, "extent"));
    if (e == 0) throw FormatError("VPTF: zero extent");
    numel *= e;
  }
  std::vector<double> values(numel);
  if (dtype_code == 0) {
    for (auto& v : values) v = read_raw<float>(is, "payload");
  } else {
    for (auto& v : values) v = read_raw<double>(is, "payload");
  }
  return Tensor::from_values(std::move(shape), std::move(values),
                             static_cast<Dtype>(dtype_code));
}

TensorPtr read_vptf_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("VPTF: cannot open " + path);
  return read_vptf(is);
}

}  // namespace czp
