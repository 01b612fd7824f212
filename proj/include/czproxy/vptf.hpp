#pragma once

#include <iosfwd>
#include <string>

#include "czproxy/tensor.hpp"

namespace czp {

// "VPTF" binary tensor file: magic `VPTF`, version u32=1, dtype code u8
// (0 = f32, 1 = f64), rank u8, rank x u64 extents, payload row-major,
// everything little-endian. All tensor persistence in this repo uses it.

void write_vptf(std::ostream& os, const Tensor& t);
void write_vptf_file(const std::string& path, const Tensor& t);

TensorPtr read_vptf(std::istream& is);
TensorPtr read_vptf_file(const std::string& path);

}  // namespace czp
