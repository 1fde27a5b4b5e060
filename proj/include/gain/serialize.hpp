#pragma once

#include <filesystem>
#include <iosfwd>

#include "gain/tensor.hpp"

namespace gain {

// Binary layout, all little-endian:
//   u64 rank, u64 dims[rank], f64 data[prod(dims)]   (row-major)
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// Bytes write_tensor() emits for `shape`.
std::uint64_t serialized_size(const Shape& shape);

// CSV for small tensors: a "# shape: d0xd1x..." comment line, then one line per
// row of the last axis, values printed with 17 significant digits.
void write_tensor_csv(std::ostream& os, const Tensor& t);

namespace le {
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);
}  // namespace le

}  // namespace gain
