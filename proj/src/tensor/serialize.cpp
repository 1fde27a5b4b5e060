#include "gain/serialize.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "gain/error.hpp"

namespace gain {

namespace le {

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& os, double v) {
  write_u64(os, std::bit_cast<std::uint64_t>(v));
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw ValidationError("unexpected end of tensor stream");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

}  // namespace le

void write_tensor(std::ostream& os, const Tensor& t) {
  le::write_u64(os, t.rank());
  for (auto d : t.shape()) le::write_u64(os, static_cast<std::uint64_t>(d));
  for (double v : t.data()) le::write_f64(os, v);
}

Tensor read_tensor(std::istream& is) {
  const auto rank = le::read_u64(is);
  if (rank == 0 || rank > 16) {
    throw ValidationError("tensor stream has invalid rank " + std::to_string(rank));
  }
  Shape shape(rank);
  for (auto& d : shape) {
    d = static_cast<std::int64_t>(le::read_u64(is));
    if (d <= 0 || d > (std::int64_t{1} << 40)) {
      throw ValidationError("tensor stream has invalid dimension");
    }
  }
  std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = le::read_f64(is);
  return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path.string());
  return read_tensor(is);
}

std::uint64_t serialized_size(const Shape& shape) {
  return 8 * (1 + shape.size()) + 8 * static_cast<std::uint64_t>(shape_numel(shape));
}

void write_tensor_csv(std::ostream& os, const Tensor& t) {
  os << "# shape: ";
  for (std::size_t i = 0; i < t.rank(); ++i) os << (i ? "x" : "") << t.dim(i);
  os << '\n';
  const auto cols = t.dim(t.rank() - 1);
  const auto v = t.data();
  char buf[32];
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    os << buf << ((i + 1) % cols == 0 ? '\n' : ',');
  }
}

}  // namespace gain
