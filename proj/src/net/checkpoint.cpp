#include <array>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include "gain/error.hpp"
#include "gain/gain_net.hpp"
#include "gain/serialize.hpp"

namespace gain {

namespace {

constexpr std::array<char, 8> kMagic{'G', 'A', 'I', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint64_t kVersion = 1;

}  // namespace

// Layout: magic[8], u64 version, u64 count, then per entry
// {u64 name_len, name bytes, u64 offset, u64 size}, then tensor records at
// their absolute offsets.
void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::set<std::string> names;
  std::uint64_t header = kMagic.size() + 16;
  for (auto& [name, t] : tensors) {
    if (!names.insert(name).second) throw ValidationError("duplicate checkpoint entry '" + name + "'");
    header += 8 + name.size() + 16;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(kMagic.data(), kMagic.size());
  le::write_u64(f, kVersion);
  le::write_u64(f, tensors.size());
  std::uint64_t offset = header;
  for (auto& [name, t] : tensors) {
    const auto size = serialized_size(t.shape());
    le::write_u64(f, name.size());
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    le::write_u64(f, offset);
    le::write_u64(f, size);
    offset += size;
  }
  for (auto& [name, t] : tensors) write_tensor(f, t);
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  f.read(magic.data(), magic.size());
  if (!f || magic != kMagic) throw ValidationError(path.string() + " is not a checkpoint file");
  const auto version = le::read_u64(f);
  if (version != kVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = le::read_u64(f);
  struct Entry {
    std::string name;
    std::uint64_t offset, size;
  };
  std::vector<Entry> entries;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = le::read_u64(f);
    if (len > 4096) throw ValidationError("corrupt checkpoint manifest");
    std::string name(len, '\0');
    f.read(name.data(), static_cast<std::streamsize>(len));
    const auto offset = le::read_u64(f);
    const auto size = le::read_u64(f);
    if (!f) throw ValidationError("truncated checkpoint manifest");
    entries.push_back({std::move(name), offset, size});
  }
  NamedTensors out;
  for (auto& e : entries) {
    f.seekg(static_cast<std::streamoff>(e.offset));
    auto t = read_tensor(f);
    if (!f || serialized_size(t.shape()) != e.size) {
      throw ValidationError("checkpoint entry '" + e.name + "' is corrupt");
    }
    out.emplace_back(e.name, std::move(t));
  }
  return out;
}

}  // namespace gain
