#include "thn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace thn {

namespace {

constexpr char kMagic[4] = {'T', 'H', 'N', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("checkpoint: truncated file");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

void put_record(std::ostream& os, const std::string& name, const Tensor& t) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  const Shape s = t.shape();
  put_u32(os, 4);
  put_u32(os, static_cast<std::uint32_t>(s.n));
  put_u32(os, static_cast<std::uint32_t>(s.c));
  put_u32(os, static_cast<std::uint32_t>(s.h));
  put_u32(os, static_cast<std::uint32_t>(s.w));
  for (std::int64_t i = 0; i < t.size(); ++i) put_f64(os, t[i]);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open for write: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_record(os, "__meta.epoch", Tensor::scalar(static_cast<double>(ckpt.epoch)));
  put_record(os, "__meta.config_hash", Tensor::scalar(static_cast<double>(ckpt.config_hash)));
  for (const auto& [name, t] : ckpt.params) put_record(os, name, t);
  for (const auto& [name, t] : ckpt.momentum) put_record(os, "__momentum." + name, t);
  if (!os) throw IoError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  const std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  while (true) {
    is.peek();
    if (is.eof()) break;
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw IoError("checkpoint: truncated name");
    const std::uint32_t rank = get_u32(is);
    if (rank != 4) throw IoError("checkpoint: unsupported rank " + std::to_string(rank));
    Shape s;
    s.n = static_cast<int>(get_u32(is));
    s.c = static_cast<int>(get_u32(is));
    s.h = static_cast<int>(get_u32(is));
    s.w = static_cast<int>(get_u32(is));
    Tensor t(s);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = get_f64(is);

    if (name == "__meta.epoch")
      ckpt.epoch = static_cast<int>(t.item());
    else if (name == "__meta.config_hash")
      ckpt.config_hash = static_cast<std::uint32_t>(t.item());
    else if (name.rfind("__momentum.", 0) == 0)
      ckpt.momentum.insert(name.substr(11), std::move(t));
    else
      ckpt.params.insert(name, std::move(t));
  }
  return ckpt;
}

}  // namespace thn
