#include "psan/checkpoint.hpp"

#include <cstdint>
#include <fstream>

#include "psan/errors.hpp"

namespace psan {

namespace {

constexpr char kMagic[8] = {'P', 'S', 'C', 'K', 'P', 'T', '0', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  if (n > (1u << 20)) throw FormatError("checkpoint: implausible string size");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw FormatError("checkpoint: truncated file");
  return s;
}

}  // namespace

const Eigen::MatrixXd* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : params)
    if (n == name) return &m;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("checkpoint: cannot open " + path.string() +
                             " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& [name, m] : ck.params) {
    write_string(os, name);
    write_u32(os, static_cast<std::uint32_t>(m.rows()));
    write_u32(os, static_cast<std::uint32_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
  write_u32(os, static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    write_string(os, k);
    write_string(os, v);
  }
  if (!os) throw FormatError("checkpoint: write to " + path.string() +
                             " failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open " + path.string());
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::string(magic, sizeof(magic)) != std::string(kMagic,
                                                              sizeof(kMagic)))
    throw FormatError("checkpoint: " + path.string() +
                      " is not a checkpoint file");
  Checkpoint ck;
  const std::uint32_t n = read_u32(is);
  ck.params.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = read_string(is);
    const std::uint32_t rows = read_u32(is);
    const std::uint32_t cols = read_u32(is);
    if (rows == 0 || cols == 0 || static_cast<std::uint64_t>(rows) * cols >
                                      (1ull << 28))
      throw FormatError("checkpoint: implausible shape for '" + name + "'");
    Eigen::MatrixXd m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!is) throw FormatError("checkpoint: truncated file");
    ck.params.emplace_back(std::move(name), std::move(m));
  }
  const std::uint32_t nmeta = read_u32(is);
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = read_string(is);
    ck.meta[k] = read_string(is);
  }
  return ck;
}

}  // namespace psan
