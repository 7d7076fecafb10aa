#include "srlm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace srlm {

namespace {

constexpr char kMagic[4] = {'S', 'R', 'L', 'M'};

void require_little_endian() {
  static_assert(sizeof(double) == 8);
  if constexpr (std::endian::native != std::endian::little) {
    throw std::runtime_error("checkpoint format requires a little-endian host");
  }
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

bool Checkpoint::has(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return true;
  }
  return false;
}

const Eigen::MatrixXd& Checkpoint::block(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b.value;
  }
  throw std::out_of_range("checkpoint: no such block: " + name);
}

ModelParams Checkpoint::to_params(const std::vector<std::string>& skip_prefixes) const {
  ModelParams params;
  for (const auto& b : blocks) {
    bool skip = false;
    for (const auto& prefix : skip_prefixes) {
      if (b.name.rfind(prefix, 0) == 0) skip = true;
    }
    if (!skip) params.add_block(b.name, b.value);
  }
  return params;
}

Checkpoint Checkpoint::from_params(const ModelParams& params) {
  Checkpoint ck;
  ck.blocks = params.blocks();
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  require_little_endian();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, ck.version);
  write_pod<std::uint64_t>(out, ck.seed);
  write_pod<std::uint64_t>(out, ck.config_hash);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ck.config_echo.size()));
  out.write(ck.config_echo.data(), static_cast<std::streamsize>(ck.config_echo.size()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ck.blocks.size()));
  for (const auto& b : ck.blocks) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
    out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(b.value.rows()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(b.value.cols()));
    out.write(reinterpret_cast<const char*>(b.value.data()),
              static_cast<std::streamsize>(sizeof(double) * b.value.size()));
  }
  if (!out) throw std::runtime_error("checkpoint: write failure: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  require_little_endian();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  Checkpoint ck;
  ck.version = read_pod<std::uint32_t>(in);
  if (ck.version != 1) throw std::runtime_error("checkpoint: unsupported format version");
  ck.seed = read_pod<std::uint64_t>(in);
  ck.config_hash = read_pod<std::uint64_t>(in);
  const auto echo_len = read_pod<std::uint32_t>(in);
  ck.config_echo.resize(echo_len);
  in.read(ck.config_echo.data(), echo_len);
  const auto n_blocks = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = read_pod<std::uint32_t>(in);
    const auto cols = read_pod<std::uint32_t>(in);
    Eigen::MatrixXd value(rows, cols);
    in.read(reinterpret_cast<char*>(value.data()),
            static_cast<std::streamsize>(sizeof(double) * value.size()));
    if (!in) throw std::runtime_error("checkpoint: truncated block data");
    ck.blocks.push_back({std::move(name), std::move(value)});
  }
  return ck;
}

}  // namespace srlm
