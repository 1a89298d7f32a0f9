#include "advspeech/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace advspeech {

static_assert(std::endian::native == std::endian::little,
              "ATEN files are little-endian; big-endian hosts are unsupported");

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_tensor: cannot open " + path.string());
  f.write("ATEN", 4);
  const auto rank = static_cast<std::uint32_t>(t.rank());
  f.write(reinterpret_cast<const char*>(&rank), 4);
  for (int i = 0; i < t.rank(); ++i) {
    const auto d = static_cast<std::uint32_t>(t.dim(i));
    f.write(reinterpret_cast<const char*>(&d), 4);
  }
  const auto vals = t.values();
  f.write(reinterpret_cast<const char*>(vals.data()),
          static_cast<std::streamsize>(vals.size() * sizeof(float)));
  if (!f) throw std::runtime_error("save_tensor: write failed for " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_tensor: cannot open " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "ATEN", 4) != 0) {
    throw std::runtime_error("load_tensor: bad magic in " + path.string());
  }
  std::uint32_t rank = 0;
  f.read(reinterpret_cast<char*>(&rank), 4);
  if (!f || rank > 8) throw std::runtime_error("load_tensor: bad rank in " + path.string());
  Shape shape;
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t d = 0;
    f.read(reinterpret_cast<char*>(&d), 4);
    if (!f) throw std::runtime_error("load_tensor: truncated header in " + path.string());
    shape.push_back(static_cast<std::int64_t>(d));
    n *= d;
  }
  std::vector<float> values(n);
  f.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!f) throw std::runtime_error("load_tensor: truncated payload in " + path.string());
  return Tensor::from(std::move(values), std::move(shape));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << content;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace advspeech
