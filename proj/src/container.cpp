#include "dbp/container.hpp"

#include "dbp/errors.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace dbp {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr std::size_t kMaxRank = 16;

void put_u64(std::ostream &os, std::uint64_t v)
{
  std::array<char, 8> b;
  std::memcpy(b.data(), &v, 8);
  os.write(b.data(), 8);
}

void read_exact(std::istream &is, char *dst, std::size_t n, const char *what)
{
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw DataError(std::string("tensor container: truncated while reading ") + what);
  }
}

} // namespace

void write_tensor(std::ostream &os, const Tensor &t)
{
  os.write(kContainerMagic, 4);
  char const header[3] = {static_cast<char>(kContainerVersion), 0, static_cast<char>(t.rank())};
  os.write(header, 3);
  for (auto e : t.shape()) {
    put_u64(os, e);
  }
  os.write(reinterpret_cast<const char *>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!os) {
    throw DataError("tensor container: write failed");
  }
}

Tensor read_tensor(std::istream &is)
{
  char magic[4];
  read_exact(is, magic, 4, "magic");
  if (std::memcmp(magic, kContainerMagic, 4) != 0) {
    throw DataError("tensor container: bad magic");
  }
  unsigned char header[3];
  read_exact(is, reinterpret_cast<char *>(header), 3, "header");
  if (header[0] != kContainerVersion) {
    throw DataError("tensor container: unsupported version " + std::to_string(header[0]));
  }
  if (header[1] != 0) {
    throw DataError("tensor container: unsupported dtype code " + std::to_string(header[1]));
  }
  std::size_t const rank = header[2];
  if (rank > kMaxRank) {
    throw DataError("tensor container: rank " + std::to_string(rank) + " too large");
  }
  Shape shape(rank);
  std::uint64_t total = 1;
  for (auto &e : shape) {
    std::uint64_t v;
    read_exact(is, reinterpret_cast<char *>(&v), 8, "extents");
    if (v != 0 && total > (std::uint64_t{1} << 40) / v) {
      throw DataError("tensor container: payload too large");
    }
    total *= v;
    e = v;
  }
  std::vector<double> data(total);
  read_exact(is, reinterpret_cast<char *>(data.data()), total * sizeof(double), "payload");
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path &path, const Tensor &t)
{
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw DataError("cannot open " + path.string() + " for writing");
  }
  write_tensor(os, t);
}

Tensor load_tensor(const std::filesystem::path &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw DataError("cannot open " + path.string());
  }
  try {
    return read_tensor(is);
  } catch (const DataError &e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

} // namespace dbp
