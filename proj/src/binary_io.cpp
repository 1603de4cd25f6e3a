#include "ded/binary_io.hpp"

#include "ded/errors.hpp"

#include <bit>

namespace ded {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian");

void BinaryWriter::put_string(const std::string& s) {
  put<std::uint64_t>(s.size());
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::put_doubles(const double* data, std::size_t n) {
  out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void BinaryReader::read_exact(char* buf, std::size_t n) {
  in_.read(buf, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) throw DataError("unexpected end of file");
}

std::string BinaryReader::get_string(std::size_t max_len) {
  const auto n = get<std::uint64_t>();
  if (n > max_len) throw DataError("string length out of range");
  std::string s(n, '\0');
  if (n > 0) read_exact(s.data(), n);
  return s;
}

void BinaryReader::get_doubles(double* data, std::size_t n) {
  read_exact(reinterpret_cast<char*>(data), n * sizeof(double));
}

void BinaryReader::expect_magic(const std::string& magic) {
  std::string got(magic.size(), '\0');
  read_exact(got.data(), got.size());
  if (got != magic) throw DataError("bad file magic: expected " + magic);
}

}  // namespace ded
