#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

namespace ded {

// Little-endian raw encoding of trivially copyable values; doubles are
// written bit-for-bit so files round-trip exactly.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out_.write(buf, sizeof(T));
  }
  void put_string(const std::string& s);
  void put_bytes(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
  void put_doubles(const double* data, std::size_t n);

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    char buf[sizeof(T)];
    read_exact(buf, sizeof(T));
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
  }
  std::string get_string(std::size_t max_len = 1 << 26);
  void get_doubles(double* data, std::size_t n);
  void expect_magic(const std::string& magic);

 private:
  void read_exact(char* buf, std::size_t n);
  std::istream& in_;
};

}  // namespace ded
