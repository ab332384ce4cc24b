#include "vlbias/leb1.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "vlbias/errors.hpp"

namespace vlbias {

namespace {

static_assert(sizeof(float) == 4 && sizeof(double) == 8, "IEEE-754 layout expected");

void put_u32_le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError("truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <class T>
void write_payload(std::ostream& os, const std::vector<T>& data) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(T)));
  } else {
    for (T v : data) {
      unsigned char raw[sizeof(T)];
      std::memcpy(raw, &v, sizeof(T));
      for (std::size_t i = 0; i < sizeof(T); ++i)
        os.put(static_cast<char>(raw[sizeof(T) - 1 - i]));
    }
  }
}

template <class T>
void read_payload(std::istream& is, std::vector<T>& data) {
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (!is) throw FormatError("truncated payload");
  } else {
    for (T& v : data) {
      unsigned char raw[sizeof(T)];
      for (std::size_t i = 0; i < sizeof(T); ++i) {
        int c = is.get();
        if (c == EOF) throw FormatError("truncated payload");
        raw[sizeof(T) - 1 - i] = static_cast<unsigned char>(c);
      }
      std::memcpy(&v, raw, sizeof(T));
    }
  }
}

void expect_magic(std::istream& is, const char* magic) {
  char got[4];
  is.read(got, 4);
  if (!is || std::memcmp(got, magic, 4) != 0)
    throw FormatError(std::string("bad magic, expected ") + magic);
}

}  // namespace

void write_leb1(std::ostream& os, const MatrixF32& m) {
  if (m.data.size() != static_cast<std::size_t>(m.rows) * m.dim)
    throw ConsistencyError("matrix payload size does not match rows*dim");
  os.write("LEB1", 4);
  put_u32_le(os, m.rows);
  put_u32_le(os, m.dim);
  write_payload(os, m.data);
}

MatrixF32 read_leb1(std::istream& is) {
  expect_magic(is, "LEB1");
  MatrixF32 m;
  m.rows = get_u32_le(is);
  m.dim = get_u32_le(is);
  m.data.resize(static_cast<std::size_t>(m.rows) * m.dim);
  read_payload(is, m.data);
  return m;
}

void write_leb8(std::ostream& os, const MatrixF64& m) {
  if (m.data.size() != static_cast<std::size_t>(m.rows) * m.dim)
    throw ConsistencyError("matrix payload size does not match rows*dim");
  os.write("LEB8", 4);
  put_u32_le(os, m.rows);
  put_u32_le(os, m.dim);
  write_payload(os, m.data);
}

MatrixF64 read_leb8(std::istream& is) {
  expect_magic(is, "LEB8");
  MatrixF64 m;
  m.rows = get_u32_le(is);
  m.dim = get_u32_le(is);
  m.data.resize(static_cast<std::size_t>(m.rows) * m.dim);
  read_payload(is, m.data);
  return m;
}

void write_leb1_file(const std::filesystem::path& path, const MatrixF32& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  write_leb1(os, m);
  os.flush();
  if (!os) throw IoError("write failed: " + path.string());
}

MatrixF32 read_leb1_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  return read_leb1(is);
}

}  // namespace vlbias
