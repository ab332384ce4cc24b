#pragma once

// Binary matrix containers.
//
//   LEB1: 4-byte magic "LEB1", u32 LE row count, u32 LE dim,
//         then row-major little-endian float32.
//   LEB8: same framing with magic "LEB8" and float64 payload; used where
//         full precision must survive a round trip (training state).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace vlbias {

struct MatrixF32 {
  std::uint32_t rows = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;  // rows * dim
};

struct MatrixF64 {
  std::uint32_t rows = 0;
  std::uint32_t dim = 0;
  std::vector<double> data;
};

// Header + payload bytes for an r x d float32 matrix: 4 + 4 + 4 + 4*r*d.
constexpr std::size_t leb1_file_size(std::size_t rows, std::size_t dim) {
  return 12 + 4 * rows * dim;
}

void write_leb1(std::ostream& os, const MatrixF32& m);
MatrixF32 read_leb1(std::istream& is);  // FormatError on bad magic / truncation

void write_leb8(std::ostream& os, const MatrixF64& m);
MatrixF64 read_leb8(std::istream& is);

void write_leb1_file(const std::filesystem::path& path, const MatrixF32& m);  // IoError
MatrixF32 read_leb1_file(const std::filesystem::path& path);

}  // namespace vlbias
