#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace meshtrace {

// Binary raster, row-major, one byte per pixel holding 0 or 1.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), data(std::size_t(w) * h, 0) {}

  bool empty() const { return data.empty(); }
  std::uint8_t at(int x, int y) const { return data[std::size_t(y) * width + x]; }
  void set(int x, int y, std::uint8_t v) { data[std::size_t(y) * width + x] = v; }
  long count() const;
};

bool operator==(const BinaryMask& a, const BinaryMask& b);

// PBM P4 (packed bits, MSB first, rows padded to byte boundary). Set pixels
// are written as 1 bits.
std::string save_pbm(const BinaryMask& mask);
BinaryMask load_pbm(const std::string& bytes);
void save_pbm_file(const BinaryMask& mask, const std::string& path);
BinaryMask load_pbm_file(const std::string& path);

}  // namespace meshtrace
