#include "meshtrace/mask.hpp"

#include <fstream>
#include <numeric>

#include "meshtrace/error.hpp"

namespace meshtrace {

long BinaryMask::count() const {
  return std::accumulate(data.begin(), data.end(), 0L,
                         [](long acc, std::uint8_t v) { return acc + (v ? 1 : 0); });
}

bool operator==(const BinaryMask& a, const BinaryMask& b) {
  return a.width == b.width && a.height == b.height && a.data == b.data;
}

std::string save_pbm(const BinaryMask& mask) {
  std::string out = "P4\n" + std::to_string(mask.width) + " " +
                    std::to_string(mask.height) + "\n";
  const int row_bytes = (mask.width + 7) / 8;
  for (int y = 0; y < mask.height; ++y) {
    std::string row(row_bytes, '\0');
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) row[x / 8] |= static_cast<char>(0x80 >> (x % 8));
    out += row;
  }
  return out;
}

namespace {

// Reads the next whitespace-delimited token, skipping '#' comments.
std::string next_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() &&
         !std::isspace(static_cast<unsigned char>(bytes[pos])))
    ++pos;
  if (start == pos) throw ParseError("pbm: unexpected end of header");
  return bytes.substr(start, pos - start);
}

}  // namespace

BinaryMask load_pbm(const std::string& bytes) {
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P4") throw ParseError("pbm: expected P4 magic");
  int width = 0, height = 0;
  try {
    width = std::stoi(next_token(bytes, pos));
    height = std::stoi(next_token(bytes, pos));
  } catch (const std::exception&) {
    throw ParseError("pbm: bad dimension token");
  }
  if (width <= 0 || height <= 0) throw ParseError("pbm: nonpositive dimensions");
  if (pos >= bytes.size()) throw ParseError("pbm: missing payload");
  ++pos;  // single whitespace byte after the header
  const int row_bytes = (width + 7) / 8;
  if (bytes.size() - pos < std::size_t(row_bytes) * height)
    throw ParseError("pbm: truncated payload");
  BinaryMask mask(width, height);
  for (int y = 0; y < height; ++y) {
    const char* row = bytes.data() + pos + std::size_t(y) * row_bytes;
    for (int x = 0; x < width; ++x)
      mask.set(x, y, (row[x / 8] >> (7 - x % 8)) & 1);
  }
  return mask;
}

void save_pbm_file(const BinaryMask& mask, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open for write: " + path);
  const std::string bytes = save_pbm(mask);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArgumentError("write failed: " + path);
}

BinaryMask load_pbm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return load_pbm(bytes);
}

}  // namespace meshtrace
