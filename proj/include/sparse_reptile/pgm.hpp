#pragma once

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "sparse_reptile/error.hpp"

namespace sparse_reptile {

/// Binary greymap (P5) with maxval <= 255.
struct PgmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  /// Pixels scaled to [0, 1] by maxval.
  [[nodiscard]] std::vector<double> features() const {
    std::vector<double> out(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      out[i] = static_cast<double>(pixels[i]) / static_cast<double>(maxval);
    }
    return out;
  }
};

namespace detail {

inline bool pgm_space(std::uint8_t c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

/// Reads one unsigned decimal header field, skipping whitespace and # comments.
inline std::size_t pgm_field(std::span<const std::uint8_t> bytes, std::size_t& pos,
                             const std::string& name, const char* field) {
  while (pos < bytes.size()) {
    if (pgm_space(bytes[pos])) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') {
        ++pos;
      }
    } else {
      break;
    }
  }
  if (pos >= bytes.size()) {
    throw FormatError(FormatError::Kind::Truncated, name + ": header ends before " + field);
  }
  if (!std::isdigit(bytes[pos])) {
    throw FormatError(FormatError::Kind::Malformed, name + ": expected digits for " + field);
  }
  std::size_t value = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
    if (value > (1u << 24)) {
      throw FormatError(FormatError::Kind::Malformed, name + ": " + field + " too large");
    }
    ++pos;
  }
  return value;
}

}  // namespace detail

inline PgmImage parse_pgm(std::span<const std::uint8_t> bytes, const std::string& name = "pgm") {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError(FormatError::Kind::BadMagic, name + ": not a binary PGM (P5) file");
  }
  std::size_t pos = 2;
  if (pos < bytes.size() && !detail::pgm_space(bytes[pos])) {
    throw FormatError(FormatError::Kind::BadMagic, name + ": not a binary PGM (P5) file");
  }
  PgmImage img;
  img.width = detail::pgm_field(bytes, pos, name, "width");
  img.height = detail::pgm_field(bytes, pos, name, "height");
  const std::size_t maxval = detail::pgm_field(bytes, pos, name, "maxval");
  if (img.width == 0 || img.height == 0) {
    throw FormatError(FormatError::Kind::Malformed, name + ": zero image dimension");
  }
  if (maxval == 0 || maxval > 255) {
    throw FormatError(FormatError::Kind::Malformed,
                      name + ": maxval must be in [1, 255], got " + std::to_string(maxval));
  }
  img.maxval = static_cast<unsigned>(maxval);
  if (pos >= bytes.size() || !detail::pgm_space(bytes[pos])) {
    throw FormatError(FormatError::Kind::Truncated, name + ": missing whitespace after maxval");
  }
  ++pos;
  const std::size_t n = img.width * img.height;
  if (bytes.size() - pos < n) {
    throw FormatError(FormatError::Kind::Truncated, name + ": pixel payload truncated");
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  for (std::uint8_t p : img.pixels) {
    if (p > img.maxval) {
      throw FormatError(FormatError::Kind::Malformed, name + ": pixel exceeds maxval");
    }
  }
  return img;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read file " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("error while reading " + path.string());
  }
  return bytes;
}

inline PgmImage read_pgm(const std::filesystem::path& path) {
  return parse_pgm(read_file_bytes(path), path.string());
}

inline std::vector<std::uint8_t> encode_pgm(const PgmImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                             "\n" + std::to_string(img.maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

}  // namespace sparse_reptile
