#pragma once

// Binary netpbm (P5 grayscale / P6 color) reader and writer. Samples are
// scaled to [0,1] by maxval on load; 16-bit samples are big-endian.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "kpac/error.hpp"
#include "kpac/image.hpp"

namespace kpac {

namespace detail {

class PnmHeaderReader {
 public:
  explicit PnmHeaderReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  std::string magic() {
    if (bytes_.size() < 2 || bytes_[0] != 'P') {
      throw Error(ErrorCode::malformed_header, "missing netpbm magic");
    }
    pos_ = 2;
    return std::string{static_cast<char>(bytes_[0]), static_cast<char>(bytes_[1])};
  }

  long number() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      throw Error(ErrorCode::malformed_header, "expected a decimal field");
    }
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > 1'000'000'000L) throw Error(ErrorCode::malformed_header, "header field too large");
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t payload_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw Error(ErrorCode::malformed_header, "missing whitespace before raster");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t quantize(double v, std::uint32_t maxval) {
  const double c = std::clamp(v, 0.0, 1.0) * maxval;
  // c >= 0, so floor(c + 0.5) rounds half away from zero.
  return static_cast<std::uint32_t>(std::floor(c + 0.5));
}

}  // namespace detail

inline Image decode_netpbm(const std::vector<unsigned char>& bytes) {
  detail::PnmHeaderReader reader(bytes);
  const std::string magic = reader.magic();
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else if (magic.size() == 2 && magic[1] >= '1' && magic[1] <= '7') {
    throw Error(ErrorCode::unsupported_magic, "only P5 and P6 are supported, got " + magic);
  } else {
    throw Error(ErrorCode::malformed_header, "unknown magic " + magic);
  }
  const long width = reader.number();
  const long height = reader.number();
  const long maxval = reader.number();
  if (width < 1 || height < 1) throw Error(ErrorCode::malformed_header, "zero image dimension");
  if (maxval < 1 || maxval > 65535) throw Error(ErrorCode::malformed_header, "maxval out of range");
  const std::size_t offset = reader.payload_offset();

  const std::size_t bytes_per_sample = maxval < 256 ? 1 : 2;
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() < offset + count * bytes_per_sample) {
    throw Error(ErrorCode::truncated_payload, "raster shorter than header declares");
  }

  Image img(static_cast<int>(height), static_cast<int>(width), channels);
  const double scale = 1.0 / static_cast<double>(maxval);
  const unsigned char* p = bytes.data() + offset;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t v = 0;
    if (bytes_per_sample == 1) {
      v = p[i];
    } else {
      v = (static_cast<std::uint32_t>(p[2 * i]) << 8) | p[2 * i + 1];
    }
    img.data()[i] = static_cast<double>(v) * scale;
  }
  return img;
}

inline std::vector<unsigned char> encode_netpbm(const Image& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw Error(ErrorCode::unsupported_config, "bit depth must be 8 or 16");
  }
  const std::uint32_t maxval = bit_depth == 8 ? 255u : 65535u;
  const std::string header = std::string(image.channels() == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(image.width()) + " " + std::to_string(image.height()) +
                             "\n" + std::to_string(maxval) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + image.size() * (bit_depth / 8));
  for (double v : image.data()) {
    const std::uint32_t q = detail::quantize(v, maxval);
    if (bit_depth == 16) out.push_back(static_cast<unsigned char>(q >> 8));
    out.push_back(static_cast<unsigned char>(q & 0xFF));
  }
  return out;
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_failure, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_failure, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io_failure, "write failed for " + path);
}

inline Image load_netpbm(const std::string& path) { return decode_netpbm(read_file_bytes(path)); }

inline void save_netpbm(const Image& image, const std::string& path, int bit_depth = 8) {
  write_file_bytes(path, encode_netpbm(image, bit_depth));
}

}  // namespace kpac
