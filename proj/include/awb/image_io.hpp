#pragma once

#include <zlib.h>

#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "awb/crc32.hpp"
#include "awb/error.hpp"
#include "awb/tensor.hpp"

namespace awb::data {

/// 8-bit raster, interleaved row-major, 1 (gray) or 3 (RGB) channels.
struct Raster {
  int64_t width = 0;
  int64_t height = 0;
  int64_t channels = 0;
  std::vector<uint8_t> pixels;
};

namespace detail {

inline std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const void* data, size_t len) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!out)
    throw Error(ErrorKind::IoError, "short write to " + path.string());
}

// --- PNM (binary PGM/PPM) ---------------------------------------------------

// Reads one whitespace/comment-delimited token from a PNM header.
inline std::string pnm_token(const std::vector<uint8_t>& bytes, size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  size_t start = pos;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#')
    ++pos;
  return std::string(bytes.begin() + start, bytes.begin() + pos);
}

inline Raster decode_pnm(const std::vector<uint8_t>& bytes,
                         const std::string& name) {
  size_t pos = 0;
  std::string magic = pnm_token(bytes, pos);
  int64_t channels;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    throw Error(ErrorKind::UnsupportedFormat,
                name + ": only binary PGM (P5) / PPM (P6) supported");
  Raster r;
  r.channels = channels;
  try {
    r.width = std::stoll(pnm_token(bytes, pos));
    r.height = std::stoll(pnm_token(bytes, pos));
    int64_t maxval = std::stoll(pnm_token(bytes, pos));
    if (maxval != 255)
      throw Error(ErrorKind::UnsupportedFormat,
                  name + ": only 8-bit PNM (maxval 255) supported");
  } catch (const std::invalid_argument&) {
    throw Error(ErrorKind::DecodeError, name + ": malformed PNM header");
  }
  if (r.width <= 0 || r.height <= 0)
    throw Error(ErrorKind::DecodeError, name + ": bad PNM dimensions");
  ++pos;  // single whitespace after maxval
  size_t need = static_cast<size_t>(r.width * r.height * channels);
  if (bytes.size() - pos < need)
    throw Error(ErrorKind::DecodeError, name + ": truncated PNM payload");
  r.pixels.assign(bytes.begin() + pos, bytes.begin() + pos + need);
  return r;
}

inline std::vector<uint8_t> encode_pnm(const Raster& r) {
  std::string header = (r.channels == 1 ? "P5\n" : "P6\n") +
                       std::to_string(r.width) + " " +
                       std::to_string(r.height) + "\n255\n";
  std::vector<uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), r.pixels.begin(), r.pixels.end());
  return bytes;
}

// --- PNG (8-bit grayscale / RGB, non-interlaced) -----------------------------

inline constexpr uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G',
                                             '\r', '\n', 0x1A, '\n'};

inline void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

inline uint32_t get_u32_be(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) |
         (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

inline void png_chunk(std::vector<uint8_t>& out, const char type[4],
                      const std::vector<uint8_t>& payload) {
  put_u32_be(out, static_cast<uint32_t>(payload.size()));
  size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  uint32_t crc = awb::crc32(out.data() + crc_start, out.size() - crc_start);
  put_u32_be(out, crc);
}

inline std::vector<uint8_t> zlib_deflate(const std::vector<uint8_t>& raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> out(bound);
  if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                6) != Z_OK)
    throw Error(ErrorKind::IoError, "zlib compression failed");
  out.resize(bound);
  return out;
}

inline std::vector<uint8_t> zlib_inflate(const uint8_t* data, size_t len,
                                         size_t expected) {
  std::vector<uint8_t> out(expected);
  uLongf out_len = static_cast<uLongf>(expected);
  int rc = uncompress(out.data(), &out_len, data, static_cast<uLong>(len));
  if (rc != Z_OK || out_len != expected)
    throw Error(ErrorKind::DecodeError, "PNG: corrupt compressed stream");
  return out;
}

inline int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

inline Raster decode_png(const std::vector<uint8_t>& bytes,
                         const std::string& name) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSignature, 8) != 0)
    throw Error(ErrorKind::DecodeError, name + ": bad PNG signature");
  size_t pos = 8;
  Raster r;
  std::vector<uint8_t> idat;
  bool saw_ihdr = false, saw_iend = false;
  while (pos + 12 <= bytes.size() && !saw_iend) {
    uint32_t len = get_u32_be(bytes.data() + pos);
    if (pos + 12 + len > bytes.size())
      throw Error(ErrorKind::DecodeError, name + ": truncated PNG chunk");
    const uint8_t* type = bytes.data() + pos + 4;
    const uint8_t* payload = bytes.data() + pos + 8;
    uint32_t stored_crc = get_u32_be(payload + len);
    if (awb::crc32(type, 4 + len) != stored_crc)
      throw Error(ErrorKind::DecodeError, name + ": PNG chunk CRC mismatch");
    std::string tname(reinterpret_cast<const char*>(type), 4);
    if (tname == "IHDR") {
      if (len != 13)
        throw Error(ErrorKind::DecodeError, name + ": bad IHDR length");
      r.width = get_u32_be(payload);
      r.height = get_u32_be(payload + 4);
      uint8_t bit_depth = payload[8], color_type = payload[9];
      uint8_t compression = payload[10], filter = payload[11],
              interlace = payload[12];
      if (bit_depth != 8 || (color_type != 0 && color_type != 2))
        throw Error(ErrorKind::UnsupportedFormat,
                    name + ": only 8-bit grayscale/RGB PNG supported");
      if (compression != 0 || filter != 0 || interlace != 0)
        throw Error(ErrorKind::UnsupportedFormat,
                    name + ": unsupported PNG compression/filter/interlace");
      r.channels = color_type == 0 ? 1 : 3;
      saw_ihdr = true;
    } else if (tname == "IDAT") {
      idat.insert(idat.end(), payload, payload + len);
    } else if (tname == "IEND") {
      saw_iend = true;
    }
    // ancillary chunks are skipped
    pos += 12 + len;
  }
  if (!saw_ihdr || !saw_iend || r.width <= 0 || r.height <= 0)
    throw Error(ErrorKind::DecodeError, name + ": incomplete PNG structure");

  const int64_t bpp = r.channels;  // bytes per pixel at bit depth 8
  const int64_t stride = r.width * bpp;
  const size_t raw_size = static_cast<size_t>((stride + 1) * r.height);
  std::vector<uint8_t> raw = zlib_inflate(idat.data(), idat.size(), raw_size);

  r.pixels.resize(static_cast<size_t>(stride * r.height));
  std::vector<uint8_t> prev(stride, 0);
  for (int64_t y = 0; y < r.height; ++y) {
    const uint8_t* row = raw.data() + y * (stride + 1);
    uint8_t ftype = row[0];
    uint8_t* cur = r.pixels.data() + y * stride;
    for (int64_t x = 0; x < stride; ++x) {
      int rawv = row[1 + x];
      int left = x >= bpp ? cur[x - bpp] : 0;
      int up = prev[x];
      int upleft = x >= bpp ? prev[x - bpp] : 0;
      int recon;
      switch (ftype) {
        case 0: recon = rawv; break;
        case 1: recon = rawv + left; break;
        case 2: recon = rawv + up; break;
        case 3: recon = rawv + (left + up) / 2; break;
        case 4: recon = rawv + paeth(left, up, upleft); break;
        default:
          throw Error(ErrorKind::DecodeError,
                      name + ": unknown PNG row filter " +
                          std::to_string(ftype));
      }
      cur[x] = static_cast<uint8_t>(recon & 0xFF);
    }
    std::memcpy(prev.data(), cur, static_cast<size_t>(stride));
  }
  return r;
}

inline std::vector<uint8_t> encode_png(const Raster& r) {
  std::vector<uint8_t> out(kPngSignature, kPngSignature + 8);
  std::vector<uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<uint32_t>(r.width));
  put_u32_be(ihdr, static_cast<uint32_t>(r.height));
  ihdr.push_back(8);                                   // bit depth
  ihdr.push_back(r.channels == 1 ? 0 : 2);             // color type
  ihdr.push_back(0);                                   // compression
  ihdr.push_back(0);                                   // filter method
  ihdr.push_back(0);                                   // no interlace
  png_chunk(out, "IHDR", ihdr);

  const int64_t stride = r.width * r.channels;
  std::vector<uint8_t> raw(static_cast<size_t>((stride + 1) * r.height));
  for (int64_t y = 0; y < r.height; ++y) {
    raw[y * (stride + 1)] = 0;  // filter type None
    std::memcpy(raw.data() + y * (stride + 1) + 1, r.pixels.data() + y * stride,
                static_cast<size_t>(stride));
  }
  png_chunk(out, "IDAT", zlib_deflate(raw));
  png_chunk(out, "IEND", {});
  return out;
}

}  // namespace detail

/// Decodes PNG / binary PPM / PGM by content sniffing.
inline Raster read_raster(const std::filesystem::path& path) {
  auto bytes = detail::read_file_bytes(path);
  if (bytes.size() >= 8 &&
      std::memcmp(bytes.data(), detail::kPngSignature, 8) == 0)
    return detail::decode_png(bytes, path.string());
  if (bytes.size() >= 2 && bytes[0] == 'P' &&
      (bytes[1] == '5' || bytes[1] == '6'))
    return detail::decode_pnm(bytes, path.string());
  throw Error(ErrorKind::UnsupportedFormat,
              path.string() + ": not a PNG/PPM/PGM file");
}

/// Encodes by extension: .png, .ppm (RGB), .pgm (grayscale).
inline void write_raster(const std::filesystem::path& path, const Raster& r) {
  if (r.channels != 1 && r.channels != 3)
    throw Error(ErrorKind::UnsupportedFormat,
                "rasters must have 1 or 3 channels");
  if (static_cast<int64_t>(r.pixels.size()) != r.width * r.height * r.channels)
    throw Error(ErrorKind::ShapeMismatch, "raster pixel count mismatch");
  auto ext = path.extension().string();
  std::vector<uint8_t> bytes;
  if (ext == ".png") {
    bytes = detail::encode_png(r);
  } else if (ext == ".pgm" || ext == ".ppm") {
    if ((ext == ".pgm") != (r.channels == 1))
      throw Error(ErrorKind::UnsupportedFormat,
                  path.string() + ": extension does not match channel count");
    bytes = detail::encode_pnm(r);
  } else {
    throw Error(ErrorKind::UnsupportedFormat,
                path.string() + ": unknown image extension");
  }
  detail::write_file_bytes(path, bytes.data(), bytes.size());
}

/// Channels-first C x H x W tensor with 8-bit values mapped to v / 255.
inline Tensor raster_to_tensor(const Raster& r) {
  std::vector<double> values(
      static_cast<size_t>(r.channels * r.height * r.width));
  for (int64_t c = 0; c < r.channels; ++c)
    for (int64_t y = 0; y < r.height; ++y)
      for (int64_t x = 0; x < r.width; ++x)
        values[(c * r.height + y) * r.width + x] =
            r.pixels[(y * r.width + x) * r.channels + c] / 255.0;
  return Tensor({r.channels, r.height, r.width}, std::move(values));
}

/// Inverse of raster_to_tensor: clamps to [0,1] and rounds to 8 bits.
inline Raster tensor_to_raster(const Tensor& image) {
  if (image.shape().size() != 3)
    throw Error(ErrorKind::ShapeMismatch,
                "expected C x H x W image, got " + shape_str(image.shape()));
  Raster r;
  r.channels = image.shape()[0];
  r.height = image.shape()[1];
  r.width = image.shape()[2];
  if (r.channels != 1 && r.channels != 3)
    throw Error(ErrorKind::UnsupportedFormat,
                "rasters must have 1 or 3 channels");
  r.pixels.resize(static_cast<size_t>(r.channels * r.height * r.width));
  auto v = image.values();
  for (int64_t c = 0; c < r.channels; ++c)
    for (int64_t y = 0; y < r.height; ++y)
      for (int64_t x = 0; x < r.width; ++x) {
        double p = v[(c * r.height + y) * r.width + x];
        p = std::min(1.0, std::max(0.0, p));
        r.pixels[(y * r.width + x) * r.channels + c] =
            static_cast<uint8_t>(std::lround(p * 255.0));
      }
  return r;
}

/// Loads an image file as a C x H x W tensor with values in [0, 1].
inline Tensor load_image(const std::filesystem::path& path) {
  return raster_to_tensor(read_raster(path));
}

/// Bilinear resize to side x side with corner-aligned sampling.
inline Tensor resize(const Tensor& image, int64_t side) {
  if (image.shape().size() != 3)
    throw Error(ErrorKind::ShapeMismatch,
                "resize expects C x H x W, got " + shape_str(image.shape()));
  if (side < 1)
    throw Error(ErrorKind::InvalidHyperparam, "resize side must be >= 1");
  const int64_t C = image.shape()[0], H = image.shape()[1],
                W = image.shape()[2];
  auto src = image.values();
  std::vector<double> out(static_cast<size_t>(C * side * side));
  const double sy = (side > 1 && H > 1)
                        ? static_cast<double>(H - 1) / static_cast<double>(side - 1)
                        : 0.0;
  const double sx = (side > 1 && W > 1)
                        ? static_cast<double>(W - 1) / static_cast<double>(side - 1)
                        : 0.0;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < side; ++y) {
      double fy = y * sy;
      int64_t y0 = static_cast<int64_t>(fy);
      int64_t y1 = std::min(y0 + 1, H - 1);
      double wy = fy - y0;
      for (int64_t x = 0; x < side; ++x) {
        double fx = x * sx;
        int64_t x0 = static_cast<int64_t>(fx);
        int64_t x1 = std::min(x0 + 1, W - 1);
        double wx = fx - x0;
        const double* plane = src.data() + c * H * W;
        double top = (1.0 - wx) * plane[y0 * W + x0] + wx * plane[y0 * W + x1];
        double bot = (1.0 - wx) * plane[y1 * W + x0] + wx * plane[y1 * W + x1];
        out[(c * side + y) * side + x] = (1.0 - wy) * top + wy * bot;
      }
    }
  return Tensor({C, side, side}, std::move(out));
}

}  // namespace awb::data
