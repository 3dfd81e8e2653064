#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "ducknet/io_util.hpp"

namespace ducknet {

// 8-bit interleaved image, channels 1 (gray) or 3 (rgb).
struct ImageU8 {
  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(std::size_t(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(std::size_t(y) * width + x) * channels + c];
  }
};

namespace detail {

inline int pnm_next_int(const std::vector<std::uint8_t>& b, std::size_t& pos,
                        const std::string& path) {
  // skip whitespace and '#' comments
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  int v = 0;
  bool any = false;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos] - '0');
    ++pos;
    any = true;
  }
  if (!any) throw std::runtime_error("bad PNM header in " + path);
  return v;
}

inline ImageU8 read_pnm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 2 || bytes[0] != 'P' ||
      (bytes[1] != '5' && bytes[1] != '6'))
    throw std::runtime_error("not a binary PGM/PPM file: " + path.string());
  const int channels = bytes[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  ImageU8 img;
  img.channels = channels;
  img.width = pnm_next_int(bytes, pos, path.string());
  img.height = pnm_next_int(bytes, pos, path.string());
  const int maxval = pnm_next_int(bytes, pos, path.string());
  if (maxval != 255)
    throw std::runtime_error("only 8-bit PNM supported: " + path.string());
  ++pos;  // single whitespace after maxval
  const std::size_t need = std::size_t(img.width) * img.height * channels;
  if (bytes.size() - pos < need)
    throw std::runtime_error("truncated PNM payload: " + path.string());
  img.pixels.assign(bytes.begin() + std::ptrdiff_t(pos),
                    bytes.begin() + std::ptrdiff_t(pos + need));
  return img;
}

inline void write_pnm(const std::filesystem::path& path, const ImageU8& img) {
  std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" +
                       std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.size() + img.pixels.size());
  std::memcpy(bytes.data(), header.data(), header.size());
  std::memcpy(bytes.data() + header.size(), img.pixels.data(),
              img.pixels.size());
  atomic_write_file(path, bytes);
}

inline ImageU8 read_png(const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open " + path.string());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw std::runtime_error("libpng init failed");
  }
  ImageU8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("undecodable PNG: " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const png_byte final_color = png_get_color_type(png, info);
  img.channels = (final_color == PNG_COLOR_TYPE_GRAY) ? 1 : 3;
  img.width = int(w);
  img.height = int(h);
  img.pixels.assign(std::size_t(w) * h * std::size_t(img.channels), 0);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.pixels.data() + std::size_t(y) * w * std::size_t(img.channels);
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

inline void write_png(const std::filesystem::path& path, const ImageU8& img) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  FILE* fp = std::fopen(tmp.string().c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write " + tmp.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw std::runtime_error("PNG write failed: " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(std::size_t(img.height));
  std::vector<std::uint8_t> buf = img.pixels;
  for (int y = 0; y < img.height; ++y)
    rows[std::size_t(y)] =
        buf.data() + std::size_t(y) * img.width * std::size_t(img.channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

// Dispatches on extension: .png, .ppm (P6), .pgm (P5).
inline ImageU8 read_image(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".png") return detail::read_png(path);
  if (ext == ".ppm" || ext == ".pgm") return detail::read_pnm(path);
  throw std::runtime_error("unsupported image format '" + ext +
                           "': " + path.string());
}

inline void write_image(const std::filesystem::path& path, const ImageU8& img) {
  const std::string ext = path.extension().string();
  if (ext == ".png") return detail::write_png(path, img);
  if (ext == ".ppm" || ext == ".pgm") {
    require((ext == ".ppm") == (img.channels == 3),
            "write_image: extension/channel mismatch");
    return detail::write_pnm(path, img);
  }
  throw std::runtime_error("unsupported image format '" + ext +
                           "': " + path.string());
}

inline ImageU8 to_rgb(const ImageU8& img) {
  if (img.channels == 3) return img;
  ImageU8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = 3;
  out.pixels.resize(img.pixels.size() * 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] =
        img.pixels[i];
  }
  return out;
}

// image | ground truth | prediction, side by side
inline ImageU8 compose_panel(const ImageU8& image, const ImageU8& gt,
                             const ImageU8& pred) {
  ImageU8 a = to_rgb(image), b = to_rgb(gt), c = to_rgb(pred);
  require(a.width == b.width && a.width == c.width && a.height == b.height &&
              a.height == c.height,
          "compose_panel: pane dimensions differ");
  ImageU8 panel;
  panel.width = 3 * a.width;
  panel.height = a.height;
  panel.channels = 3;
  panel.pixels.assign(std::size_t(panel.width) * panel.height * 3, 0);
  const ImageU8* panes[3] = {&a, &b, &c};
  for (int y = 0; y < panel.height; ++y)
    for (int p = 0; p < 3; ++p)
      std::memcpy(&panel.at(y, p * a.width, 0), &panes[p]->at(y, 0, 0),
                  std::size_t(a.width) * 3);
  return panel;
}

}  // namespace ducknet
