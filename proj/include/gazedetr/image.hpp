#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "gazedetr/common.hpp"

namespace gazedetr {

// 8-bit grayscale image, row-major.
struct Image8 {
  int h = 0, w = 0;
  std::vector<std::uint8_t> pix;

  Image8() = default;
  Image8(int hh, int ww, std::uint8_t fill = 0)
      : h(hh), w(ww), pix(static_cast<std::size_t>(hh) * ww, fill) {}

  std::uint8_t at(int r, int c) const {
    return pix[static_cast<std::size_t>(r) * w + c];
  }
  void set(int r, int c, std::uint8_t v) {
    pix[static_cast<std::size_t>(r) * w + c] = v;
  }
  bool operator==(const Image8&) const = default;
};

namespace detail {
struct FileCloser {
  std::FILE* f = nullptr;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};
}  // namespace detail

inline void write_png(const std::string& path, const Image8& img) {
  detail::FileCloser fc{std::fopen(path.c_str(), "wb")};
  check_state(fc.f != nullptr, "cannot open for write: " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check_state(png != nullptr, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    check_state(false, "png_create_info_struct failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.h));
  for (int r = 0; r < img.h; ++r)
    rows[static_cast<std::size_t>(r)] =
        const_cast<png_bytep>(img.pix.data() + static_cast<std::size_t>(r) * img.w);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    check_state(false, "png write failed: " + path);
  }
  png_init_io(png, fc.f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w),
               static_cast<png_uint_32>(img.h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline Image8 read_png(const std::string& path) {
  detail::FileCloser fc{std::fopen(path.c_str(), "rb")};
  check_state(fc.f != nullptr, "cannot open image: " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check_state(png != nullptr, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    check_state(false, "png_create_info_struct failed");
  }
  Image8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    check_state(false, "png read failed (corrupt?): " + path);
  }
  png_init_io(png, fc.f);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8 || color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    check_state(false, "expected 8-bit grayscale PNG: " + path);
  }
  img = Image8(static_cast<int>(h), static_cast<int>(w));
  rows.resize(h);
  for (png_uint_32 r = 0; r < h; ++r)
    rows[r] = img.pix.data() + static_cast<std::size_t>(r) * w;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace gazedetr
