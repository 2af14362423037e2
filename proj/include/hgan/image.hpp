#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "hgan/errors.hpp"
#include "hgan/tensor.hpp"

namespace hgan {

// Interleaved 8-bit image, HWC.
struct ImageU8 {
  int64_t h = 0, w = 0, c = 0;
  std::vector<uint8_t> data;
};

// Planar float image, CHW, values in [-1, 1].
struct ImageF {
  int64_t c = 0, h = 0, w = 0;
  std::vector<double> v;

  ImageF() = default;
  ImageF(int64_t c_, int64_t h_, int64_t w_, double fill = 0.0)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_ * h_ * w_), fill) {}
  double& at(int64_t ch, int64_t y, int64_t x) { return v[(ch * h + y) * w + x]; }
  double at(int64_t ch, int64_t y, int64_t x) const { return v[(ch * h + y) * w + x]; }
};

inline ImageF to_float(const ImageU8& img) {
  ImageF out(img.c, img.h, img.w);
  for (int64_t y = 0; y < img.h; ++y)
    for (int64_t x = 0; x < img.w; ++x)
      for (int64_t ch = 0; ch < img.c; ++ch)
        out.at(ch, y, x) = static_cast<double>(img.data[(y * img.w + x) * img.c + ch]) / 127.5 - 1.0;
  return out;
}

inline ImageU8 to_u8(const ImageF& img) {
  ImageU8 out{img.h, img.w, img.c, {}};
  out.data.resize(static_cast<size_t>(img.c * img.h * img.w));
  for (int64_t y = 0; y < img.h; ++y)
    for (int64_t x = 0; x < img.w; ++x)
      for (int64_t ch = 0; ch < img.c; ++ch) {
        double v = (img.at(ch, y, x) + 1.0) * 127.5;
        out.data[(y * img.w + x) * img.c + ch] =
            static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return out;
}

namespace detail {

struct FileHandle {
  FILE* f = nullptr;
  explicit FileHandle(const std::filesystem::path& p, const char* mode) : f(std::fopen(p.c_str(), mode)) {}
  ~FileHandle() {
    if (f) std::fclose(f);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
};

struct JpegErr {
  jpeg_error_mgr pub;
  jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
  longjmp(err->jump, 1);
}

inline ImageU8 read_png(const std::filesystem::path& path, int64_t want_channels) {
  FileHandle fh(path, "rb");
  require(fh.f != nullptr, Err::DecodeError, "cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, Err::DecodeError, "png init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(Err::DecodeError, "png init failed");
  }
  ImageU8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Err::DecodeError, "corrupt png: " + path.string());
  }
  png_init_io(png, fh.f);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_packing(png);
  png_set_strip_alpha(png);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (want_channels == 3) {
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_gray_to_rgb(png);
  } else {
    if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA)
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);

  img.h = png_get_image_height(png, info);
  img.w = png_get_image_width(png, info);
  img.c = png_get_channels(png, info);
  img.data.resize(static_cast<size_t>(img.h * img.w * img.c));
  rows.resize(img.h);
  for (int64_t y = 0; y < img.h; ++y) rows[y] = img.data.data() + y * img.w * img.c;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  require(img.c == want_channels, Err::DecodeError, "unexpected channel count in " + path.string());
  return img;
}

inline ImageU8 read_jpeg(const std::filesystem::path& path) {
  FileHandle fh(path, "rb");
  require(fh.f != nullptr, Err::DecodeError, "cannot open " + path.string());
  jpeg_decompress_struct cinfo;
  JpegErr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  ImageU8 img;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    fail(Err::DecodeError, "corrupt jpeg: " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fh.f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  img.h = cinfo.output_height;
  img.w = cinfo.output_width;
  img.c = 3;
  img.data.resize(static_cast<size_t>(img.h * img.w * img.c));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.data.data() + static_cast<int64_t>(cinfo.output_scanline) * img.w * img.c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

inline bool is_png(const std::filesystem::path& path) {
  FileHandle fh(path, "rb");
  if (!fh.f) return false;
  uint8_t sig[8] = {};
  if (std::fread(sig, 1, 8, fh.f) != 8) return false;
  return png_sig_cmp(sig, 0, 8) == 0;
}

}  // namespace detail

// 3-channel 8-bit decode; PNG or JPEG detected by signature.
inline ImageU8 read_image_rgb8(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), Err::DecodeError, "missing file " + path.string());
  if (detail::is_png(path)) return detail::read_png(path, 3);
  return detail::read_jpeg(path);
}

// Single-channel decode (PNG only; masks are stored as grayscale PNG).
inline ImageU8 read_image_gray8(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), Err::DecodeError, "missing file " + path.string());
  require(detail::is_png(path), Err::DecodeError, "mask must be PNG: " + path.string());
  return detail::read_png(path, 1);
}

inline void write_png(const std::filesystem::path& path, const ImageU8& img) {
  require(img.c == 1 || img.c == 3, Err::IOError, "write_png supports 1 or 3 channels");
  detail::FileHandle fh(path, "wb");
  require(fh.f != nullptr, Err::IOError, "cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, Err::IOError, "png init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(Err::IOError, "png init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(Err::IOError, "png write failed: " + path.string());
  }
  png_init_io(png, fh.f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               img.c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.h);
  std::vector<uint8_t> buf(img.data);
  for (int64_t y = 0; y < img.h; ++y) rows[y] = buf.data() + y * img.w * img.c;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Packs same-sized float images into an (N,C,H,W) tensor.
inline Tensor images_to_tensor(const std::vector<ImageF>& images) {
  require(!images.empty(), Err::ShapeError, "empty image batch");
  const int64_t c = images[0].c, h = images[0].h, w = images[0].w;
  std::vector<double> v;
  v.reserve(images.size() * static_cast<size_t>(c * h * w));
  for (const auto& img : images) {
    require(img.c == c && img.h == h && img.w == w, Err::ShapeMismatch,
            "image batch sizes must match");
    v.insert(v.end(), img.v.begin(), img.v.end());
  }
  return Tensor::from({static_cast<int64_t>(images.size()), c, h, w}, std::move(v));
}

inline std::vector<ImageF> tensor_to_images(const Tensor& t) {
  require(t.ndim() == 4, Err::ShapeError, "expected NCHW tensor");
  std::vector<ImageF> out;
  const int64_t n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  const int64_t stride = c * h * w;
  for (int64_t i = 0; i < n; ++i) {
    ImageF img(c, h, w);
    std::copy_n(t.data().begin() + i * stride, stride, img.v.begin());
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace hgan
