#include "bair/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "bair/common.hpp"

namespace bair {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_error_to_exception(png_structp, png_const_charp msg) {
  throw FormatError(std::string("png: ") + msg);
}

void png_warning_ignore(png_structp, png_const_charp) {}

}  // namespace

Image read_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8)) {
    throw FormatError(path + " is not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_to_exception,
                                           png_warning_ignore);
  if (!png) throw IoError("png reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png info allocation failed");
  }

  Image out;
  try {
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    // Normalize every variant to 8-bit RGB.
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
      png_set_gray_to_rgb(png);
    }
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    std::size_t stride = png_get_rowbytes(png, info);
    if (stride < std::size_t(w) * 3) {
      throw FormatError(path + ": unexpected row stride");
    }
    std::vector<png_byte> rowbuf(stride);
    out = Image({3, int(h), int(w)});
    std::size_t plane = std::size_t(h) * std::size_t(w);
    for (png_uint_32 y = 0; y < h; ++y) {
      png_read_row(png, rowbuf.data(), nullptr);
      for (png_uint_32 x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          out.data[std::size_t(c) * plane + std::size_t(y) * w + x] =
              float(rowbuf[std::size_t(x) * 3 + std::size_t(c)]) / 255.0f;
        }
      }
    }
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const std::string& path, const Image& img) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw ContractError("write_png needs a {3,H,W} image, got " +
                        img.shape_str());
  }
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_to_exception,
                                            png_warning_ignore);
  if (!png) throw IoError("png writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png info allocation failed");
  }

  int h = img.dim(1), w = img.dim(2);
  try {
    png_init_io(png, f.get());
    png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::size_t plane = std::size_t(h) * std::size_t(w);
    std::vector<png_byte> row(std::size_t(w) * 3);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          float q = quantize8_value(
              img.data[std::size_t(c) * plane + std::size_t(y) * w + x]);
          row[std::size_t(x) * 3 + std::size_t(c)] =
              png_byte(std::lround(q * 255.0f));
        }
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw IoError("failed writing " + path);
}

Image read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (!in || magic != "PF" || w <= 0 || h <= 0 || scale == 0.0) {
    throw FormatError(path + " is not a color PFM file");
  }
  if (scale > 0.0) {
    throw FormatError(path + ": big-endian PFM is not supported");
  }
  in.get();  // single whitespace after the header
  Image out({3, h, w});
  std::vector<float> row(std::size_t(w) * 3);
  std::size_t plane = std::size_t(h) * std::size_t(w);
  // PFM stores rows bottom to top.
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            std::streamsize(row.size() * sizeof(float)));
    if (!in) throw FormatError(path + ": truncated pixel data");
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.data[std::size_t(c) * plane + std::size_t(y) * w + x] =
            row[std::size_t(x) * 3 + std::size_t(c)];
      }
    }
  }
  return out;
}

void write_pfm(const std::string& path, const Image& img) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw ContractError("write_pfm needs a {3,H,W} image, got " +
                        img.shape_str());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  int h = img.dim(1), w = img.dim(2);
  out << "PF\n" << w << " " << h << "\n-1.0\n";
  std::size_t plane = std::size_t(h) * std::size_t(w);
  std::vector<float> row(std::size_t(w) * 3);
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        row[std::size_t(x) * 3 + std::size_t(c)] =
            img.data[std::size_t(c) * plane + std::size_t(y) * w + x];
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              std::streamsize(row.size() * sizeof(float)));
  }
  if (!out.good()) throw IoError("failed writing " + path);
}

float quantize8_value(float v) {
  float scaled = std::round(v * 255.0f);  // halves away from zero
  if (scaled < 0.0f) scaled = 0.0f;
  if (scaled > 255.0f) scaled = 255.0f;
  return scaled / 255.0f;
}

Image quantize8(const Image& img) {
  Image out(img.shape);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    out.data[i] = quantize8_value(img.data[i]);
  }
  return out;
}

}  // namespace bair
