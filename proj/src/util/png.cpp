#include "lrpca/util/png.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "lrpca/errors.hpp"

namespace lrpca::util {

namespace {

// libpng reports errors by longjmp; everything touched after setjmp lives
// on the heap behind pointers that are fixed before it.
struct PngContext {
  std::FILE* file = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  bool writing = false;
  std::string error;
  std::vector<unsigned char> buffer;
  std::vector<png_bytep> rows;

  ~PngContext() {
    if (writing) {
      png_destroy_write_struct(&png, info != nullptr ? &info : nullptr);
    } else if (png != nullptr) {
      png_destroy_read_struct(&png, info != nullptr ? &info : nullptr, nullptr);
    }
    if (file != nullptr) std::fclose(file);
  }
};

void on_error(png_structp png, png_const_charp msg) {
  auto* ctx = static_cast<PngContext*>(png_get_error_ptr(png));
  ctx->error = msg;
  png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

}  // namespace

GrayImage read_png_gray(const std::filesystem::path& path) {
  const auto ctx = std::make_unique<PngContext>();
  ctx->file = std::fopen(path.c_str(), "rb");
  if (ctx->file == nullptr) throw DataError("cannot open '" + path.string() + "'");
  unsigned char sig[8] = {};
  if (std::fread(sig, 1, 8, ctx->file) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("'" + path.string() + "' is not a PNG file");
  }
  ctx->png = png_create_read_struct(PNG_LIBPNG_VER_STRING, ctx.get(), on_error, on_warning);
  if (ctx->png == nullptr) throw Error("png: cannot allocate read struct");
  ctx->info = png_create_info_struct(ctx->png);
  if (ctx->info == nullptr) throw Error("png: cannot allocate info struct");

  const auto img = std::make_unique<GrayImage>();
  if (setjmp(png_jmpbuf(ctx->png))) {
    throw FormatError("'" + path.string() + "': " + ctx->error);
  }
  png_init_io(ctx->png, ctx->file);
  png_set_sig_bytes(ctx->png, 8);
  png_read_info(ctx->png, ctx->info);
  if (png_get_color_type(ctx->png, ctx->info) != PNG_COLOR_TYPE_GRAY) {
    ctx->error = "not a single-channel grayscale image";
    png_longjmp(ctx->png, 1);
  }
  const int depth = png_get_bit_depth(ctx->png, ctx->info);
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(ctx->png);
  if (depth == 16) png_set_swap(ctx->png);  // little-endian samples in memory
  png_read_update_info(ctx->png, ctx->info);
  img->width = png_get_image_width(ctx->png, ctx->info);
  img->height = png_get_image_height(ctx->png, ctx->info);
  img->bit_depth = depth == 16 ? 16 : 8;
  const std::size_t rowbytes = png_get_rowbytes(ctx->png, ctx->info);
  ctx->buffer.resize(rowbytes * img->height);
  ctx->rows.resize(img->height);
  for (std::uint32_t y = 0; y < img->height; ++y) ctx->rows[y] = ctx->buffer.data() + y * rowbytes;
  png_read_image(ctx->png, ctx->rows.data());

  img->pixels.resize(static_cast<std::size_t>(img->width) * img->height);
  for (std::uint32_t y = 0; y < img->height; ++y) {
    const unsigned char* row = ctx->rows[y];
    for (std::uint32_t x = 0; x < img->width; ++x) {
      img->pixels[static_cast<std::size_t>(y) * img->width + x] =
          img->bit_depth == 16 ? static_cast<std::uint16_t>(row[2 * x] | (row[2 * x + 1] << 8))
                               : row[x];
    }
  }
  return *img;
}

void write_png_gray(const std::filesystem::path& path, const GrayImage& image) {
  if (image.bit_depth != 8 && image.bit_depth != 16) {
    throw FormatError("png: bit depth must be 8 or 16");
  }
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw FormatError("png: pixel count does not match dimensions");
  }
  const auto ctx = std::make_unique<PngContext>();
  ctx->writing = true;
  ctx->file = std::fopen(path.c_str(), "wb");
  if (ctx->file == nullptr) throw DataError("cannot create '" + path.string() + "'");
  ctx->png = png_create_write_struct(PNG_LIBPNG_VER_STRING, ctx.get(), on_error, on_warning);
  if (ctx->png == nullptr) throw Error("png: cannot allocate write struct");
  ctx->info = png_create_info_struct(ctx->png);
  if (ctx->info == nullptr) throw Error("png: cannot allocate info struct");

  ctx->buffer.resize(image.width * (image.bit_depth == 16 ? 2u : 1u));
  if (setjmp(png_jmpbuf(ctx->png))) {
    throw FormatError("'" + path.string() + "': " + ctx->error);
  }
  png_init_io(ctx->png, ctx->file);
  png_set_IHDR(ctx->png, ctx->info, image.width, image.height, image.bit_depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx->png, ctx->info);
  for (std::uint32_t y = 0; y < image.height; ++y) {
    for (std::uint32_t x = 0; x < image.width; ++x) {
      const std::uint16_t v = image.pixels[static_cast<std::size_t>(y) * image.width + x];
      if (image.bit_depth == 16) {
        ctx->buffer[2 * x] = static_cast<unsigned char>(v >> 8);  // big-endian on disk
        ctx->buffer[2 * x + 1] = static_cast<unsigned char>(v & 0xFF);
      } else {
        ctx->buffer[x] = static_cast<unsigned char>(v);
      }
    }
    png_write_row(ctx->png, ctx->buffer.data());
  }
  png_write_end(ctx->png, nullptr);
  std::fclose(ctx->file);
  ctx->file = nullptr;
}

}  // namespace lrpca::util
