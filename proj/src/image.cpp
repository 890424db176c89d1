#include "layervec/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

#include "layervec/error.hpp"

namespace layervec {

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::invalid_input, "image dimensions must be positive");
  if (channels != 1 && channels != 3 && channels != 4)
    throw Error(ErrorKind::invalid_input, "image channels must be 1, 3 or 4");
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image::Image(int width, int height, int channels, std::vector<double> data)
    : Image(width, height, channels) {
  if (data.size() != data_.size()) throw Error(ErrorKind::shape, "image data length does not match dimensions");
  data_ = std::move(data);
}

void Image::validate() const {
  for (double v : data_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw Error(ErrorKind::invalid_input, "image sample outside [0,1]");
  }
}

BinaryMask::BinaryMask(int width, int height, int level, std::string id)
    : width_(width), height_(height), level_(level), id_(std::move(id)) {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::invalid_input, "mask dimensions must be positive");
  bits_.assign(static_cast<std::size_t>(width) * height, 0);
}

std::size_t BinaryMask::area() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BoundingBox BinaryMask::bbox() const {
  BoundingBox b{width_, height_, 0, 0};
  bool any = false;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (!get(x, y)) continue;
      any = true;
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x + 1);
      b.y1 = std::max(b.y1, y + 1);
    }
  }
  return any ? b : BoundingBox{};
}

std::size_t shared_pixels(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_dims(b)) throw Error(ErrorKind::shape, "mask dimensions differ");
  std::size_t n = 0;
  const auto& ab = a.bits();
  const auto& bb = b.bits();
  for (std::size_t i = 0; i < ab.size(); ++i) n += static_cast<std::size_t>(ab[i] & bb[i]);
  return n;
}

// ---------------------------------------------------------------------------
// PNG

namespace {

struct MemoryReader {
  const unsigned char* data;
  std::size_t size;
  std::size_t offset;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* src = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (src->offset + count > src->size) png_error(png, "unexpected end of file");
  std::memcpy(out, src->data + src->offset, count);
  src->offset += count;
}

void silent_warning(png_structp, png_const_charp) {}

struct DecodedPng {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<unsigned char> pixels;
  char message[256] = {};
};

// Records libpng's message instead of printing it, then unwinds via longjmp.
void record_error(png_structp png, png_const_charp msg) {
  auto* out = static_cast<DecodedPng*>(png_get_error_ptr(png));
  std::snprintf(out->message, sizeof(out->message), "%s", msg);
  png_longjmp(png, 1);
}

// Only plain C state lives across setjmp here.
bool decode_png(const std::vector<unsigned char>& bytes, DecodedPng& out) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    std::snprintf(out.message, sizeof(out.message), "not a PNG file");
    return false;
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &out, record_error, silent_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::snprintf(out.message, sizeof(out.message), "libpng initialisation failed");
    return false;
  }
  MemoryReader reader{bytes.data(), bytes.size(), 0};
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    if (out.message[0] == '\0') std::snprintf(out.message, sizeof(out.message), "corrupt or truncated PNG data");
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &reader, read_from_memory);
  png_read_info(png, info);

  int color_type = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  std::size_t stride = png_get_rowbytes(png, info);
  out.pixels.resize(stride * out.height);
  rows.resize(out.height);
  for (png_uint_32 y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct PngWriteState {
  std::vector<unsigned char> bytes;
};

void write_to_memory(png_structp png, png_bytep data, png_size_t count) {
  auto* st = static_cast<PngWriteState*>(png_get_io_ptr(png));
  st->bytes.insert(st->bytes.end(), data, data + count);
}

void flush_noop(png_structp) {}

bool encode_png(const std::vector<unsigned char>& pixels, png_uint_32 width, png_uint_32 height, int channels,
                PngWriteState& out) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, silent_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  std::vector<png_const_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &out, write_to_memory, flush_noop);
  int color_type = channels == 1 ? PNG_COLOR_TYPE_GRAY
                   : channels == 3 ? PNG_COLOR_TYPE_RGB
                                   : PNG_COLOR_TYPE_RGB_ALPHA;
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * channels;
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

void write_bytes(const std::vector<unsigned char>& pixels, int width, int height, int channels,
                 const std::filesystem::path& path) {
  PngWriteState state;
  if (!encode_png(pixels, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), channels, state))
    throw Error(ErrorKind::io, "PNG encoding failed for " + path.string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(state.bytes.data()), static_cast<std::streamsize>(state.bytes.size()));
  if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

}  // namespace

Image load_png(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  DecodedPng png;
  if (!decode_png(bytes, png)) throw Error(ErrorKind::decode, path.string() + ": " + png.message);
  if (png.width == 0 || png.height == 0) throw Error(ErrorKind::invalid_input, "PNG has zero dimension");

  Image img(static_cast<int>(png.width), static_cast<int>(png.height), png.channels);
  auto& data = img.data();
  if (png.bit_depth == 16) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      unsigned v = (static_cast<unsigned>(png.pixels[2 * i]) << 8) | png.pixels[2 * i + 1];
      data[i] = v / 65535.0;
    }
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = png.pixels[i] / 255.0;
  }
  return img;
}

void save_png(const Image& img, const std::filesystem::path& path) {
  if (img.empty()) throw Error(ErrorKind::invalid_input, "cannot save an empty image");
  std::vector<unsigned char> bytes(img.data().size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    double v = std::clamp(img.data()[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  write_bytes(bytes, img.width(), img.height(), img.channels(), path);
}

BinaryMask load_mask_png(const std::filesystem::path& path, int level, std::string id) {
  Image img = load_png(path);
  BinaryMask m(img.width(), img.height(), level, std::move(id));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      // First channel, binarized at 128/255.
      if (std::lround(img.at(x, y, 0) * 255.0) >= 128) m.set(x, y);
    }
  }
  return m;
}

void save_mask_png(const BinaryMask& mask, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(mask.bits().size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.bits()[i] ? 255 : 0;
  write_bytes(bytes, mask.width(), mask.height(), 1, path);
}

// ---------------------------------------------------------------------------
// Pixel analysis

Image abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw Error(ErrorKind::shape, "abs_diff: image shapes differ");
  Image out(a.width(), a.height(), 1);
  const int ch = a.channels();
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    double s = 0.0;
    for (int c = 0; c < ch; ++c) s += std::abs(ad[p * ch + c] - bd[p * ch + c]);
    od[p] = s / ch;
  }
  return out;
}

namespace {

std::vector<DiffRegion> label_regions(const std::vector<std::uint8_t>& on, int width, int height) {
  std::vector<std::uint8_t> seen(on.size(), 0);
  std::vector<DiffRegion> regions;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < on.size(); ++start) {
    if (!on[start] || seen[start]) continue;
    DiffRegion r;
    r.bbox = {width, height, 0, 0};
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      std::size_t p = stack.back();
      stack.pop_back();
      r.pixels.push_back(p);
      int x = static_cast<int>(p % width);
      int y = static_cast<int>(p / width);
      r.bbox.x0 = std::min(r.bbox.x0, x);
      r.bbox.y0 = std::min(r.bbox.y0, y);
      r.bbox.x1 = std::max(r.bbox.x1, x + 1);
      r.bbox.y1 = std::max(r.bbox.y1, y + 1);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          int nx = x + dx, ny = y + dy;
          if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
          std::size_t q = static_cast<std::size_t>(ny) * width + nx;
          if (on[q] && !seen[q]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
      }
    }
    std::sort(r.pixels.begin(), r.pixels.end());
    r.area = r.pixels.size();
    regions.push_back(std::move(r));
  }
  std::stable_sort(regions.begin(), regions.end(), [](const DiffRegion& a, const DiffRegion& b) {
    if (a.area != b.area) return a.area > b.area;
    if (a.bbox.y0 != b.bbox.y0) return a.bbox.y0 < b.bbox.y0;
    return a.bbox.x0 < b.bbox.x0;
  });
  return regions;
}

}  // namespace

std::vector<DiffRegion> connected_components(const Image& d, double threshold) {
  if (d.channels() != 1) throw Error(ErrorKind::shape, "connected_components expects a single-channel image");
  std::vector<std::uint8_t> on(d.pixel_count());
  for (std::size_t i = 0; i < on.size(); ++i) on[i] = d.data()[i] >= threshold ? 1 : 0;
  return label_regions(on, d.width(), d.height());
}

std::vector<DiffRegion> connected_components(const BinaryMask& m) {
  return label_regions(m.bits(), m.width(), m.height());
}

BinaryMask region_mask(const DiffRegion& region, int width, int height) {
  BinaryMask m(width, height);
  for (std::size_t p : region.pixels) m.bits()[p] = 1;
  return m;
}

}  // namespace layervec
