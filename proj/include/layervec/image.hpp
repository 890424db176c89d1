#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace layervec {

/// Row-major raster with samples in [0,1]. Channels: 1 (scalar maps), 3 (RGB) or 4 (RGBA).
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0);
  Image(int width, int height, int channels, std::vector<double> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const { return data_.empty(); }

  double& at(int x, int y, int c) { return data_[index(x, y, c)]; }
  double at(int x, int y, int c) const { return data_[index(x, y, c)]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  /// Throws invalid_input unless every sample is finite and inside [0,1].
  void validate() const;

  bool operator==(const Image& other) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

struct BoundingBox {
  int x0 = 0;  // inclusive
  int y0 = 0;
  int x1 = 0;  // exclusive
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const BoundingBox&) const = default;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, int level = 0, std::string id = {});

  int width() const { return width_; }
  int height() const { return height_; }
  int level() const { return level_; }
  const std::string& id() const { return id_; }
  void set_level(int level) { level_ = level; }
  void set_id(std::string id) { id_ = std::move(id); }

  bool get(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v = true) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }

  const std::vector<std::uint8_t>& bits() const { return bits_; }
  std::vector<std::uint8_t>& bits() { return bits_; }

  std::size_t area() const;
  /// Tight box around set pixels; all-zero box for an empty mask.
  BoundingBox bbox() const;
  bool same_dims(const BinaryMask& o) const { return width_ == o.width_ && height_ == o.height_; }

 private:
  int width_ = 0;
  int height_ = 0;
  int level_ = 0;
  std::string id_;
  std::vector<std::uint8_t> bits_;
};

/// Number of pixels set in both masks.
std::size_t shared_pixels(const BinaryMask& a, const BinaryMask& b);

/// 8-connected pixel set. Pixels are linear indices y*width+x in raster order.
struct DiffRegion {
  std::vector<std::size_t> pixels;
  std::size_t area = 0;
  BoundingBox bbox;
};

Image load_png(const std::filesystem::path& path);
void save_png(const Image& img, const std::filesystem::path& path);

BinaryMask load_mask_png(const std::filesystem::path& path, int level = 0, std::string id = {});
void save_mask_png(const BinaryMask& mask, const std::filesystem::path& path);

/// Single-channel map of the per-pixel mean absolute channel difference.
Image abs_diff(const Image& a, const Image& b);

/// Maximal 8-connected regions of pixels with d >= threshold, largest first.
/// Ties break on bounding-box top, then left.
std::vector<DiffRegion> connected_components(const Image& d, double threshold);

/// Same as above on a binary pixel set.
std::vector<DiffRegion> connected_components(const BinaryMask& m);

BinaryMask region_mask(const DiffRegion& region, int width, int height);

}  // namespace layervec
