#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

namespace lfd {

using Rgb = std::array<double, 3>;

constexpr double kDefaultGamma = 2.4;
constexpr double kDefaultEvMin = -5.0;
// Half an 8-bit code above the top code.
constexpr double kSaturationEpsilon = 1.0 / 512.0;

// Row-major interleaved RGB float storage shared by the HDR and LDR types.
class RgbBuffer {
 public:
  RgbBuffer() = default;
  RgbBuffer(int width, int height, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  size_t pixel_count() const { return static_cast<size_t>(width_) * height_; }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  float& at(int x, int y, int c) { return data_[index(x, y) + c]; }
  float at(int x, int y, int c) const { return data_[index(x, y) + c]; }
  Rgb pixel(int x, int y) const;
  void set_pixel(int x, int y, const Rgb& v);

  bool same_shape(const RgbBuffer& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

 protected:
  size_t index(int x, int y) const { return (static_cast<size_t>(y) * width_ + x) * 3; }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

// Linear radiance, finite and non-negative.
class HdrImage : public RgbBuffer {
 public:
  using RgbBuffer::RgbBuffer;
  // Throws ValidationError on a non-finite or negative channel.
  void validate() const;
};

// Display-referred values in [0,1].
class LdrImage : public RgbBuffer {
 public:
  using RgbBuffer::RgbBuffer;
  void validate() const;
};

// Single-channel float image (metric depth along the camera axis).
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height, float fill);

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float& at(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }
  float at(int x, int y) const { return data_[static_cast<size_t>(y) * width_ + x]; }
  void validate() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

// Binary mask, one byte per pixel (0 or 1).
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height) : width_(width), height_(height), data_(size_t(width) * height, 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<uint8_t> data() { return data_; }
  std::span<const uint8_t> data() const { return data_; }
  uint8_t& at(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }
  uint8_t at(int x, int y) const { return data_[static_cast<size_t>(y) * width_ + x]; }
  size_t count() const;

  bool operator==(const Mask&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<uint8_t> data_;
};

class ExposureValue {
 public:
  // Throws ValidationError unless ev_min < 0 and ev_min <= ev <= 0.
  explicit ExposureValue(double ev = 0.0, double ev_min = kDefaultEvMin);

  double ev() const { return ev_; }
  double ev_min() const { return ev_min_; }
  double scale() const;  // 2^ev

 private:
  double ev_;
  double ev_min_;
};

// clamp(2^ev * v, 0, 1)^(1/gamma)
double tonemap_value(double v, double ev, double gamma);
// Derivative of tonemap_value with respect to v; zero where clamped.
double tonemap_derivative(double v, double ev, double gamma);

LdrImage tonemap(const HdrImage& img, const ExposureValue& ev, double gamma = kDefaultGamma);

struct InverseTonemapResult {
  HdrImage image;
  // Per pixel and channel (same layout as image data): 1 where the LDR value
  // is within kSaturationEpsilon of 1.
  std::vector<uint8_t> saturated;
};

InverseTonemapResult inverse_tonemap(const LdrImage& img, const ExposureValue& ev,
                                     double gamma = kDefaultGamma);

struct Bracket {
  LdrImage image;
  ExposureValue ev;
};

// Hat-weighted merge of inverse-tonemapped brackets, per channel.
HdrImage merge_exposures(std::span<const Bracket> brackets, double gamma = kDefaultGamma);

// Triangular weight 1-|2v-1|, zero at saturation.
double merge_weight(double v);

// --- File I/O -------------------------------------------------------------

using AnyImage = std::variant<HdrImage, LdrImage>;

// Dispatches on extension: .pfm -> HdrImage, .png -> LdrImage.
AnyImage read_image(const std::filesystem::path& path);
void write_image(const HdrImage& img, const std::filesystem::path& path);
void write_image(const LdrImage& img, const std::filesystem::path& path);

HdrImage read_pfm(const std::filesystem::path& path);
void write_pfm(const HdrImage& img, const std::filesystem::path& path);
DepthMap read_depth_pfm(const std::filesystem::path& path);
void write_depth_pfm(const DepthMap& depth, const std::filesystem::path& path);

LdrImage read_png(const std::filesystem::path& path);
void write_png(const LdrImage& img, const std::filesystem::path& path);
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const Mask& mask, const std::filesystem::path& path);

}  // namespace lfd
