#include "lfd/imagehdr.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "lfd/errors.hpp"

namespace lfd {

RgbBuffer::RgbBuffer(int width, int height, float fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) {
    throw ValidationError("image dimensions must be non-negative");
  }
  data_.assign(static_cast<size_t>(width) * height * 3, fill);
}

Rgb RgbBuffer::pixel(int x, int y) const {
  const size_t i = index(x, y);
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void RgbBuffer::set_pixel(int x, int y, const Rgb& v) {
  const size_t i = index(x, y);
  for (int c = 0; c < 3; ++c) data_[i + c] = static_cast<float>(v[c]);
}

void HdrImage::validate() const {
  for (size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i]) || data_[i] < 0.0f) {
      throw ValidationError("HDR pixel " + std::to_string(i / 3) + " is not finite and non-negative");
    }
  }
}

void LdrImage::validate() const {
  for (size_t i = 0; i < data_.size(); ++i) {
    if (!(data_[i] >= 0.0f && data_[i] <= 1.0f)) {
      throw ValidationError("LDR pixel " + std::to_string(i / 3) + " is outside [0,1]");
    }
  }
}

DepthMap::DepthMap(int width, int height, float fill)
    : width_(width), height_(height), data_(static_cast<size_t>(width) * height, fill) {}

void DepthMap::validate() const {
  for (float d : data_) {
    if (!std::isfinite(d) || d <= 0.0f) throw ValidationError("depth must be finite and positive");
  }
}

size_t Mask::count() const {
  return static_cast<size_t>(std::count_if(data_.begin(), data_.end(), [](uint8_t v) { return v != 0; }));
}

ExposureValue::ExposureValue(double ev, double ev_min) : ev_(ev), ev_min_(ev_min) {
  if (!(ev_min < 0.0)) throw ValidationError("ev_min must be negative");
  if (!(ev >= ev_min && ev <= 0.0)) {
    throw ValidationError("ev " + std::to_string(ev) + " outside [" + std::to_string(ev_min) + ", 0]");
  }
}

double ExposureValue::scale() const { return std::exp2(ev_); }

double tonemap_value(double v, double ev, double gamma) {
  const double scaled = std::clamp(std::exp2(ev) * v, 0.0, 1.0);
  return std::pow(scaled, 1.0 / gamma);
}

double tonemap_derivative(double v, double ev, double gamma) {
  const double s = std::exp2(ev);
  const double scaled = s * v;
  if (scaled <= 0.0 || scaled >= 1.0) return 0.0;
  return s / gamma * std::pow(scaled, 1.0 / gamma - 1.0);
}

LdrImage tonemap(const HdrImage& img, const ExposureValue& ev, double gamma) {
  if (!(gamma > 0.0)) throw ValidationError("gamma must be positive");
  for (float v : img.data()) {
    if (!std::isfinite(v)) throw ValidationError("tonemap input contains a non-finite pixel");
  }
  LdrImage out(img.width(), img.height());
  auto src = img.data();
  auto dst = out.data();
  for (size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<float>(tonemap_value(src[i], ev.ev(), gamma));
  }
  return out;
}

InverseTonemapResult inverse_tonemap(const LdrImage& img, const ExposureValue& ev, double gamma) {
  if (!(gamma > 0.0)) throw ValidationError("gamma must be positive");
  img.validate();
  InverseTonemapResult result{HdrImage(img.width(), img.height()),
                              std::vector<uint8_t>(img.data().size(), 0)};
  const double inv_scale = 1.0 / ev.scale();
  auto src = img.data();
  auto dst = result.image.data();
  for (size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<float>(std::pow(static_cast<double>(src[i]), gamma) * inv_scale);
    result.saturated[i] = src[i] >= 1.0 - kSaturationEpsilon ? 1 : 0;
  }
  return result;
}

double merge_weight(double v) {
  if (v >= 1.0 - kSaturationEpsilon) return 0.0;
  return std::clamp(1.0 - std::abs(2.0 * v - 1.0), 0.0, 1.0);
}

HdrImage merge_exposures(std::span<const Bracket> brackets, double gamma) {
  if (brackets.empty()) throw ValidationError("merge_exposures needs at least one bracket");
  const auto& first = brackets.front().image;
  for (size_t i = 0; i < brackets.size(); ++i) {
    if (!brackets[i].image.same_shape(first)) throw ValidationError("bracket dimension mismatch");
    for (size_t j = 0; j < i; ++j) {
      if (brackets[i].ev.ev() == brackets[j].ev.ev()) throw ValidationError("bracket ev values must be distinct");
    }
  }

  std::vector<InverseTonemapResult> linear;
  linear.reserve(brackets.size());
  for (const auto& b : brackets) linear.push_back(inverse_tonemap(b.image, b.ev, gamma));

  // Fallback order: lowest ev for fully saturated samples, highest ev
  // (finest quantization of dark values) when every unsaturated weight is 0.
  size_t lowest = 0, highest = 0;
  for (size_t i = 1; i < brackets.size(); ++i) {
    if (brackets[i].ev.ev() < brackets[lowest].ev.ev()) lowest = i;
    if (brackets[i].ev.ev() > brackets[highest].ev.ev()) highest = i;
  }

  HdrImage out(first.width(), first.height());
  auto dst = out.data();
  for (size_t i = 0; i < dst.size(); ++i) {
    double wsum = 0.0, acc = 0.0;
    bool any_unsaturated = false;
    for (size_t b = 0; b < brackets.size(); ++b) {
      if (linear[b].saturated[i]) continue;
      any_unsaturated = true;
      const double w = merge_weight(brackets[b].image.data()[i]);
      wsum += w;
      acc += w * linear[b].image.data()[i];
    }
    if (wsum > 0.0) {
      dst[i] = static_cast<float>(acc / wsum);
    } else if (!any_unsaturated) {
      dst[i] = linear[lowest].image.data()[i];
    } else {
      size_t pick = highest;
      for (size_t b = 0; b < brackets.size(); ++b) {
        if (!linear[b].saturated[i] && (linear[pick].saturated[i] || brackets[b].ev.ev() > brackets[pick].ev.ev())) {
          pick = b;
        }
      }
      dst[i] = linear[pick].image.data()[i];
    }
  }
  return out;
}

// --- PFM -------------------------------------------------------------------

namespace {

struct PfmHeader {
  int channels = 0;
  int width = 0;
  int height = 0;
  bool little_endian = true;
};

std::string read_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
    } else {
      tok.push_back(c);
    }
  }
  return tok;
}

PfmHeader read_pfm_header(std::istream& in, const std::filesystem::path& path) {
  PfmHeader h;
  const std::string magic = read_token(in);
  if (magic == "PF") {
    h.channels = 3;
  } else if (magic == "Pf") {
    h.channels = 1;
  } else {
    throw FormatError("malformed PFM header (bad magic) in " + path.string());
  }
  try {
    h.width = std::stoi(read_token(in));
    h.height = std::stoi(read_token(in));
    // The scale token is terminated by exactly one whitespace byte, which
    // read_token consumes.
    const double scale = std::stod(read_token(in));
    if (scale == 0.0) throw FormatError("PFM scale must be non-zero");
    h.little_endian = scale < 0.0;
  } catch (const std::logic_error&) {
    throw FormatError("malformed PFM header in " + path.string());
  }
  if (h.width <= 0 || h.height <= 0) throw FormatError("malformed PFM dimensions in " + path.string());
  return h;
}

std::vector<float> read_pfm_payload(std::istream& in, const PfmHeader& h, const std::filesystem::path& path) {
  const size_t row = static_cast<size_t>(h.width) * h.channels;
  std::vector<float> raw(row * h.height);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != raw.size() * sizeof(float)) {
    throw FormatError("truncated PFM payload in " + path.string());
  }
  const bool host_little = std::endian::native == std::endian::little;
  if (host_little != h.little_endian) {
    for (float& f : raw) {
      uint32_t u;
      std::memcpy(&u, &f, 4);
      u = __builtin_bswap32(u);
      std::memcpy(&f, &u, 4);
    }
  }
  // Rows are stored bottom-to-top.
  std::vector<float> out(raw.size());
  for (int y = 0; y < h.height; ++y) {
    std::copy_n(raw.begin() + static_cast<ptrdiff_t>((h.height - 1 - y) * row), row,
                out.begin() + static_cast<ptrdiff_t>(y * row));
  }
  return out;
}

void write_pfm_raw(const std::filesystem::path& path, std::span<const float> data, int width, int height,
                   int channels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const bool host_little = std::endian::native == std::endian::little;
  out << (channels == 3 ? "PF" : "Pf") << '\n' << width << ' ' << height << '\n' << (host_little ? "-1.0" : "1.0") << '\n';
  const size_t row = static_cast<size_t>(width) * channels;
  for (int y = height - 1; y >= 0; --y) {
    out.write(reinterpret_cast<const char*>(data.data() + y * row), static_cast<std::streamsize>(row * sizeof(float)));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::string lowercase_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

HdrImage read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const PfmHeader h = read_pfm_header(in, path);
  const auto payload = read_pfm_payload(in, h, path);
  HdrImage img(h.width, h.height);
  auto dst = img.data();
  if (h.channels == 3) {
    std::copy(payload.begin(), payload.end(), dst.begin());
  } else {
    for (size_t i = 0; i < payload.size(); ++i) dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = payload[i];
  }
  return img;
}

void write_pfm(const HdrImage& img, const std::filesystem::path& path) {
  write_pfm_raw(path, img.data(), img.width(), img.height(), 3);
}

DepthMap read_depth_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const PfmHeader h = read_pfm_header(in, path);
  const auto payload = read_pfm_payload(in, h, path);
  DepthMap depth(h.width, h.height, 0.0f);
  auto dst = depth.data();
  for (size_t i = 0; i < dst.size(); ++i) dst[i] = payload[i * h.channels];
  return depth;
}

void write_depth_pfm(const DepthMap& depth, const std::filesystem::path& path) {
  write_pfm_raw(path, depth.data(), depth.width(), depth.height(), 1);
}

// --- PNG -------------------------------------------------------------------

namespace {

std::vector<uint8_t> read_png_rgb8(const std::filesystem::path& path, int& width, int& height) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    if (!std::filesystem::exists(path)) throw IoError("cannot open " + path.string());
    throw FormatError("malformed PNG " + path.string() + ": " + msg);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("malformed PNG " + path.string() + ": " + msg);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return buf;
}

void write_png_rgb8(const std::filesystem::path& path, std::span<const uint8_t> rgb, int width, int height) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("failed writing PNG " + path.string() + ": " + msg);
  }
}

}  // namespace

LdrImage read_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto buf = read_png_rgb8(path, w, h);
  LdrImage img(w, h);
  auto dst = img.data();
  for (size_t i = 0; i < buf.size(); ++i) dst[i] = static_cast<float>(buf[i] / 255.0);
  return img;
}

void write_png(const LdrImage& img, const std::filesystem::path& path) {
  std::vector<uint8_t> buf(img.data().size());
  auto src = img.data();
  for (size_t i = 0; i < buf.size(); ++i) {
    buf[i] = static_cast<uint8_t>(std::lround(std::clamp(static_cast<double>(src[i]), 0.0, 1.0) * 255.0));
  }
  write_png_rgb8(path, buf, img.width(), img.height());
}

Mask read_mask_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto buf = read_png_rgb8(path, w, h);
  Mask mask(w, h);
  auto dst = mask.data();
  for (size_t i = 0; i < dst.size(); ++i) dst[i] = buf[3 * i] >= 128 ? 1 : 0;
  return mask;
}

void write_mask_png(const Mask& mask, const std::filesystem::path& path) {
  std::vector<uint8_t> buf(mask.data().size() * 3);
  auto src = mask.data();
  for (size_t i = 0; i < src.size(); ++i) buf[3 * i] = buf[3 * i + 1] = buf[3 * i + 2] = src[i] ? 255 : 0;
  write_png_rgb8(path, buf, mask.width(), mask.height());
}

AnyImage read_image(const std::filesystem::path& path) {
  const std::string ext = lowercase_extension(path);
  if (ext == ".pfm") return read_pfm(path);
  if (ext == ".png") return read_png(path);
  throw IoError("unsupported image extension: " + path.string());
}

void write_image(const HdrImage& img, const std::filesystem::path& path) { write_pfm(img, path); }
void write_image(const LdrImage& img, const std::filesystem::path& path) { write_png(img, path); }

}  // namespace lfd
