#include "lfd/evalharness.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numbers>

#include "lfd/errors.hpp"

namespace lfd {

namespace {

constexpr int kPixelChunk = 64;

constexpr int kDiffuseSourceHeight = 32;
constexpr int kDiffuseOutputHeight = 32;
constexpr int kMatteSourceHeight = 64;
constexpr int kMatteOutputHeight = 64;

// Area-weighted box reduction to `height` rows when it divides the input.
EnvMap box_downsample(const EnvMap& env, int height) {
  if (env.height() <= height || env.height() % height != 0) return env;
  const int f = env.height() / height;
  const std::vector<double> dw = solid_angle_weights(env.height());
  EnvMap out(height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < 2 * height; ++x) {
      double acc[3] = {0, 0, 0}, area = 0;
      for (int yy = y * f; yy < (y + 1) * f; ++yy) {
        for (int xx = x * f; xx < (x + 1) * f; ++xx) {
          const Rgb c = env.texel(yy * env.width() + xx);
          for (int ch = 0; ch < 3; ++ch) acc[ch] += c[ch] * dw[yy];
        }
        area += dw[yy] * f;
      }
      out.set_texel(y * 2 * height + x, {acc[0] / area, acc[1] / area, acc[2] / area});
    }
  }
  return out;
}

// exponent 1: out(o) = sum env * max(0, o.w) * dw (cosine-weighted integral).
// exponent e > 1: sum env * lobe * dw / sum lobe * dw with lobe = max(0, o.w)^e,
// evaluated in log space so very sharp lobes do not underflow.
EnvMap prefilter(const EnvMap& env, int source_height, int output_height, int exponent) {
  const EnvMap src = box_downsample(env, source_height);
  const int h = src.height(), w = src.width(), texels = src.texel_count();
  const std::vector<double> dw = solid_angle_weights(h);
  Eigen::MatrixXd dirs(texels, 3), weighted(texels, 3);
  Eigen::VectorXd solid(texels);
  for (int t = 0; t < texels; ++t) {
    const int y = t / w;
    dirs.row(t) = texel_center_dir(t % w, y, h).transpose();
    solid[t] = dw[y];
    const Rgb c = src.texel(t);
    for (int ch = 0; ch < 3; ++ch) weighted(t, ch) = c[ch] * dw[y];
  }

  EnvMap out(output_height);
  const int outputs = out.texel_count();
  for (int begin = 0; begin < outputs; begin += kPixelChunk) {
    const int n = std::min(kPixelChunk, outputs - begin);
    Eigen::MatrixXd o(n, 3);
    for (int i = 0; i < n; ++i) {
      const int t = begin + i;
      o.row(i) = texel_center_dir(t % out.width(), t / out.width(), output_height).transpose();
    }
    const Eigen::ArrayXXd cosine = (o * dirs.transpose()).array();
    Eigen::MatrixXd rgb;
    if (exponent == 1) {
      rgb = cosine.max(0.0).matrix() * weighted;
    } else {
      Eigen::ArrayXXd logl = (cosine > 0.0).select(exponent * cosine.max(1e-300).log(), -1e300);
      const Eigen::ArrayXd peak = logl.rowwise().maxCoeff();
      const Eigen::MatrixXd lobe = (logl.colwise() - peak).exp().matrix();
      rgb = lobe * weighted;
      const Eigen::VectorXd norm = lobe * solid;
      for (int i = 0; i < n; ++i) rgb.row(i) /= norm[i];
    }
    for (int i = 0; i < n; ++i) out.set_texel(begin + i, {rgb(i, 0), rgb(i, 1), rgb(i, 2)});
  }
  return out;
}

void check_pair(const RgbBuffer& pred, const RgbBuffer& gt, const Mask* mask) {
  if (!pred.same_shape(gt)) throw ValidationError("metric inputs differ in size");
  if (mask && (mask->width() != gt.width() || mask->height() != gt.height())) {
    throw ValidationError("metric mask does not match the images");
  }
}

template <typename Fn>
void for_each_pixel(const RgbBuffer& img, const Mask* mask, Fn&& fn) {
  const size_t n = static_cast<size_t>(img.width()) * img.height();
  for (size_t p = 0; p < n; ++p) {
    if (mask && !mask->data()[p]) continue;
    fn(p);
  }
}

std::vector<double> selected_values(const RgbBuffer& img, const Mask* mask) {
  std::vector<double> out;
  for_each_pixel(img, mask, [&](size_t p) {
    for (int c = 0; c < 3; ++c) out.push_back(img.data()[3 * p + c]);
  });
  return out;
}

}  // namespace

Material material(MaterialKind kind) {
  switch (kind) {
    case MaterialKind::kGrayDiffuse:
      return Material::gray_diffuse();
    case MaterialKind::kSilverMatte:
      return Material::silver_matte();
    case MaterialKind::kSilverMirror:
      return Material::silver_mirror();
  }
  return Material::gray_diffuse();
}

std::string material_name(MaterialKind kind) {
  switch (kind) {
    case MaterialKind::kGrayDiffuse:
      return "gray-diffuse";
    case MaterialKind::kSilverMatte:
      return "silver-matte";
    case MaterialKind::kSilverMirror:
      return "silver-mirror";
  }
  return "unknown";
}

SphereImage render_sphere(const EnvMap& env, const Material& mat, int resolution) {
  if (resolution < 1) throw ValidationError("sphere resolution must be positive");
  if (env.height() < 2) throw ValidationError("envmap too small to render");
  SphereImage out{HdrImage(resolution, resolution), Mask(resolution, resolution)};

  std::vector<size_t> pixels;
  std::vector<Vec3> normals;
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const double nx = 2.0 * (x + 0.5) / resolution - 1.0;
      const double ny = 1.0 - 2.0 * (y + 0.5) / resolution;
      const double r2 = nx * nx + ny * ny;
      if (r2 >= 1.0) continue;
      pixels.push_back(static_cast<size_t>(y) * resolution + x);
      normals.emplace_back(nx, ny, std::sqrt(1.0 - r2));
      out.mask.data()[pixels.back()] = 1;
    }
  }
  auto dst = out.image.data();
  auto reflect_view = [](const Vec3& n) { return Vec3(2.0 * n.z() * n - Vec3(0.0, 0.0, 1.0)); };

  if (mat.kind == MaterialKind::kSilverMirror) {
    for (size_t i = 0; i < pixels.size(); ++i) {
      const Rgb c = sample_bilinear(env, reflect_view(normals[i]));
      for (int ch = 0; ch < 3; ++ch) dst[3 * pixels[i] + ch] = static_cast<float>(mat.tint * c[ch]);
    }
    return out;
  }

  // Diffuse and matte shading depend on a single direction (n or r), so
  // both are prefiltered into small envmaps and looked up bilinearly.
  const bool diffuse = mat.kind == MaterialKind::kGrayDiffuse;
  const EnvMap filtered = diffuse ? prefilter(env, kDiffuseSourceHeight, kDiffuseOutputHeight, 1)
                                  : prefilter(env, kMatteSourceHeight, kMatteOutputHeight, mat.phong_exponent);
  const double scale = diffuse ? mat.albedo / std::numbers::pi : mat.tint;
  for (size_t i = 0; i < pixels.size(); ++i) {
    const Rgb c = sample_bilinear(filtered, diffuse ? normals[i] : reflect_view(normals[i]));
    for (int ch = 0; ch < 3; ++ch) dst[3 * pixels[i] + ch] = static_cast<float>(scale * c[ch]);
  }
  return out;
}

double rmse(const RgbBuffer& pred, const RgbBuffer& gt, const Mask* mask) {
  check_pair(pred, gt, mask);
  double sum = 0.0;
  size_t count = 0;
  for_each_pixel(gt, mask, [&](size_t p) {
    for (int c = 0; c < 3; ++c) {
      const double d = static_cast<double>(pred.data()[3 * p + c]) - gt.data()[3 * p + c];
      sum += d * d;
    }
    count += 3;
  });
  return count ? std::sqrt(sum / static_cast<double>(count)) : 0.0;
}

double si_scale(const RgbBuffer& pred, const RgbBuffer& gt, const Mask* mask) {
  check_pair(pred, gt, mask);
  double pg = 0.0, pp = 0.0;
  for_each_pixel(gt, mask, [&](size_t p) {
    for (int c = 0; c < 3; ++c) {
      const double a = pred.data()[3 * p + c];
      pg += a * gt.data()[3 * p + c];
      pp += a * a;
    }
  });
  if (pp <= 0.0) return 0.0;
  return std::max(0.0, pg / pp);
}

double si_rmse(const RgbBuffer& pred, const RgbBuffer& gt, const Mask* mask) {
  const double alpha = si_scale(pred, gt, mask);
  double sum = 0.0;
  size_t count = 0;
  for_each_pixel(gt, mask, [&](size_t p) {
    for (int c = 0; c < 3; ++c) {
      const double d = alpha * pred.data()[3 * p + c] - gt.data()[3 * p + c];
      sum += d * d;
    }
    count += 3;
  });
  return count ? std::sqrt(sum / static_cast<double>(count)) : 0.0;
}

double angular_error(const RgbBuffer& pred, const RgbBuffer& gt, const Mask* mask) {
  check_pair(pred, gt, mask);
  double sum = 0.0;
  size_t count = 0;
  for_each_pixel(gt, mask, [&](size_t p) {
    const Vec3 a(pred.data()[3 * p], pred.data()[3 * p + 1], pred.data()[3 * p + 2]);
    const Vec3 b(gt.data()[3 * p], gt.data()[3 * p + 1], gt.data()[3 * p + 2]);
    if (a.squaredNorm() == 0.0 || b.squaredNorm() == 0.0) return;
    sum += std::atan2(a.cross(b).norm(), a.dot(b));
    ++count;
  });
  return count ? sum / static_cast<double>(count) * 180.0 / std::numbers::pi : 0.0;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (pos - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

double normalized_rmse(const RgbBuffer& pred, const RgbBuffer& gt, const Mask* mask) {
  check_pair(pred, gt, mask);
  auto normalize = [&](const RgbBuffer& img) {
    std::vector<double> v = selected_values(img, mask);
    if (v.empty()) return v;
    const double lo = percentile(v, 0.001);
    const double hi = percentile(v, 0.999);
    for (double& x : v) x = hi > lo ? std::clamp((x - lo) / (hi - lo), 0.0, 1.0) : 0.0;
    return v;
  };
  const std::vector<double> a = normalize(pred);
  const std::vector<double> b = normalize(gt);
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sum / static_cast<double>(a.size()));
}

MetricReport evaluate(std::span<const EnvMap> pred, std::span<const EnvMap> gt, int resolution) {
  if (pred.size() != gt.size()) throw ValidationError("prediction and ground-truth probe counts differ");
  if (pred.empty()) throw ValidationError("no probes to evaluate");
  MetricReport report;
  report.probes = pred.size();
  for (size_t m = 0; m < kAllMaterials.size(); ++m) {
    const Material mat = material(kAllMaterials[m]);
    MaterialMetrics& acc = report.materials[m];
    for (size_t i = 0; i < pred.size(); ++i) {
      const SphereImage p = render_sphere(pred[i], mat, resolution);
      const SphereImage g = render_sphere(gt[i], mat, resolution);
      acc.si_rmse += si_rmse(p.image, g.image, &g.mask);
      acc.angular_error_deg += angular_error(p.image, g.image, &g.mask);
      acc.normalized_rmse += normalized_rmse(p.image, g.image, &g.mask);
    }
    const double n = static_cast<double>(pred.size());
    acc.si_rmse /= n;
    acc.angular_error_deg /= n;
    acc.normalized_rmse /= n;
  }
  return report;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["probes"] = probes;
  j["si_rmse_scale"] = "global";
  j["region"] = "sphere-disc";
  nlohmann::ordered_json mats;
  for (size_t m = 0; m < kAllMaterials.size(); ++m) {
    mats[material_name(kAllMaterials[m])] = {{"si_rmse", materials[m].si_rmse},
                                             {"angular_error_deg", materials[m].angular_error_deg},
                                             {"normalized_rmse", materials[m].normalized_rmse}};
  }
  j["materials"] = mats;
  return j.dump(2);
}

}  // namespace lfd
