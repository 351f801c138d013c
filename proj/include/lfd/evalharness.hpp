#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "lfd/envmap.hpp"
#include "lfd/imagehdr.hpp"

namespace lfd {

enum class MaterialKind { kGrayDiffuse, kSilverMatte, kSilverMirror };

struct Material {
  MaterialKind kind = MaterialKind::kGrayDiffuse;
  double albedo = 0.5;
  double tint = 0.9;
  int phong_exponent = 50;

  static Material gray_diffuse() { return {MaterialKind::kGrayDiffuse, 0.5, 0.0, 0}; }
  static Material silver_matte() { return {MaterialKind::kSilverMatte, 0.0, 0.9, 50}; }
  static Material silver_mirror() { return {MaterialKind::kSilverMirror, 0.0, 1.0, 0}; }
};

constexpr std::array<MaterialKind, 3> kAllMaterials = {MaterialKind::kGrayDiffuse, MaterialKind::kSilverMatte,
                                                       MaterialKind::kSilverMirror};
Material material(MaterialKind kind);
std::string material_name(MaterialKind kind);

constexpr int kSphereResolution = 256;

struct SphereImage {
  HdrImage image;
  Mask mask;  // pixels on the sphere disc
};

// Orthographic view along -Z with +Y up and +X to the right; only the
// visible hemisphere (n.z > 0) lands on the disc. Pixels off the disc are 0.
//   diffuse: albedo/pi * sum env * max(0, n.w) * dw
//   matte:   tint * sum env * lobe * dw / sum lobe * dw, lobe = max(0, w.r)^e
// Both integrals are tabulated over directions at reduced resolution (source
// 32 rows for diffuse, 64 for matte) and interpolated per pixel.
//   mirror:  tint * env(r), r the reflected view ray
SphereImage render_sphere(const EnvMap& env, const Material& material, int resolution = kSphereResolution);

// Metrics over RGB images; the optional mask selects pixels.
double rmse(const RgbBuffer& pred, const RgbBuffer& gt, const Mask* mask = nullptr);
// Global scale minimizing RMSE(alpha * pred, gt), clamped at 0.
double si_scale(const RgbBuffer& pred, const RgbBuffer& gt, const Mask* mask = nullptr);
double si_rmse(const RgbBuffer& pred, const RgbBuffer& gt, const Mask* mask = nullptr);
double angular_error(const RgbBuffer& pred, const RgbBuffer& gt, const Mask* mask = nullptr);
double normalized_rmse(const RgbBuffer& pred, const RgbBuffer& gt, const Mask* mask = nullptr);

// q in [0,1]; linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

struct MaterialMetrics {
  double si_rmse = 0.0;
  double angular_error_deg = 0.0;
  double normalized_rmse = 0.0;
};

struct MetricReport {
  std::array<MaterialMetrics, 3> materials{};  // indexed like kAllMaterials
  size_t probes = 0;

  const MaterialMetrics& at(MaterialKind kind) const { return materials[static_cast<size_t>(kind)]; }
  std::string to_json() const;
};

// Metrics are taken over the sphere disc and averaged over probes.
MetricReport evaluate(std::span<const EnvMap> pred, std::span<const EnvMap> gt, int resolution = kSphereResolution);

}  // namespace lfd
