#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfd/imagehdr.hpp"
#include "lfd/lightfield.hpp"
#include "lfd/optimizer.hpp"
#include "lfd/oracle.hpp"
#include "lfd/probe.hpp"
#include "lfd/rng.hpp"
#include "lfd/scenegen.hpp"

namespace lfd {

// Linear sweeps over iterations 0..total-1: ev from 0 down to ev_min and
// tau_min from 1 down to 0, hitting both endpoints exactly.
struct Schedule {
  int total = 1;
  double ev_min = kDefaultEvMin;
  static constexpr double kTauMax = 1.0;

  double fraction(int s) const;
  double ev(int s) const { return 0.0 + ev_min * fraction(s); }
  double tau_min(int s) const { return 1.0 - fraction(s); }
};

struct LossWeights {
  double l2 = 1.0;
  double perceptual = 1.0;
};

struct LossResult {
  double value = 0.0;
  double l2 = 0.0;
  double perceptual = 0.0;
  size_t masked_pixels = 0;
  std::vector<double> grad;  // dL/d(rendered), same layout as the image
};

// Masked mean squared error plus a multi-scale gradient-difference term
// (mean L1 of finite differences at strides 1, 2 and 4). The target is a
// constant: no gradient flows into it.
LossResult probe_loss(std::span<const double> rendered, std::span<const double> target, const Mask& mask,
                      const LossWeights& weights = {});
LossResult probe_loss(const LdrImage& rendered, const LdrImage& target, const Mask& mask,
                      const LossWeights& weights = {});

struct ProbeSampling {
  double near_fraction = 0.3;
  double far_fraction = 0.9;
};

// N balls at uniformly drawn pixels, unprojected to a depth strictly in
// front of the background.
ProbeSet sample_probes(const Camera& camera, const DepthMap& depth, int n, Rng& rng,
                       const ProbeSampling& sampling = {});

struct FrameData {
  LdrImage frame;
  DepthMap depth;
  Pose pose;
};

struct RenderOptions {
  int env_height = 32;
  int supersample = 4;
  double ev = 0.0;
  double gamma = kDefaultGamma;
};

// Composite of light-field-shaded probes over a frame, with the tape needed
// to backpropagate an image-space gradient into the network parameters.
template <typename Scalar>
class ProbeRender {
 public:
  ProbeRender(const LightField& field, const ProbeSet& probes, const FrameData& frame, int t,
              const RenderOptions& options);

  const std::vector<double>& composited() const { return composited_; }
  LdrImage composited_image() const;
  const MaskAndDepth& mask_and_depth() const { return mask_and_depth_; }

  std::vector<double> backward(std::span<const double> image_grad) const;

 private:
  struct Layer {
    uint32_t ball;
    uint32_t pixel;  // index inside the ball footprint
    double coef;     // alpha times transmittance of nearer layers
  };

  const LightField& field_;
  RenderOptions options_;
  int width_ = 0;
  std::vector<BallFootprint> footprints_;
  std::vector<std::vector<uint32_t>> local_taps_;  // texel slot per tap
  std::vector<size_t> query_offset_;
  ForwardPass<Scalar> pass_;
  std::vector<std::vector<double>> hdr_;  // per ball, RGB per footprint pixel
  std::vector<std::vector<Layer>> layers_;  // per frame pixel
  std::vector<double> composited_;
  MaskAndDepth mask_and_depth_;
};

extern template class ProbeRender<float>;
extern template class ProbeRender<double>;

struct OracleConfig {
  enum class Kind { kSynthetic, kFile };
  Kind kind = Kind::kSynthetic;
  double sigma = 0.02;
  int env_height = 128;
  int supersample = 4;
  std::filesystem::path exchange_dir;
  double timeout_s = 300.0;
  double poll_interval_s = 0.01;
};

struct RunConfig {
  int iterations = 4000;
  int num_balls = 9;
  uint64_t seed = 0;
  double ev_min = kDefaultEvMin;
  double gamma = kDefaultGamma;
  double cfg_scale = kDefaultCfgScale;
  int train_env_height = 32;
  int supersample = 4;
  LossWeights loss;
  std::optional<double> tau_override;
  ProbeSampling sampling;
  AdamConfig adam;
  Architecture arch;
  int checkpoint_every = 500;
  OracleConfig oracle;

  // Frame source: an analytic scene, or explicit frame/depth files plus camera.
  std::optional<SceneSpec> scene;
  std::vector<std::filesystem::path> frame_paths;
  std::vector<std::filesystem::path> depth_paths;
  std::optional<Camera> camera;

  void validate() const;
};

// Frames and depth maps for t = 1..T.
std::vector<FrameData> load_frames(const RunConfig& config);
Camera run_camera(const RunConfig& config);

// Bounding box of the camera frusta up to the deepest background point,
// grown by `margin` of its extent (split between both sides).
DomainBox frustum_domain_box(const Camera& camera, std::span<const FrameData> frames, double margin = 0.1);

struct StepLog {
  int s = 0;
  int t = 1;
  double ev = 0.0;
  double tau_min = 1.0;
  double tau = 1.0;
  int k = 0;
  double lr = 0.0;
  bool skipped = false;
  double loss = 0.0;
  double l2 = 0.0;
  double perceptual = 0.0;
  std::string error;
};

class Distiller {
 public:
  Distiller(RunConfig config, std::vector<FrameData> frames, Camera camera, std::unique_ptr<Oracle> oracle);

  // Runs iteration s (0 <= s < iterations). Oracle failures skip the
  // iteration; more than three in a row abort with the last error.
  StepLog step(int s);

  const LightField& field() const { return field_; }
  const Schedule& schedule() const { return schedule_; }
  int frame_count() const { return static_cast<int>(frames_.size()); }

 private:
  RunConfig config_;
  std::vector<FrameData> frames_;
  Camera camera_;
  std::unique_ptr<Oracle> oracle_;
  Schedule schedule_;
  LightField field_;
  Adam adam_;
  Rng frame_rng_;
  Rng probe_rng_;
  Rng tau_rng_;
  int consecutive_failures_ = 0;
};

struct DistillReport {
  std::vector<StepLog> steps;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path final_checkpoint;
};

std::unique_ptr<Oracle> make_oracle(const RunConfig& config);

// Full run: writes checkpoints under out_dir/checkpoints, the final
// checkpoint as out_dir/final.ckpt and the report as out_dir/report.json.
DistillReport distill(const RunConfig& config, const std::filesystem::path& out_dir,
                      std::unique_ptr<Oracle> oracle = nullptr);

void write_report(const DistillReport& report, const std::filesystem::path& path);

}  // namespace lfd
