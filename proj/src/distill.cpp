#include "lfd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <type_traits>

#include "lfd/errors.hpp"

namespace lfd {

namespace fs = std::filesystem;

double Schedule::fraction(int s) const {
  if (total <= 1) return 0.0;
  return static_cast<double>(s) / static_cast<double>(total - 1);
}

// --- Loss ------------------------------------------------------------------

LossResult probe_loss(std::span<const double> rendered, std::span<const double> target, const Mask& mask,
                      const LossWeights& weights) {
  const int w = mask.width(), h = mask.height();
  const size_t n = static_cast<size_t>(w) * h * 3;
  if (rendered.size() != n || target.size() != n) throw ValidationError("loss inputs do not match the mask");
  LossResult r;
  r.grad.assign(n, 0.0);
  r.masked_pixels = mask.count();
  if (r.masked_pixels == 0) return r;

  const double l2_norm = 1.0 / (3.0 * static_cast<double>(r.masked_pixels));
  for (size_t p = 0; p < mask.data().size(); ++p) {
    if (!mask.data()[p]) continue;
    for (int c = 0; c < 3; ++c) {
      const double diff = rendered[3 * p + c] - target[3 * p + c];
      r.l2 += diff * diff * l2_norm;
      r.grad[3 * p + c] += weights.l2 * 2.0 * diff * l2_norm;
    }
  }

  constexpr int kStrides[] = {1, 2, 4};
  constexpr double kScales = 3.0;
  for (int stride : kStrides) {
    size_t pairs = 0;
    auto visit = [&](auto&& fn) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!mask.at(x, y)) continue;
          const size_t a = static_cast<size_t>(y) * w + x;
          if (x + stride < w && mask.at(x + stride, y)) fn(a, a + stride);
          if (y + stride < h && mask.at(x, y + stride)) fn(a, a + static_cast<size_t>(stride) * w);
        }
      }
    };
    visit([&](size_t, size_t) { ++pairs; });
    if (pairs == 0) continue;
    const double norm = 1.0 / (kScales * 3.0 * static_cast<double>(pairs));
    visit([&](size_t a, size_t b) {
      for (int c = 0; c < 3; ++c) {
        const double d = (rendered[3 * b + c] - rendered[3 * a + c]) - (target[3 * b + c] - target[3 * a + c]);
        r.perceptual += std::abs(d) * norm;
        const double g = weights.perceptual * norm * ((d > 0) - (d < 0));
        r.grad[3 * b + c] += g;
        r.grad[3 * a + c] -= g;
      }
    });
  }
  r.value = weights.l2 * r.l2 + weights.perceptual * r.perceptual;
  return r;
}

LossResult probe_loss(const LdrImage& rendered, const LdrImage& target, const Mask& mask, const LossWeights& weights) {
  if (!rendered.same_shape(target)) throw ValidationError("loss images differ in size");
  std::vector<double> a(rendered.data().begin(), rendered.data().end());
  std::vector<double> b(target.data().begin(), target.data().end());
  return probe_loss(a, b, mask, weights);
}

// --- Probe sampling --------------------------------------------------------

ProbeSet sample_probes(const Camera& camera, const DepthMap& depth, int n, Rng& rng, const ProbeSampling& sampling) {
  if (n < 1) throw ValidationError("need at least one probe");
  if (depth.width() != camera.width || depth.height() != camera.height) {
    throw ValidationError("depth map does not match the camera");
  }
  const double min_depth = 2.0 * kNearPlane;
  if (std::none_of(depth.data().begin(), depth.data().end(),
                   [&](float d) { return std::isfinite(d) && d >= min_depth; })) {
    throw ValidationError("degenerate depth map: no pixel deep enough to hold a probe");
  }
  ProbeSet set{{}, camera, depth};
  std::uniform_real_distribution<double> ux(0.0, camera.width);
  std::uniform_real_distribution<double> uy(0.0, camera.height);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int max_attempts = 1000 * n;
  for (int attempt = 0; static_cast<int>(set.balls.size()) < n; ++attempt) {
    if (attempt >= max_attempts) throw ValidationError("could not place probes in this depth map");
    const double u = ux(rng);
    const double v = uy(rng);
    const int px = std::min(static_cast<int>(u), camera.width - 1);
    const int py = std::min(static_cast<int>(v), camera.height - 1);
    const double d = depth.at(px, py);
    if (!std::isfinite(d) || d < min_depth) continue;
    const double f = sampling.near_fraction + (sampling.far_fraction - sampling.near_fraction) * unit(rng);
    const double z = f * d;
    Ball ball{camera.ray(u, v) * z, 0.0};
    ball.radius = size_ball(camera, ball.center);
    if (!(ball.center.z() - ball.radius > kNearPlane)) continue;
    set.balls.push_back(ball);
  }
  return set;
}

// --- Differentiable probe rendering ----------------------------------------

template <typename Scalar>
ProbeRender<Scalar>::ProbeRender(const LightField& field, const ProbeSet& probes, const FrameData& frame, int t,
                                 const RenderOptions& options)
    : field_(field), options_(options), width_(probes.camera.width) {
  const Camera& cam = probes.camera;
  if (frame.frame.width() != cam.width || frame.frame.height() != cam.height) {
    throw ValidationError("frame does not match the camera");
  }
  mask_and_depth_ = project_mask_and_depth(probes);

  const int env_h = options.env_height;
  const int env_w = 2 * env_h;
  FootprintOptions fo;
  fo.supersample = options.supersample;
  fo.background_depth = &frame.depth;
  fo.pose = frame.pose;

  std::vector<int32_t> slot(static_cast<size_t>(env_w) * env_h, -1);
  std::vector<int32_t> used;
  std::vector<Query> queries;
  for (const Ball& ball : probes.balls) {
    const BallFootprint& fp = footprints_.emplace_back(trace_ball_footprint(ball, cam, env_h, fo));
    query_offset_.push_back(queries.size());
    const Vec3 x_world = frame.pose.point_to_world(ball.center);
    for (int32_t idx : used) slot[idx] = -1;
    used.clear();
    auto& local = local_taps_.emplace_back(fp.taps.size());
    for (size_t k = 0; k < fp.taps.size(); ++k) {
      const int idx = fp.taps[k].index;
      if (slot[idx] < 0) {
        slot[idx] = static_cast<int32_t>(used.size());
        used.push_back(idx);
        queries.push_back({x_world, static_cast<double>(t), texel_center_dir(idx % env_w, idx / env_w, env_h)});
      }
      local[k] = static_cast<uint32_t>(slot[idx]);
    }
  }
  pass_ = field.forward<Scalar>(queries);

  hdr_.resize(footprints_.size());
  for (size_t b = 0; b < footprints_.size(); ++b) {
    const BallFootprint& fp = footprints_[b];
    auto& hdr = hdr_[b];
    hdr.assign(fp.pixel_count() * 3, 0.0);
    const double* radiance = pass_.radiance.data() + 3 * query_offset_[b];
    for (size_t i = 0; i < fp.pixel_count(); ++i) {
      for (uint32_t k = fp.offsets[i]; k < fp.offsets[i + 1]; ++k) {
        const double w = fp.taps[k].weight;
        const double* texel = radiance + 3 * static_cast<size_t>(local_taps_[b][k]);
        for (int c = 0; c < 3; ++c) hdr[3 * i + c] += w * texel[c];
      }
    }
  }

  auto bg = frame.frame.data();
  composited_.assign(bg.begin(), bg.end());
  layers_.assign(static_cast<size_t>(cam.width) * cam.height, {});
  struct Pending {
    float depth;
    float alpha;
    uint32_t ball;
    uint32_t pixel;
  };
  std::vector<std::vector<Pending>> pending(layers_.size());
  for (size_t b = 0; b < footprints_.size(); ++b) {
    const BallFootprint& fp = footprints_[b];
    size_t i = 0;
    for (int y = fp.rect.y0; y < fp.rect.y1; ++y) {
      for (int x = fp.rect.x0; x < fp.rect.x1; ++x, ++i) {
        if (fp.alpha[i] <= 0.0f) continue;
        pending[static_cast<size_t>(y) * cam.width + x].push_back(
            {fp.depth[i], fp.alpha[i], static_cast<uint32_t>(b), static_cast<uint32_t>(i)});
      }
    }
  }
  for (size_t p = 0; p < pending.size(); ++p) {
    auto& list = pending[p];
    if (list.empty()) continue;
    std::stable_sort(list.begin(), list.end(), [](const Pending& a, const Pending& b) { return a.depth < b.depth; });
    double acc[3] = {0, 0, 0};
    double trans = 1.0;
    for (const Pending& l : list) {
      const double coef = trans * l.alpha;
      const double* hdr = hdr_[l.ball].data() + 3 * static_cast<size_t>(l.pixel);
      for (int c = 0; c < 3; ++c) acc[c] += coef * tonemap_value(hdr[c], options_.ev, options_.gamma);
      layers_[p].push_back({l.ball, l.pixel, coef});
      trans *= 1.0 - l.alpha;
    }
    for (int c = 0; c < 3; ++c) composited_[3 * p + c] = acc[c] + trans * composited_[3 * p + c];
  }
  // A float render is only float-accurate; keep exactly what the oracle will see.
  if constexpr (std::is_same_v<Scalar, float>) {
    for (double& v : composited_) v = static_cast<float>(v);
  }
}

template <typename Scalar>
LdrImage ProbeRender<Scalar>::composited_image() const {
  LdrImage img(width_, static_cast<int>(composited_.size() / 3 / width_));
  auto dst = img.data();
  for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(std::clamp(composited_[i], 0.0, 1.0));
  return img;
}

template <typename Scalar>
std::vector<double> ProbeRender<Scalar>::backward(std::span<const double> image_grad) const {
  if (image_grad.size() != composited_.size()) throw ValidationError("image gradient has the wrong size");
  std::vector<double> upstream(pass_.size * 3, 0.0);
  for (size_t p = 0; p < layers_.size(); ++p) {
    for (const Layer& l : layers_[p]) {
      const BallFootprint& fp = footprints_[l.ball];
      const double* hdr = hdr_[l.ball].data() + 3 * static_cast<size_t>(l.pixel);
      double g[3];
      bool any = false;
      for (int c = 0; c < 3; ++c) {
        g[c] = l.coef * image_grad[3 * p + c] * tonemap_derivative(hdr[c], options_.ev, options_.gamma);
        any = any || g[c] != 0.0;
      }
      if (!any) continue;
      double* up = upstream.data() + 3 * query_offset_[l.ball];
      for (uint32_t k = fp.offsets[l.pixel]; k < fp.offsets[l.pixel + 1]; ++k) {
        const double w = fp.taps[k].weight;
        double* dst = up + 3 * static_cast<size_t>(local_taps_[l.ball][k]);
        for (int c = 0; c < 3; ++c) dst[c] += w * g[c];
      }
    }
  }
  return field_.backward(pass_, upstream);
}

template class ProbeRender<float>;
template class ProbeRender<double>;

// --- Run setup -------------------------------------------------------------

void RunConfig::validate() const {
  if (num_balls < 1) throw ConfigError("num_balls must be >= 1");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (!(ev_min < 0.0)) throw ConfigError("ev_min must be negative");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (train_env_height < 2) throw ConfigError("train_env_height must be >= 2");
  if (supersample < 1) throw ConfigError("supersample must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (tau_override && !(*tau_override >= 0.0 && *tau_override <= 1.0)) throw ConfigError("tau_override outside [0,1]");
  if (!(sampling.near_fraction > 0.0 && sampling.near_fraction < sampling.far_fraction &&
        sampling.far_fraction < 1.0)) {
    throw ConfigError("probe depth fractions must satisfy 0 < near < far < 1");
  }
  arch.validate();
  if (scene) {
    scene->validate();
  } else {
    if (frame_paths.empty()) throw ConfigError("config needs either a scene or a list of frames");
    if (frame_paths.size() != depth_paths.size()) throw ConfigError("frames and depths must have the same length");
    if (!camera) throw ConfigError("file-based frames need a camera");
    camera->validate();
  }
  if (oracle.kind == OracleConfig::Kind::kSynthetic && !scene) {
    throw ConfigError("the synthetic oracle needs a scene");
  }
  if (oracle.kind == OracleConfig::Kind::kFile && oracle.exchange_dir.empty()) {
    throw ConfigError("the file oracle needs oracle.exchange_dir");
  }
}

Camera run_camera(const RunConfig& config) { return config.scene ? config.scene->camera : *config.camera; }

std::vector<FrameData> load_frames(const RunConfig& config) {
  std::vector<FrameData> frames;
  if (config.scene) {
    for (int t = 1; t <= config.scene->frames; ++t) {
      Background bg = render_background(*config.scene, t);
      frames.push_back({std::move(bg.frame), std::move(bg.depth), config.scene->pose(t)});
    }
    return frames;
  }
  const Camera cam = *config.camera;
  for (size_t i = 0; i < config.frame_paths.size(); ++i) {
    FrameData f{read_png(config.frame_paths[i]), read_depth_pfm(config.depth_paths[i]), Pose{}};
    if (f.frame.width() != cam.width || f.frame.height() != cam.height || f.depth.width() != cam.width ||
        f.depth.height() != cam.height) {
      throw ValidationError("frame " + config.frame_paths[i].string() + " does not match the camera");
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

DomainBox frustum_domain_box(const Camera& camera, std::span<const FrameData> frames, double margin) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const FrameData& f : frames) {
    const float far = *std::max_element(f.depth.data().begin(), f.depth.data().end());
    std::vector<Vec3> corners{Vec3::Zero()};
    for (double u : {0.0, static_cast<double>(camera.width)}) {
      for (double v : {0.0, static_cast<double>(camera.height)}) corners.push_back(camera.ray(u, v) * far);
    }
    for (const Vec3& c : corners) {
      const Vec3 w = f.pose.point_to_world(c);
      lo = lo.cwiseMin(w);
      hi = hi.cwiseMax(w);
    }
  }
  const Vec3 pad = (hi - lo) * (0.5 * margin);
  DomainBox box;
  box.x_min = lo - pad;
  box.x_max = hi + pad;
  box.t_min = 1.0;
  box.t_max = static_cast<double>(std::max<size_t>(1, frames.size()));
  return box;
}

std::unique_ptr<Oracle> make_oracle(const RunConfig& config) {
  if (config.oracle.kind == OracleConfig::Kind::kSynthetic) {
    if (!config.scene) throw ConfigError("the synthetic oracle needs a scene");
    SyntheticOracleOptions o;
    o.sigma = config.oracle.sigma;
    o.env_height = config.oracle.env_height;
    o.supersample = config.oracle.supersample;
    o.gamma = config.gamma;
    o.seed = config.seed;
    return std::make_unique<SyntheticOracle>(*config.scene, o);
  }
  FileOracleOptions o;
  o.exchange_dir = config.oracle.exchange_dir;
  o.timeout = std::chrono::milliseconds(static_cast<int64_t>(config.oracle.timeout_s * 1000.0));
  o.poll_interval = std::chrono::milliseconds(std::max<int64_t>(1, static_cast<int64_t>(config.oracle.poll_interval_s * 1000.0)));
  return std::make_unique<FileOracle>(o);
}

// --- Training loop ---------------------------------------------------------

namespace {

Architecture effective_architecture(Architecture arch, size_t frame_count) {
  if (frame_count <= 1) arch.time_input = false;
  return arch;
}

}  // namespace

Distiller::Distiller(RunConfig config, std::vector<FrameData> frames, Camera camera, std::unique_ptr<Oracle> oracle)
    : config_(std::move(config)),
      frames_(std::move(frames)),
      camera_(camera),
      oracle_(std::move(oracle)),
      schedule_{config_.iterations, config_.ev_min},
      field_(LightField::initialize(effective_architecture(config_.arch, frames_.size()),
                                    frustum_domain_box(camera_, frames_), config_.seed)),
      adam_(field_.params().size(), config_.adam),
      frame_rng_(make_stream(config_.seed, "distill.frames")),
      probe_rng_(make_stream(config_.seed, "distill.probes")),
      tau_rng_(make_stream(config_.seed, "distill.tau")) {
  if (frames_.empty()) throw ValidationError("distillation needs at least one frame");
  if (!oracle_) throw ValidationError("distillation needs an oracle");
}

StepLog Distiller::step(int s) {
  if (s < 0 || s >= config_.iterations) throw ValidationError("step index out of range");
  StepLog log;
  log.s = s;
  std::uniform_int_distribution<int> pick_frame(1, frame_count());
  log.t = pick_frame(frame_rng_);
  log.ev = schedule_.ev(s);
  log.tau_min = schedule_.tau_min(s);
  if (config_.tau_override) {
    log.tau = *config_.tau_override;
  } else {
    std::uniform_real_distribution<double> tau(log.tau_min, Schedule::kTauMax);
    log.tau = log.tau_min >= Schedule::kTauMax ? Schedule::kTauMax : tau(tau_rng_);
  }
  log.k = sampler_steps(log.tau);
  log.lr = cosine_lr(config_.adam, s, config_.iterations);

  const FrameData& frame = frames_[static_cast<size_t>(log.t - 1)];
  const ProbeSet probes = sample_probes(camera_, frame.depth, config_.num_balls, probe_rng_, config_.sampling);
  RenderOptions ro;
  ro.env_height = config_.train_env_height;
  ro.supersample = config_.supersample;
  ro.ev = log.ev;
  ro.gamma = config_.gamma;
  const ProbeRender<float> render(field_, probes, frame, log.t, ro);

  char id[32];
  std::snprintf(id, sizeof(id), "iter-%06d", s);
  OracleRequest req{id,
                    log.t,
                    render.composited_image(),
                    render.mask_and_depth().mask,
                    render.mask_and_depth().depth,
                    frame.frame,
                    ExposureValue(log.ev, config_.ev_min),
                    log.tau,
                    log.k,
                    config_.cfg_scale,
                    camera_,
                    probes.balls};
  OracleResponse resp;
  try {
    resp = oracle_->answer(req);
  } catch (const Error& e) {
    log.skipped = true;
    log.error = e.what();
    if (++consecutive_failures_ > 3) throw;
    return log;
  }
  consecutive_failures_ = 0;

  std::vector<double> target(resp.pseudo_gt.data().begin(), resp.pseudo_gt.data().end());
  const LossResult loss = probe_loss(render.composited(), target, req.mask, config_.loss);
  log.loss = loss.value;
  log.l2 = loss.l2;
  log.perceptual = loss.perceptual;
  if (loss.masked_pixels == 0) {
    log.error = "empty probe mask";
    return log;
  }
  const std::vector<double> grad = render.backward(loss.grad);
  if (!adam_.step(field_.mutable_params(), grad, log.lr)) log.error = "non-finite gradient; step skipped";
  return log;
}

DistillReport distill(const RunConfig& config, const fs::path& out_dir, std::unique_ptr<Oracle> oracle) {
  config.validate();
  if (!oracle) oracle = make_oracle(config);
  Distiller distiller(config, load_frames(config), run_camera(config), std::move(oracle));
  fs::create_directories(out_dir / "checkpoints");

  DistillReport report;
  for (int s = 0; s < config.iterations; ++s) {
    report.steps.push_back(distiller.step(s));
    if ((s + 1) % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%06d.bin", s + 1);
      const fs::path p = out_dir / "checkpoints" / name;
      save_checkpoint(distiller.field(), p);
      report.checkpoints.push_back(p);
    }
  }
  report.final_checkpoint = out_dir / "final.ckpt";
  save_checkpoint(distiller.field(), report.final_checkpoint);
  write_report(report, out_dir / "report.json");
  return report;
}

void write_report(const DistillReport& report, const fs::path& path) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["iterations"] = report.steps.size();
  auto series = [&](auto&& get) {
    auto arr = ordered_json::array();
    for (const StepLog& s : report.steps) arr.push_back(get(s));
    return arr;
  };
  j["loss"] = series([](const StepLog& s) -> ordered_json {
    if (s.skipped) return nullptr;
    return s.loss;
  });
  j["ev"] = series([](const StepLog& s) { return s.ev; });
  j["tau_min"] = series([](const StepLog& s) { return s.tau_min; });
  j["tau"] = series([](const StepLog& s) { return s.tau; });
  j["k"] = series([](const StepLog& s) { return s.k; });
  j["frame"] = series([](const StepLog& s) { return s.t; });
  j["lr"] = series([](const StepLog& s) { return s.lr; });
  j["skipped"] = series([](const StepLog& s) { return s.skipped; });
  auto ckpts = ordered_json::array();
  for (const auto& p : report.checkpoints) ckpts.push_back(p.filename().string());
  j["checkpoints"] = ckpts;
  j["final_checkpoint"] = report.final_checkpoint.filename().string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace lfd
