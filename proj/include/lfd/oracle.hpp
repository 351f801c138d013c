#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lfd/imagehdr.hpp"
#include "lfd/probe.hpp"
#include "lfd/scenegen.hpp"

namespace lfd {

constexpr double kDefaultCfgScale = 12.5;

// Sampler step count for noise level tau: ceil(10 * tau).
int sampler_steps(double tau);

struct OracleRequest {
  std::string id;
  int t = 1;
  LdrImage composited;
  Mask mask;
  DepthMap depth;
  LdrImage background;
  ExposureValue ev;
  double tau = 0.0;
  int k = 0;
  double cfg_scale = kDefaultCfgScale;
  Camera camera;
  std::vector<Ball> balls;

  // Throws ValidationError on inconsistent dimensions or tau outside [0,1].
  void validate() const;
};

struct OracleResponse {
  std::string id;
  LdrImage pseudo_gt;
};

// Validates a response against its request and forces pixels outside the
// mask back to the request's background.
void enforce_inpainting_contract(const OracleRequest& req, OracleResponse& resp);

class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual OracleResponse answer(const OracleRequest& req) = 0;
};

struct SyntheticOracleOptions {
  double sigma = 0.02;  // noise std is sigma * tau
  int env_height = 128;
  int supersample = 4;
  double gamma = kDefaultGamma;
  uint64_t seed = 0;
};

// Renders ground-truth probes from an analytic scene.
class SyntheticOracle : public Oracle {
 public:
  SyntheticOracle(SceneSpec scene, SyntheticOracleOptions options = {});
  OracleResponse answer(const OracleRequest& req) override;

  const SceneSpec& scene() const { return scene_; }

 private:
  const DepthMap& background_depth(int t);

  SceneSpec scene_;
  SyntheticOracleOptions options_;
  std::map<int, DepthMap> depth_cache_;
};

struct FileOracleOptions {
  std::filesystem::path exchange_dir;
  std::chrono::milliseconds timeout{300'000};
  std::chrono::milliseconds poll_interval{10};
};

// Exchange layout:
//   <dir>/req/<id>/{request.json, composited.png, mask.png, depth.pfm, background.png}
//   <dir>/resp/<id>/{pseudo_gt.png, <id>.done}   (<id>.err on responder failure)
// The request directory is published with an atomic rename; a response is
// consumed only after its done-marker exists.
class FileOracle : public Oracle {
 public:
  explicit FileOracle(FileOracleOptions options);
  OracleResponse answer(const OracleRequest& req) override;

  std::filesystem::path request_dir(const std::string& id) const;
  std::filesystem::path response_dir(const std::string& id) const;

 private:
  void write_request(const OracleRequest& req) const;

  FileOracleOptions options_;
};

// Serialized request.json body.
std::string request_json(const OracleRequest& req);

}  // namespace lfd
