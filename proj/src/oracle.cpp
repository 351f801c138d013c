#include "lfd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "lfd/errors.hpp"
#include "lfd/rng.hpp"

namespace lfd {

namespace fs = std::filesystem;

int sampler_steps(double tau) { return static_cast<int>(std::ceil(10.0 * tau)); }

void OracleRequest::validate() const {
  const int w = camera.width, h = camera.height;
  if (composited.width() != w || composited.height() != h || background.width() != w || background.height() != h ||
      mask.width() != w || mask.height() != h || depth.width() != w || depth.height() != h) {
    throw ValidationError("oracle request " + id + " has inconsistent image dimensions");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("oracle request tau outside [0,1]");
  if (k < 0) throw ValidationError("oracle request k must be non-negative");
}

void enforce_inpainting_contract(const OracleRequest& req, OracleResponse& resp) {
  if (resp.pseudo_gt.width() != req.camera.width || resp.pseudo_gt.height() != req.camera.height) {
    throw ValidationError("oracle response " + req.id + " has dimensions " + std::to_string(resp.pseudo_gt.width()) +
                          "x" + std::to_string(resp.pseudo_gt.height()) + ", expected " +
                          std::to_string(req.camera.width) + "x" + std::to_string(req.camera.height));
  }
  auto out = resp.pseudo_gt.data();
  auto bg = req.background.data();
  auto m = req.mask.data();
  for (size_t p = 0; p < m.size(); ++p) {
    for (int c = 0; c < 3; ++c) {
      float& v = out[3 * p + c];
      if (!m[p]) {
        v = bg[3 * p + c];
      } else if (!std::isfinite(v)) {
        throw ValidationError("oracle response " + req.id + " contains non-finite pixels");
      } else {
        v = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  resp.id = req.id;
}

// --- SyntheticOracle -------------------------------------------------------

SyntheticOracle::SyntheticOracle(SceneSpec scene, SyntheticOracleOptions options)
    : scene_(std::move(scene)), options_(options) {
  scene_.validate();
}

const DepthMap& SyntheticOracle::background_depth(int t) {
  auto it = depth_cache_.find(t);
  if (it == depth_cache_.end()) it = depth_cache_.emplace(t, render_background(scene_, t).depth).first;
  return it->second;
}

OracleResponse SyntheticOracle::answer(const OracleRequest& req) {
  req.validate();
  const Camera& c = scene_.camera;
  if (req.camera.width != c.width || req.camera.height != c.height || req.camera.fx != c.fx ||
      req.camera.fy != c.fy || req.camera.cx != c.cx || req.camera.cy != c.cy) {
    throw ValidationError("synthetic oracle: request camera does not match the scene camera");
  }
  if (req.t < 1 || req.t > scene_.frames) throw ValidationError("synthetic oracle: frame index out of range");

  const Pose& pose = scene_.pose(req.t);
  const DepthMap& depth = background_depth(req.t);
  std::vector<Sprite> sprites;
  sprites.reserve(req.balls.size());
  for (const Ball& ball : req.balls) {
    const EnvMap env = gt_envmap(scene_, pose.point_to_world(ball.center), req.t, options_.env_height);
    const Sprite hdr = render_ball(env, ball, req.camera, options_.supersample, &depth, pose);
    sprites.push_back(tonemap_sprite(hdr, req.ev, options_.gamma));
  }
  OracleResponse resp{req.id, composite(req.background, sprites)};

  const double noise_std = options_.sigma * req.tau;
  if (noise_std > 0.0) {
    Rng rng = make_stream(options_.seed, "oracle.noise/" + req.id);
    std::normal_distribution<double> noise(0.0, noise_std);
    auto data = resp.pseudo_gt.data();
    auto m = req.mask.data();
    for (size_t p = 0; p < m.size(); ++p) {
      if (!m[p]) continue;
      for (int ch = 0; ch < 3; ++ch) data[3 * p + ch] = static_cast<float>(data[3 * p + ch] + noise(rng));
    }
  }
  enforce_inpainting_contract(req, resp);
  return resp;
}

// --- FileOracle ------------------------------------------------------------

std::string request_json(const OracleRequest& req) {
  nlohmann::ordered_json j;
  j["id"] = req.id;
  j["t"] = static_cast<double>(req.t);
  j["ev"] = req.ev.ev();
  j["ev_min"] = req.ev.ev_min();
  j["tau"] = req.tau;
  j["k"] = static_cast<double>(req.k);
  j["cfg_scale"] = req.cfg_scale;
  j["camera"] = {{"fx", req.camera.fx},
                 {"fy", req.camera.fy},
                 {"cx", req.camera.cx},
                 {"cy", req.camera.cy},
                 {"w", static_cast<double>(req.camera.width)},
                 {"h", static_cast<double>(req.camera.height)}};
  auto balls = nlohmann::ordered_json::array();
  for (const Ball& b : req.balls) {
    balls.push_back({{"x", b.center.x()}, {"y", b.center.y()}, {"z", b.center.z()}, {"r", b.radius}});
  }
  j["balls"] = balls;
  return j.dump(2);
}

FileOracle::FileOracle(FileOracleOptions options) : options_(std::move(options)) {
  if (options_.exchange_dir.empty()) throw ConfigError("file oracle needs an exchange directory");
  fs::create_directories(options_.exchange_dir / "req");
  fs::create_directories(options_.exchange_dir / "resp");
}

fs::path FileOracle::request_dir(const std::string& id) const { return options_.exchange_dir / "req" / id; }
fs::path FileOracle::response_dir(const std::string& id) const { return options_.exchange_dir / "resp" / id; }

void FileOracle::write_request(const OracleRequest& req) const {
  const fs::path final_dir = request_dir(req.id);
  const fs::path staging = options_.exchange_dir / "req" / ("." + req.id + ".tmp");
  fs::remove_all(staging);
  fs::remove_all(final_dir);
  fs::create_directories(staging);
  write_png(req.composited, staging / "composited.png");
  write_mask_png(req.mask, staging / "mask.png");
  write_depth_pfm(req.depth, staging / "depth.pfm");
  write_png(req.background, staging / "background.png");
  {
    std::ofstream js(staging / "request.json");
    if (!js) throw IoError("cannot write request.json for " + req.id);
    js << request_json(req) << '\n';
  }
  fs::rename(staging, final_dir);
}

OracleResponse FileOracle::answer(const OracleRequest& req) {
  req.validate();
  const fs::path resp_dir = response_dir(req.id);
  fs::remove_all(resp_dir);
  write_request(req);

  const fs::path done = resp_dir / (req.id + ".done");
  const fs::path err = resp_dir / (req.id + ".err");
  const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
  while (true) {
    if (fs::exists(err)) {
      std::ifstream in(err);
      std::string msg((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      fs::remove_all(resp_dir);
      throw Error("oracle responder failed on request " + req.id + ": " + msg);
    }
    if (fs::exists(done)) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      throw TimeoutError("oracle request " + req.id + " timed out waiting for " + done.string(), req.id);
    }
    std::this_thread::sleep_for(options_.poll_interval);
  }

  OracleResponse resp{req.id, LdrImage()};
  try {
    resp.pseudo_gt = read_png(resp_dir / "pseudo_gt.png");
    enforce_inpainting_contract(req, resp);
  } catch (const Error&) {
    // Drop the bad response so the same request id can be re-issued.
    fs::remove_all(resp_dir);
    throw;
  }
  fs::remove_all(resp_dir);
  fs::remove_all(request_dir(req.id));
  return resp;
}

}  // namespace lfd
