// lfd: light-field distillation command line.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "lfd/config.hpp"
#include "lfd/distill.hpp"
#include "lfd/errors.hpp"
#include "lfd/evalharness.hpp"
#include "lfd/lightfield.hpp"
#include "lfd/manifest.hpp"
#include "lfd/probe.hpp"
#include "lfd/scenegen.hpp"

namespace fs = std::filesystem;
using namespace lfd;

namespace {

std::string numbered(const char* fmt, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, i);
  return buf;
}

// --- scene-gen --------------------------------------------------------------

struct SceneGenArgs {
  fs::path scene;
  fs::path probes;
  fs::path out;
};

void run_scene_gen(const SceneGenArgs& a) {
  const SceneSpec scene = load_scene(a.scene);
  ProbeList probes;
  if (!a.probes.empty()) probes = load_probe_list(a.probes);

  RunManifest m{"scene-gen", a.scene, 0, {a.scene}, {"frames/frame_NNNN.png", "frames/depth_NNNN.pfm"}};
  if (!a.probes.empty()) {
    m.inputs.push_back(a.probes);
    m.outputs.push_back("envmaps/probe_NNN.pfm");
  }
  m.write(a.out / "manifest.json");

  fs::create_directories(a.out / "frames");
  for (int t = 1; t <= scene.frames; ++t) {
    const Background bg = render_background(scene, t);
    write_png(bg.frame, a.out / "frames" / numbered("frame_%04d.png", t));
    write_depth_pfm(bg.depth, a.out / "frames" / numbered("depth_%04d.pfm", t));
  }
  if (!probes.probes.empty()) fs::create_directories(a.out / "envmaps");
  for (size_t i = 0; i < probes.probes.size(); ++i) {
    const ProbePoint& p = probes.probes[i];
    write_envmap(gt_envmap(scene, p.x, p.t, probes.envmap_height),
                 a.out / "envmaps" / numbered("probe_%03d.pfm", static_cast<int>(i)));
  }
}

// --- distill -------------------------------------------------------------

struct DistillArgs {
  fs::path config;
  std::string oracle;
  std::optional<uint64_t> seed;
  fs::path out;
  fs::path exchange_dir;
};

void run_distill(const DistillArgs& a) {
  RunConfig config = load_run_config(a.config);
  if (a.seed) config.seed = *a.seed;
  if (!a.oracle.empty()) {
    config.oracle.kind = a.oracle == "file" ? OracleConfig::Kind::kFile : OracleConfig::Kind::kSynthetic;
  }
  if (!a.exchange_dir.empty()) config.oracle.exchange_dir = a.exchange_dir;
  config.validate();

  RunManifest m{"distill", a.config, config.seed, {a.config},
                {"checkpoints/ckpt_NNNNNN.bin", "final.ckpt", "report.json"}};
  for (const auto& p : config.frame_paths) m.inputs.push_back(p);
  for (const auto& p : config.depth_paths) m.inputs.push_back(p);
  m.write(a.out / "manifest.json");

  const DistillReport report = distill(config, a.out);
  size_t skipped = 0;
  for (const StepLog& s : report.steps) skipped += s.skipped;
  std::cerr << "lfd: distill finished " << report.steps.size() << " iterations (" << skipped << " skipped)\n";
}

// --- eval ----------------------------------------------------------------

struct EvalArgs {
  fs::path pred;
  fs::path gt;
  fs::path out;
  int resolution = kSphereResolution;
};

std::map<std::string, fs::path> pfm_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::map<std::string, fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pfm") files[e.path().filename().string()] = e.path();
  }
  return files;
}

void run_eval(const EvalArgs& a) {
  const auto pred_files = pfm_files(a.pred);
  const auto gt_files = pfm_files(a.gt);
  if (gt_files.empty()) throw ValidationError("no .pfm envmaps in " + a.gt.string());
  std::vector<EnvMap> pred, gt;
  RunManifest m{"eval", {}, 0, {}, {a.out.filename().string()}};
  for (const auto& [name, path] : gt_files) {
    auto it = pred_files.find(name);
    if (it == pred_files.end()) throw ValidationError("prediction missing for " + name);
    m.inputs.push_back(it->second);
    m.inputs.push_back(path);
  }
  if (pred_files.size() != gt_files.size()) throw ValidationError("prediction and ground-truth file sets differ");
  fs::path manifest = a.out;
  manifest += ".manifest.json";
  m.write(manifest);

  for (const auto& [name, path] : gt_files) {
    pred.push_back(read_envmap(pred_files.at(name)));
    gt.push_back(read_envmap(path));
  }
  const MetricReport report = evaluate(pred, gt, a.resolution);
  std::ofstream out(a.out);
  if (!out) throw IoError("cannot write " + a.out.string());
  out << report.to_json() << '\n';
}

// --- probe-render --------------------------------------------------------

struct ProbeRenderArgs {
  fs::path env;
  fs::path balls;
  fs::path camera;
  fs::path out;
  int supersample = 4;
  double ev = 0.0;
};

void run_probe_render(const ProbeRenderArgs& a) {
  const EnvMap env = read_envmap(a.env);
  const std::vector<Ball> balls = load_balls(a.balls);
  const Camera camera = load_camera(a.camera);
  RunManifest m{"probe-render", a.balls, 0, {a.env, a.balls, a.camera}, {"sprite.pfm", "sprite.png", "mask.png"}};
  m.write(a.out / "manifest.json");

  std::vector<Sprite> sprites;
  for (const Ball& b : balls) sprites.push_back(render_ball(env, b, camera, a.supersample));
  const HdrImage hdr = composite(HdrImage(camera.width, camera.height), sprites);
  write_pfm(hdr, a.out / "sprite.pfm");
  write_png(tonemap(hdr, ExposureValue(a.ev, std::min(kDefaultEvMin, a.ev - 1.0))), a.out / "sprite.png");
  ProbeSet set{balls, camera, DepthMap(camera.width, camera.height, std::numeric_limits<float>::infinity())};
  write_mask_png(project_mask_and_depth(set).mask, a.out / "mask.png");
}

// --- envmap-export -------------------------------------------------------

struct ExportArgs {
  fs::path checkpoint;
  fs::path probes;
  fs::path out;
};

void run_envmap_export(const ExportArgs& a) {
  const LightField field = load_checkpoint(a.checkpoint);
  const ProbeList probes = load_probe_list(a.probes);
  RunManifest m{"envmap-export", a.probes, 0, {a.checkpoint, a.probes}, {"probe_NNN.pfm"}};
  m.write(a.out / "manifest.json");
  for (size_t i = 0; i < probes.probes.size(); ++i) {
    const ProbePoint& p = probes.probes[i];
    write_envmap(field.eval_envmap(p.x, p.t, probes.envmap_height),
                 a.out / numbered("probe_%03d.pfm", static_cast<int>(i)));
  }
  if (field.clamp_count() > 0) {
    std::cerr << "lfd: warning: " << field.clamp_count() << " queries fell outside the domain box and were clamped\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distill an HDR light field L(x, t, d) from chrome-ball probes.\n"
               "Exit codes: 0 success, 1 usage error, 2 runtime error."};
  app.require_subcommand(1);

  SceneGenArgs sg;
  auto* scene_gen = app.add_subcommand("scene-gen", "Render background frames, depth maps and GT envmaps");
  scene_gen->add_option("--scene", sg.scene, "Scene JSON")->required()->check(CLI::ExistingFile);
  scene_gen->add_option("--probes", sg.probes, "Probe list JSON {envmap_height, probes:[{x,t}]}")
      ->check(CLI::ExistingFile);
  scene_gen->add_option("--out", sg.out, "Output directory")->required();

  DistillArgs da;
  auto* distill_cmd = app.add_subcommand("distill", "Run light-field distillation");
  distill_cmd->add_option("--config", da.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  distill_cmd->add_option("--oracle", da.oracle, "Oracle kind")->check(CLI::IsMember({"synthetic", "file"}));
  distill_cmd->add_option("--seed", da.seed, "Seed for every random stream");
  distill_cmd->add_option("--out", da.out, "Output directory")->required();
  distill_cmd->add_option("--exchange-dir", da.exchange_dir, "Exchange directory for the file oracle");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Compare predicted and ground-truth envmaps");
  eval_cmd->add_option("--pred", ea.pred, "Directory of predicted PFM envmaps")->required();
  eval_cmd->add_option("--gt", ea.gt, "Directory of ground-truth PFM envmaps (matched by file name)")->required();
  eval_cmd->add_option("--out", ea.out, "Report JSON path")->required();
  eval_cmd->add_option("--resolution", ea.resolution, "Sphere render size")->check(CLI::PositiveNumber);

  ProbeRenderArgs pa;
  auto* probe_cmd = app.add_subcommand("probe-render", "Render chrome balls under an envmap");
  probe_cmd->add_option("--env", pa.env, "Envmap PFM")->required()->check(CLI::ExistingFile);
  probe_cmd->add_option("--balls", pa.balls, "Ball list JSON")->required()->check(CLI::ExistingFile);
  probe_cmd->add_option("--camera", pa.camera, "Camera JSON")->required()->check(CLI::ExistingFile);
  probe_cmd->add_option("--out", pa.out, "Output directory")->required();
  probe_cmd->add_option("--supersample", pa.supersample, "Supersampling per axis")->check(CLI::PositiveNumber);
  probe_cmd->add_option("--ev", pa.ev, "Exposure for the PNG preview")->check(CLI::Range(-20.0, 0.0));

  ExportArgs xa;
  auto* export_cmd = app.add_subcommand("envmap-export", "Dump L(x, t, .) at listed probes");
  export_cmd->add_option("--checkpoint", xa.checkpoint, "Checkpoint blob")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--probes", xa.probes, "Probe list JSON")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--out", xa.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "lfd: usage error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*scene_gen) run_scene_gen(sg);
    if (*distill_cmd) run_distill(da);
    if (*eval_cmd) run_eval(ea);
    if (*probe_cmd) run_probe_render(pa);
    if (*export_cmd) run_envmap_export(xa);
  } catch (const ConfigError& e) {
    std::cerr << "lfd: config error: " << e.what() << '\n';
    return 2;
  } catch (const TimeoutError& e) {
    std::cerr << "lfd: timeout: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "lfd: io error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "lfd: validation error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "lfd: error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
