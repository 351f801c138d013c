#include "lfd/lightfield.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <numbers>

#include "lfd/errors.hpp"
#include "lfd/rng.hpp"

namespace lfd {

namespace {

constexpr int kChunk = 128;
constexpr uint32_t kCheckpointMagic = 0x5044464C;  // "LFDP"
constexpr uint32_t kCheckpointVersion = 1;

template <typename S>
S softplus(S y) {
  return std::max(y, S(0)) + std::log1p(std::exp(-std::abs(y)));
}

template <typename S>
S sigmoid(S y) {
  return y >= 0 ? S(1) / (S(1) + std::exp(-y)) : std::exp(y) / (S(1) + std::exp(y));
}

double normalize(double v, double lo, double hi, bool& clamped) {
  double n = hi > lo ? 2.0 * (v - lo) / (hi - lo) - 1.0 : 0.0;
  if (n < -1.0 || n > 1.0) {
    clamped = true;
    n = std::clamp(n, -1.0, 1.0);
  }
  return n;
}

}  // namespace

void Architecture::validate() const {
  if (hidden_layers < 1 || hidden_width < 1) throw ValidationError("network needs at least one hidden layer");
  if (skip_layer < 0 || skip_layer > hidden_layers) throw ValidationError("skip layer out of range");
  if (skip_layer == 1) throw ValidationError("skip layer 1 would duplicate the input");
  if (freqs_x < 1 || freqs_d < 1 || (time_input && freqs_t < 1)) {
    throw ValidationError("encoding frequencies must be positive");
  }
}

int Architecture::encoded_dim() const { return 2 * (3 * freqs_x + (time_input ? freqs_t : 0) + 3 * freqs_d); }

int Architecture::layer_input_dim(int l) const {
  if (l == 1) return encoded_dim();
  if (l == skip_layer) return hidden_width + encoded_dim();
  return hidden_width;
}

int Architecture::layer_output_dim(int l) const { return l <= hidden_layers ? hidden_width : 3; }

size_t Architecture::parameter_count() const {
  size_t n = 0;
  for (int l = 1; l <= hidden_layers + 1; ++l) {
    n += static_cast<size_t>(layer_output_dim(l)) * (layer_input_dim(l) + 1);
  }
  return n;
}

void DomainBox::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (!(x_max[i] > x_min[i])) throw ValidationError("domain box must be non-empty on every axis");
  }
  if (!(t_max >= t_min)) throw ValidationError("domain box time range is inverted");
}

void positional_encoding(double p, int freqs, double* out) {
  double f = std::numbers::pi;
  for (int k = 0; k < freqs; ++k, f *= 2.0) {
    out[2 * k] = std::sin(f * p);
    out[2 * k + 1] = std::cos(f * p);
  }
}

LightField::LightField(Architecture arch, DomainBox box, std::vector<double> params)
    : arch_(arch), box_(box), params_(std::move(params)) {
  arch_.validate();
  box_.validate();
  if (params_.size() != arch_.parameter_count()) {
    throw ValidationError("parameter vector has " + std::to_string(params_.size()) + " entries, expected " +
                          std::to_string(arch_.parameter_count()));
  }
  for (double p : params_) {
    if (!std::isfinite(p)) throw ValidationError("light field parameters contain a non-finite value");
  }
}

LightField LightField::initialize(const Architecture& arch, const DomainBox& box, uint64_t seed) {
  arch.validate();
  std::vector<double> params(arch.parameter_count(), 0.0);
  Rng rng = make_stream(seed, "lightfield.init");
  size_t offset = 0;
  for (int l = 1; l <= arch.hidden_layers + 1; ++l) {
    const int in = arch.layer_input_dim(l);
    const int out = arch.layer_output_dim(l);
    double bound = std::sqrt(6.0 / in);
    if (l == arch.hidden_layers + 1) bound *= 0.1;
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (size_t i = 0; i < static_cast<size_t>(in) * out; ++i) params[offset + i] = dist(rng);
    offset += static_cast<size_t>(in) * out + out;
  }
  return LightField(arch, box, std::move(params));
}

void LightField::encode(const Query& q, double* out) const {
  bool clamped = false;
  int k = 0;
  for (int i = 0; i < 3; ++i, k += 2 * arch_.freqs_x) {
    positional_encoding(normalize(q.x[i], box_.x_min[i], box_.x_max[i], clamped), arch_.freqs_x, out + k);
  }
  if (arch_.time_input) {
    positional_encoding(normalize(q.t, box_.t_min, box_.t_max, clamped), arch_.freqs_t, out + k);
    k += 2 * arch_.freqs_t;
  }
  for (int i = 0; i < 3; ++i, k += 2 * arch_.freqs_d) {
    double c = q.d[i];
    if (c < -1.0 || c > 1.0) {
      clamped = true;
      c = std::clamp(c, -1.0, 1.0);
    }
    positional_encoding(c, arch_.freqs_d, out + k);
  }
  if (clamped) clamp_count_->fetch_add(1, std::memory_order_relaxed);
}

template <typename Scalar>
ForwardPass<Scalar> LightField::forward(std::span<const Query> queries) const {
  using Matrix = typename ForwardPass<Scalar>::Matrix;
  ForwardPass<Scalar> pass;
  pass.size = queries.size();
  pass.radiance.resize(queries.size() * 3);

  const int layers = arch_.hidden_layers + 1;
  size_t offset = 0;
  for (int l = 1; l <= layers; ++l) {
    const int in = arch_.layer_input_dim(l);
    const int out = arch_.layer_output_dim(l);
    pass.weights.push_back(
        Eigen::Map<const Eigen::MatrixXd>(params_.data() + offset, out, in).template cast<Scalar>());
    offset += static_cast<size_t>(in) * out;
    pass.biases.push_back(Eigen::Map<const Eigen::VectorXd>(params_.data() + offset, out).template cast<Scalar>());
    offset += out;
  }

  const int enc = arch_.encoded_dim();
  std::vector<double> scratch(enc);
  for (size_t start = 0; start < queries.size(); start += kChunk) {
    auto& chunk = pass.chunks.emplace_back();
    chunk.size = static_cast<int>(std::min<size_t>(kChunk, queries.size() - start));
    chunk.input = Matrix::Zero(enc, kChunk);
    for (int j = 0; j < chunk.size; ++j) {
      encode(queries[start + j], scratch.data());
      for (int i = 0; i < enc; ++i) chunk.input(i, j) = static_cast<Scalar>(scratch[i]);
    }
    chunk.hidden.resize(arch_.hidden_layers);
    for (int l = 1; l <= arch_.hidden_layers; ++l) {
      Matrix& h = chunk.hidden[l - 1];
      if (l == 1) {
        h.noalias() = pass.weights[0] * chunk.input;
      } else if (l == arch_.skip_layer) {
        const auto& w = pass.weights[l - 1];
        h.noalias() = w.leftCols(arch_.hidden_width) * chunk.hidden[l - 2];
        h.noalias() += w.rightCols(enc) * chunk.input;
      } else {
        h.noalias() = pass.weights[l - 1] * chunk.hidden[l - 2];
      }
      h.colwise() += pass.biases[l - 1].col(0);
      h = h.cwiseMax(Scalar(0));
    }
    chunk.output_pre.noalias() = pass.weights[layers - 1] * chunk.hidden.back();
    chunk.output_pre.colwise() += pass.biases[layers - 1].col(0);
    for (int j = 0; j < chunk.size; ++j) {
      for (int c = 0; c < 3; ++c) {
        pass.radiance[3 * (start + j) + c] = static_cast<double>(softplus(chunk.output_pre(c, j)));
      }
    }
  }
  return pass;
}

template <typename Scalar>
std::vector<double> LightField::backward(const ForwardPass<Scalar>& pass, std::span<const double> upstream) const {
  using Matrix = typename ForwardPass<Scalar>::Matrix;
  if (upstream.size() != pass.size * 3) throw ValidationError("upstream gradient does not match the forward batch");
  const int layers = arch_.hidden_layers + 1;
  const int enc = arch_.encoded_dim();
  std::vector<Matrix> grad_w(layers);
  std::vector<Matrix> grad_b(layers);
  for (int l = 0; l < layers; ++l) {
    grad_w[l] = Matrix::Zero(pass.weights[l].rows(), pass.weights[l].cols());
    grad_b[l] = Matrix::Zero(pass.biases[l].rows(), 1);
  }

  Matrix delta, next;
  size_t start = 0;
  for (const auto& chunk : pass.chunks) {
    delta = Matrix::Zero(3, kChunk);
    for (int j = 0; j < chunk.size; ++j) {
      for (int c = 0; c < 3; ++c) {
        delta(c, j) = static_cast<Scalar>(upstream[3 * (start + j) + c]) * sigmoid(chunk.output_pre(c, j));
      }
    }
    for (int l = layers; l >= 1; --l) {
      const bool skip = l == arch_.skip_layer;
      if (l == 1) {
        grad_w[0].noalias() += delta * chunk.input.transpose();
      } else if (skip) {
        grad_w[l - 1].leftCols(arch_.hidden_width).noalias() += delta * chunk.hidden[l - 2].transpose();
        grad_w[l - 1].rightCols(enc).noalias() += delta * chunk.input.transpose();
      } else {
        grad_w[l - 1].noalias() += delta * chunk.hidden[l - 2].transpose();
      }
      grad_b[l - 1] += delta.rowwise().sum();
      if (l == 1) break;
      const auto& w = pass.weights[l - 1];
      if (skip) {
        next.noalias() = w.leftCols(arch_.hidden_width).transpose() * delta;
      } else {
        next.noalias() = w.transpose() * delta;
      }
      // ReLU gate from the activations of the layer feeding layer l.
      const Matrix& h = chunk.hidden[l - 2];
      delta = (h.array() > Scalar(0)).select(next, Scalar(0));
    }
    start += chunk.size;
  }

  std::vector<double> grad(params_.size());
  size_t offset = 0;
  for (int l = 0; l < layers; ++l) {
    Eigen::Map<Eigen::MatrixXd>(grad.data() + offset, grad_w[l].rows(), grad_w[l].cols()) =
        grad_w[l].template cast<double>();
    offset += grad_w[l].size();
    Eigen::Map<Eigen::VectorXd>(grad.data() + offset, grad_b[l].rows()) = grad_b[l].template cast<double>();
    offset += grad_b[l].size();
  }
  return grad;
}

template ForwardPass<float> LightField::forward<float>(std::span<const Query>) const;
template ForwardPass<double> LightField::forward<double>(std::span<const Query>) const;
template std::vector<double> LightField::backward<float>(const ForwardPass<float>&, std::span<const double>) const;
template std::vector<double> LightField::backward<double>(const ForwardPass<double>&, std::span<const double>) const;

Rgb LightField::eval(const Vec3& x, double t, const Vec3& d) const {
  const Query q{x, t, d};
  const auto pass = forward<double>(std::span<const Query>(&q, 1));
  return {pass.radiance[0], pass.radiance[1], pass.radiance[2]};
}

EnvMap LightField::eval_envmap(const Vec3& x, double t, int height) const {
  EnvMap env(height);
  std::vector<Query> queries;
  queries.reserve(env.texel_count());
  for (int y = 0; y < height; ++y) {
    for (int u = 0; u < 2 * height; ++u) queries.push_back({x, t, texel_center_dir(u, y, height)});
  }
  const auto pass = forward<double>(queries);
  for (int i = 0; i < env.texel_count(); ++i) {
    env.set_texel(i, {pass.radiance[3 * i], pass.radiance[3 * i + 1], pass.radiance[3 * i + 2]});
  }
  return env;
}

// --- Checkpoints -----------------------------------------------------------

namespace {

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw FormatError("truncated checkpoint " + path.string());
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& blob_path) {
  auto p = blob_path;
  p += ".json";
  return p;
}

void save_checkpoint(const LightField& field, const std::filesystem::path& blob_path) {
  const Architecture& a = field.architecture();
  std::ofstream out(blob_path, std::ios::binary);
  if (!out) throw IoError("cannot open " + blob_path.string() + " for writing");
  put_u32(out, kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  for (int v : {a.hidden_layers, a.hidden_width, a.skip_layer, a.freqs_x, a.freqs_t, a.freqs_d}) {
    put_u32(out, static_cast<uint32_t>(v));
  }
  put_u32(out, a.time_input ? 1u : 0u);
  put_u32(out, static_cast<uint32_t>(a.hidden_layers + 1));
  for (int l = 1; l <= a.hidden_layers + 1; ++l) {
    put_u32(out, static_cast<uint32_t>(a.layer_output_dim(l)));
    put_u32(out, static_cast<uint32_t>(a.layer_input_dim(l)));
  }
  put_u32(out, static_cast<uint32_t>(field.params().size()));
  for (double p : field.params()) put_u32(out, std::bit_cast<uint32_t>(static_cast<float>(p)));
  if (!out) throw IoError("failed writing " + blob_path.string());

  const DomainBox& box = field.domain();
  nlohmann::ordered_json side;
  side["format"] = "lfd-checkpoint";
  side["version"] = kCheckpointVersion;
  side["domain_box"] = {{"x_min", {box.x_min.x(), box.x_min.y(), box.x_min.z()}},
                        {"x_max", {box.x_max.x(), box.x_max.y(), box.x_max.z()}},
                        {"t_min", box.t_min},
                        {"t_max", box.t_max}};
  std::ofstream js(sidecar_path(blob_path));
  if (!js) throw IoError("cannot write checkpoint sidecar for " + blob_path.string());
  js << side.dump(2) << '\n';
}

LightField load_checkpoint(const std::filesystem::path& blob_path) {
  std::ifstream in(blob_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + blob_path.string());
  if (get_u32(in, blob_path) != kCheckpointMagic) throw FormatError("not a light field checkpoint: " + blob_path.string());
  if (get_u32(in, blob_path) != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
  Architecture a;
  a.hidden_layers = static_cast<int>(get_u32(in, blob_path));
  a.hidden_width = static_cast<int>(get_u32(in, blob_path));
  a.skip_layer = static_cast<int>(get_u32(in, blob_path));
  a.freqs_x = static_cast<int>(get_u32(in, blob_path));
  a.freqs_t = static_cast<int>(get_u32(in, blob_path));
  a.freqs_d = static_cast<int>(get_u32(in, blob_path));
  a.time_input = get_u32(in, blob_path) != 0;
  a.validate();
  const uint32_t layers = get_u32(in, blob_path);
  if (layers != static_cast<uint32_t>(a.hidden_layers + 1)) throw FormatError("checkpoint layer count mismatch");
  for (int l = 1; l <= a.hidden_layers + 1; ++l) {
    const uint32_t out = get_u32(in, blob_path);
    const uint32_t inp = get_u32(in, blob_path);
    if (out != static_cast<uint32_t>(a.layer_output_dim(l)) || inp != static_cast<uint32_t>(a.layer_input_dim(l))) {
      throw FormatError("checkpoint layer shape mismatch at layer " + std::to_string(l));
    }
  }
  const uint32_t count = get_u32(in, blob_path);
  if (count != a.parameter_count()) throw FormatError("checkpoint parameter count mismatch");
  std::vector<double> params(count);
  for (auto& p : params) p = std::bit_cast<float>(get_u32(in, blob_path));

  std::ifstream js(sidecar_path(blob_path));
  if (!js) throw IoError("missing checkpoint sidecar " + sidecar_path(blob_path).string());
  DomainBox box;
  try {
    const auto side = nlohmann::json::parse(js);
    const auto& b = side.at("domain_box");
    for (int i = 0; i < 3; ++i) {
      box.x_min[i] = b.at("x_min").at(i).get<double>();
      box.x_max[i] = b.at("x_max").at(i).get<double>();
    }
    box.t_min = b.at("t_min").get<double>();
    box.t_max = b.at("t_max").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed checkpoint sidecar: " + std::string(e.what()));
  }
  return LightField(a, box, std::move(params));
}

}  // namespace lfd
