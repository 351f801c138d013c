#pragma once

#include <Eigen/Core>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "lfd/envmap.hpp"

namespace lfd {

// Shape of the light-field network L(x, t, d).
struct Architecture {
  int hidden_layers = 6;
  int hidden_width = 256;
  // 1-based hidden layer whose input is [previous activation; encoded input].
  int skip_layer = 3;
  int freqs_x = 6;
  int freqs_t = 4;
  int freqs_d = 4;
  // false drops the time input (single-image mode).
  bool time_input = true;

  void validate() const;
  int encoded_dim() const;
  // Input width of 1-based hidden layer l, or of the output layer for l = hidden_layers + 1.
  int layer_input_dim(int l) const;
  int layer_output_dim(int l) const;
  size_t parameter_count() const;

  bool operator==(const Architecture&) const = default;
};

// Normalization box for network inputs; each axis maps to [-1, 1].
struct DomainBox {
  Vec3 x_min = Vec3::Constant(-1.0);
  Vec3 x_max = Vec3::Constant(1.0);
  double t_min = 1.0;
  double t_max = 1.0;

  void validate() const;
};

// sin/cos features at frequencies 2^k * pi, k < freqs, for one scalar in [-1, 1].
void positional_encoding(double p, int freqs, double* out);

struct Query {
  Vec3 x;
  double t = 1.0;
  Vec3 d;  // unit direction, world frame
};

template <typename Scalar>
struct ForwardPass;

class LightField {
 public:
  LightField(Architecture arch, DomainBox box, std::vector<double> params);

  // Kaiming-uniform hidden layers, final layer scaled by 0.1, zero biases.
  static LightField initialize(const Architecture& arch, const DomainBox& box, uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  const DomainBox& domain() const { return box_; }
  std::span<const double> params() const { return params_; }
  std::span<double> mutable_params() { return params_; }

  Rgb eval(const Vec3& x, double t, const Vec3& d) const;
  EnvMap eval_envmap(const Vec3& x, double t, int height) const;

  // Batched evaluation keeping the activations needed by backward().
  template <typename Scalar>
  ForwardPass<Scalar> forward(std::span<const Query> queries) const;

  // Exact gradient of sum(upstream . radiance) with respect to the parameters.
  // upstream holds 3 values per query of the forward pass.
  template <typename Scalar>
  std::vector<double> backward(const ForwardPass<Scalar>& pass, std::span<const double> upstream) const;

  // Number of input coordinates clamped into the domain box so far.
  uint64_t clamp_count() const { return clamp_count_->load(); }

  // Encodes one query into `out` (encoded_dim values), clamping to the box.
  void encode(const Query& q, double* out) const;

 private:
  Architecture arch_;
  DomainBox box_;
  std::vector<double> params_;
  std::shared_ptr<std::atomic<uint64_t>> clamp_count_ = std::make_shared<std::atomic<uint64_t>>(0);
};

template <typename Scalar>
struct ForwardPass {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  struct Chunk {
    int size = 0;                 // valid columns; storage is padded
    Matrix input;                 // encoded_dim x chunk
    std::vector<Matrix> hidden;   // post-ReLU activations per hidden layer
    Matrix output_pre;            // 3 x chunk, before softplus
  };
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;
  std::vector<Chunk> chunks;
  std::vector<double> radiance;   // 3 per query
  size_t size = 0;
};

// Checkpoint: binary blob (magic, version, architecture, layer shapes,
// little-endian float32 parameters) plus a JSON sidecar holding the domain box.
void save_checkpoint(const LightField& field, const std::filesystem::path& blob_path);
LightField load_checkpoint(const std::filesystem::path& blob_path);
std::filesystem::path sidecar_path(const std::filesystem::path& blob_path);

}  // namespace lfd
