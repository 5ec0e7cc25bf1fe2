#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "btn/autodiff.hpp"
#include "btn/channels.hpp"
#include "btn/features.hpp"
#include "btn/ops.hpp"

namespace btn {

enum class ModelClass { baseline_pfn, vector, tensor };

/// Scalar nonlinearity of the representation layers. Plain ReLU lets the
/// bilinear scalar products square their way up layer after layer;
/// log_relu (log1p of the ReLU) keeps that growth logarithmic.
enum class ScalarActivation { relu, log_relu };

std::string to_string(ModelClass c);
/// Accepts "baseline", "baseline_pfn", "pfn", "vector", "tensor".
ModelClass parse_model_class(const std::string& s);
std::string to_string(ScalarActivation a);
ScalarActivation parse_scalar_activation(const std::string& s);

struct ModelConfig {
  ModelClass model_class = ModelClass::tensor;
  bool bilinear = true;
  bool so2 = true;
  ScalarActivation scalar_activation = ScalarActivation::log_relu;
  std::size_t latent_dim = 64;     // L
  std::size_t hidden_width = 128;  // dense layers of the PFN and of the scalar head
  std::size_t rep_width = 128;     // 2F, hidden features per representation
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument for zero sizes or an odd rep_width with bilinear.
  void validate() const;
  /// Short row label, e.g. "tensor+BiL+SO2" or "baseline".
  std::string label() const;
  /// Flat key=value serialisation; from_map accepts its output.
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);

  bool operator==(const ModelConfig&) const = default;
};

/// One equivariant block: Affine, then optionally SO(2)_j-linear, Bilinear
/// and the per-representation nonlinearity.
struct RepLayer {
  ops::DenseParams scalar;
  ops::DenseParams vector;
  std::optional<ops::DenseParams> tensor;
  std::optional<ops::So2Views> so2_vector;
  std::optional<std::array<ops::So2Views, 2>> so2_tensor;
  bool bilinear = false;
  bool activate = true;
};

/// Scalar, vector and (for tensor models) tensor nodes on a tape.
struct RepNodes {
  ad::NodeId scalars = 0;
  ad::NodeId vectors = 0;
  std::optional<ad::NodeId> tensors;
};

/// Either the PFN baseline or a bilinear tensor network, with its parameters.
class Model {
 public:
  /// Deterministic initialisation from cfg.seed.
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return store_; }
  const ad::ParamStore& params() const { return store_; }
  std::size_t parameter_count() const { return store_.size(); }
  /// Width of the per-particle input (12 for the baseline).
  std::size_t input_feature_count() const;

  EventBatch prepare(std::span<const JetEvent> events) const;
  /// B x 2 logits node.
  ad::NodeId forward(ad::Tape& tape, const EventBatch& batch);
  /// Forward-only logits, evaluated in chunks of `batch_size` events.
  std::vector<std::array<double, 2>> logits(std::span<const JetEvent> events, std::size_t batch_size = 256);

  // Representation-level surfaces of the BTN (tensor/vector classes only).

  /// B x 30 channels with F_s = 4 (charge + type embedding), F_v = 3 and,
  /// for tensor models, F_t = 9. Padded slots are zero.
  RepChannels input_channels(std::span<const JetEvent> events, Mask& mask) const;
  /// Per-particle network Phi with L features per representation; axes[b] is
  /// the unit jet axis of batch entry b. Invalid slots come back zero.
  RepChannels phi(const RepChannels& c, const Mask& mask, std::span<const Vec3> axes);

 private:
  RepNodes run_layer(ad::Tape& tape, const RepLayer& layer, RepNodes x, std::span<const Mat3> frames) const;
  RepNodes run_phi(ad::Tape& tape, RepNodes x, std::span<const Mat3> frames) const;
  ad::NodeId forward_btn(ad::Tape& tape, const EventBatch& batch);
  ad::NodeId forward_pfn(ad::Tape& tape, const EventBatch& batch);
  ad::NodeId dense_stack(ad::Tape& tape, ad::NodeId x, const std::vector<ops::DenseParams>& layers) const;

  ModelConfig cfg_;
  ad::ParamStore store_;
  ad::ParamView embedding_;
  // BTN
  std::vector<RepLayer> phi_layers_;
  std::vector<RepLayer> rho_layers_;
  // Dense layers: the BTN scalar head, or the PFN's two sub-networks.
  std::vector<ops::DenseParams> head_;
  std::vector<ops::DenseParams> pfn_phi_;
};

Model build_model(const ModelConfig& cfg);

/// Scalars of slot (b, p), then |v|^2 per vector feature, then ||T||_F^2 per
/// tensor feature.
std::vector<double> invariant_readout(const RepChannels& c, std::size_t b = 0, std::size_t p = 0);

}  // namespace btn
