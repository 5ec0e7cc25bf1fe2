#include "btn/models.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace btn {

namespace {

// Pooled sums are scaled by 1/30 so the first layer of F sees O(1) inputs for
// any multiplicity; the factor could equally be folded into its weights.
constexpr double kPoolScale = 1.0 / kMaxTracks;

bool parse_bool(const std::string& s) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw std::invalid_argument("not a boolean: " + s);
}

std::size_t parse_size(const std::string& s) {
  std::size_t used = 0;
  const unsigned long long v = std::stoull(s, &used);
  if (used != s.size()) throw std::invalid_argument("not an unsigned integer: " + s);
  return static_cast<std::size_t>(v);
}

}  // namespace

std::string to_string(ModelClass c) {
  switch (c) {
    case ModelClass::baseline_pfn: return "baseline_pfn";
    case ModelClass::vector: return "vector";
    case ModelClass::tensor: return "tensor";
  }
  return "unknown";
}

ModelClass parse_model_class(const std::string& s) {
  if (s == "baseline" || s == "baseline_pfn" || s == "pfn") return ModelClass::baseline_pfn;
  if (s == "vector") return ModelClass::vector;
  if (s == "tensor") return ModelClass::tensor;
  throw std::invalid_argument("unknown model class: " + s);
}

std::string to_string(ScalarActivation a) { return a == ScalarActivation::relu ? "relu" : "log_relu"; }

ScalarActivation parse_scalar_activation(const std::string& s) {
  if (s == "relu") return ScalarActivation::relu;
  if (s == "log_relu") return ScalarActivation::log_relu;
  throw std::invalid_argument("unknown scalar activation: " + s);
}

void ModelConfig::validate() const {
  if (latent_dim == 0 || hidden_width == 0 || rep_width == 0)
    throw std::invalid_argument("ModelConfig: widths must be positive");
  if (model_class != ModelClass::baseline_pfn && bilinear && rep_width % 2 != 0)
    throw std::invalid_argument("ModelConfig: bilinear layers need an even rep_width");
}

std::string ModelConfig::label() const {
  if (model_class == ModelClass::baseline_pfn) return "baseline";
  std::string s = to_string(model_class);
  if (bilinear) s += "+BiL";
  if (so2) s += "+SO2";
  return s;
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {{"model", to_string(model_class)},
          {"bilinear", bilinear ? "true" : "false"},
          {"so2", so2 ? "true" : "false"},
          {"scalar_activation", to_string(scalar_activation)},
          {"latent_dim", std::to_string(latent_dim)},
          {"hidden_width", std::to_string(hidden_width)},
          {"rep_width", std::to_string(rep_width)},
          {"seed", std::to_string(seed)}};
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "model") c.model_class = parse_model_class(v);
    else if (k == "bilinear") c.bilinear = parse_bool(v);
    else if (k == "so2") c.so2 = parse_bool(v);
    else if (k == "scalar_activation") c.scalar_activation = parse_scalar_activation(v);
    else if (k == "latent_dim") c.latent_dim = parse_size(v);
    else if (k == "hidden_width") c.hidden_width = parse_size(v);
    else if (k == "rep_width") c.rep_width = parse_size(v);
    else if (k == "seed") c.seed = parse_size(v);
    else throw std::invalid_argument("unknown model key: " + k);
  }
  c.validate();
  return c;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  std::normal_distribution<double> jitter(0.0, 0.01);

  // Dense layers start with zero bias. Representation layers start with
  // biases near 1, so the scalar and tensor channels carry a constant part
  // and each bilinear product begins close to a linear map of its inputs
  // instead of squashing them.
  auto dense = [&](const std::string& name, std::size_t in, std::size_t out, bool bias, double bias_center = 0.0) {
    ops::DenseParams p;
    p.weight = store_.add(name + ".w", out, in);
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& w : store_.values(p.weight)) w = u(rng);
    if (bias) {
      p.bias = store_.add(name + ".b", 1, out);
      if (bias_center != 0.0) {
        std::uniform_real_distribution<double> ub(bias_center - 0.5, bias_center + 0.5);
        for (double& b : store_.values(*p.bias)) b = ub(rng);
      }
    }
    return p;
  };
  // Near-identity start: diagonal connections A ~ I, the rest ~ 0. With
  // `all_identity` every connection starts near I (the right factor of the
  // tensor layer, so that A T B^T ~ A T).
  auto so2 = [&](const std::string& name, std::size_t n, bool all_identity) {
    ops::So2Views v;
    v.a = store_.add(name + ".a", n, n);
    v.b = store_.add(name + ".b", n, n);
    v.phi = store_.add(name + ".phi", n, n);
    auto a = store_.values(v.a), b = store_.values(v.b), phi = store_.values(v.phi);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double base = (all_identity || i == j) ? 1.0 : 0.0;
        a[i * n + j] = base + jitter(rng);
        b[i * n + j] = base + jitter(rng);
        phi[i * n + j] = jitter(rng);
      }
    return v;
  };

  embedding_ = store_.add("embedding", 3, 3);
  {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& w : store_.values(embedding_)) w = u(rng);
  }

  if (cfg_.model_class == ModelClass::baseline_pfn) {
    const std::size_t H = cfg_.hidden_width, L = cfg_.latent_dim;
    pfn_phi_ = {dense("phi.0", input_feature_count(), H, true), dense("phi.1", H, H, true),
                dense("phi.out", H, L, true)};
    head_ = {dense("rho.0", L, H, true), dense("rho.1", H, H, true), dense("rho.2", H, H, true),
             dense("rho.out", H, 2, true)};
    return;
  }

  const bool tensors = cfg_.model_class == ModelClass::tensor;
  const std::size_t W = cfg_.rep_width;
  const std::size_t post = cfg_.bilinear && tensors ? 3 * W / 2 : W;

  auto rep_layer = [&](const std::string& name, std::size_t in_s, std::size_t in_v, std::size_t in_t,
                       std::size_t out, bool hidden) {
    RepLayer l;
    l.scalar = dense(name + ".s", in_s, out, true, 1.0);
    l.vector = dense(name + ".v", in_v, out, false);
    if (tensors) l.tensor = dense(name + ".t", in_t, out, true, 1.0);
    if (hidden && cfg_.so2) {
      l.so2_vector = so2(name + ".so2v", out, false);
      if (tensors) l.so2_tensor = std::array{so2(name + ".so2t.l", out, false), so2(name + ".so2t.r", out, true)};
    }
    l.bilinear = hidden && cfg_.bilinear;
    l.activate = hidden;
    return l;
  };

  phi_layers_.push_back(rep_layer("phi.0", 4, 3, 9, W, true));
  phi_layers_.push_back(rep_layer("phi.1", post, post, post, W, true));
  phi_layers_.push_back(rep_layer("phi.out", post, post, post, cfg_.latent_dim, false));
  const std::size_t L = cfg_.latent_dim;
  rho_layers_.push_back(rep_layer("rho.0", L, L, L, W, true));
  rho_layers_.push_back(rep_layer("rho.1", post, post, post, W, true));
  rho_layers_.push_back(rep_layer("rho.2", post, post, post, W, true));
  const std::size_t readout_width = tensors ? 3 * post : 2 * post;
  const std::size_t H = cfg_.hidden_width;
  head_ = {dense("head.0", readout_width, H, true), dense("head.1", H, H, true), dense("head.out", H, 2, true)};
}

Model build_model(const ModelConfig& cfg) { return Model(cfg); }

std::size_t Model::input_feature_count() const {
  // baseline: 9 continuous features + 3 embedding dimensions
  return cfg_.model_class == ModelClass::baseline_pfn ? 12 : 4;
}

EventBatch Model::prepare(std::span<const JetEvent> events) const {
  BatchContents contents;
  contents.tensors = cfg_.model_class == ModelClass::tensor;
  contents.baseline = cfg_.model_class == ModelClass::baseline_pfn;
  return make_batch(events, contents);
}

ad::NodeId Model::forward(ad::Tape& tape, const EventBatch& batch) {
  return cfg_.model_class == ModelClass::baseline_pfn ? forward_pfn(tape, batch) : forward_btn(tape, batch);
}

ad::NodeId Model::dense_stack(ad::Tape& tape, ad::NodeId x, const std::vector<ops::DenseParams>& layers) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = ops::affine(tape, x, layers[i]);
    if (i + 1 < layers.size()) x = ops::relu(tape, x);
  }
  return x;
}

RepNodes Model::run_layer(ad::Tape& tape, const RepLayer& layer, RepNodes x, std::span<const Mat3> frames) const {
  RepNodes y;
  y.scalars = ops::affine(tape, x.scalars, layer.scalar);
  y.vectors = ops::affine(tape, x.vectors, layer.vector);
  if (layer.tensor) y.tensors = ops::affine(tape, *x.tensors, *layer.tensor);
  if (layer.so2_vector) y.vectors = ops::so2_vector(tape, y.vectors, *layer.so2_vector, frames);
  if (layer.so2_tensor)
    y.tensors = ops::so2_tensor(tape, *y.tensors, (*layer.so2_tensor)[0], (*layer.so2_tensor)[1], frames);
  if (layer.bilinear) {
    const ops::Mixed m = ops::bilinear(tape, y.scalars, y.vectors, y.tensors);
    y.scalars = m.scalars;
    y.vectors = m.vectors;
    y.tensors = m.tensors;
  }
  if (layer.activate) {
    y.scalars = cfg_.scalar_activation == ScalarActivation::relu ? ops::relu(tape, y.scalars)
                                                                 : ops::log_relu(tape, y.scalars);
    y.vectors = ops::vrelu(tape, y.vectors);
    if (y.tensors) y.tensors = ops::trelu(tape, *y.tensors);
  }
  return y;
}

RepNodes Model::run_phi(ad::Tape& tape, RepNodes x, std::span<const Mat3> frames) const {
  for (const auto& layer : phi_layers_) x = run_layer(tape, layer, x, frames);
  return x;
}

ad::NodeId Model::forward_btn(ad::Tape& tape, const EventBatch& batch) {
  if (batch.events == 0) throw std::invalid_argument("forward: empty batch");
  const bool tensors = cfg_.model_class == ModelClass::tensor;
  if (tensors && batch.tensors.rows != batch.rows())
    throw std::invalid_argument("forward: batch was prepared without tensor seeds");
  RepNodes x;
  x.scalars = ops::concat(tape, tape.constant(batch.charge), ops::embedding(tape, batch.particle_type, embedding_));
  x.vectors = tape.constant(batch.vectors);
  if (tensors) x.tensors = tape.constant(batch.tensors);
  x = run_phi(tape, x, batch.row_frames);

  RepNodes pooled;
  pooled.scalars = ops::segment_sum(tape, x.scalars, batch.offsets, kPoolScale);
  pooled.vectors = ops::segment_sum(tape, x.vectors, batch.offsets, kPoolScale);
  if (x.tensors) pooled.tensors = ops::segment_sum(tape, *x.tensors, batch.offsets, kPoolScale);
  for (const auto& layer : rho_layers_) pooled = run_layer(tape, layer, pooled, batch.event_frames);

  const ad::NodeId features = ops::readout(tape, pooled.scalars, pooled.vectors, pooled.tensors);
  return dense_stack(tape, features, head_);
}

ad::NodeId Model::forward_pfn(ad::Tape& tape, const EventBatch& batch) {
  if (batch.events == 0) throw std::invalid_argument("forward: empty batch");
  if (batch.baseline.rows != batch.rows())
    throw std::invalid_argument("forward: batch was prepared without baseline features");
  const ad::NodeId inputs =
      ops::concat(tape, tape.constant(batch.baseline), ops::embedding(tape, batch.particle_type, embedding_));
  const ad::NodeId per_particle = dense_stack(tape, inputs, pfn_phi_);
  const ad::NodeId pooled = ops::segment_sum(tape, per_particle, batch.offsets);
  return dense_stack(tape, pooled, head_);
}

std::vector<std::array<double, 2>> Model::logits(std::span<const JetEvent> events, std::size_t batch_size) {
  std::vector<std::array<double, 2>> out;
  out.reserve(events.size());
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < events.size(); start += batch_size) {
    const auto chunk = events.subspan(start, std::min(batch_size, events.size() - start));
    const EventBatch batch = prepare(chunk);
    ad::Tape tape(store_, false);
    const ad::Block& z = tape.value(forward(tape, batch));
    for (std::size_t b = 0; b < chunk.size(); ++b) out.push_back({z.data[2 * b], z.data[2 * b + 1]});
  }
  return out;
}

RepChannels Model::input_channels(std::span<const JetEvent> events, Mask& mask) const {
  if (cfg_.model_class == ModelClass::baseline_pfn)
    throw std::logic_error("input_channels: the baseline has no representation channels");
  const bool tensors = cfg_.model_class == ModelClass::tensor;
  const EventBatch batch = make_batch(events, {tensors, false});
  RepChannels c(events.size(), kMaxTracks, 4, 3, tensors ? 9 : 0);
  mask = Mask(events.size(), kMaxTracks);
  const auto emb = store_.values(embedding_);
  for (std::size_t b = 0; b < events.size(); ++b)
    for (std::size_t k = 0; k < events[b].tracks.size(); ++k) {
      const std::size_t r = batch.offsets[b] + k;
      mask.set(b, k, true);
      c.scalar(b, k, 0) = batch.charge.at(r, 0, 0);
      for (std::size_t d = 0; d < 3; ++d) c.scalar(b, k, 1 + d) = emb[batch.particle_type[r] * 3 + d];
      for (std::size_t f = 0; f < 3; ++f)
        c.set_vector(b, k, f, Vec3(batch.vectors.at(r, 0, f), batch.vectors.at(r, 1, f), batch.vectors.at(r, 2, f)));
      if (tensors)
        for (std::size_t f = 0; f < 9; ++f) {
          Mat3 t;
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) t(i, j) = batch.tensors.at(r, 3 * i + j, f);
          c.set_tensor(b, k, f, t);
        }
    }
  return c;
}

RepChannels Model::phi(const RepChannels& c, const Mask& mask, std::span<const Vec3> axes) {
  if (cfg_.model_class == ModelClass::baseline_pfn)
    throw std::logic_error("phi: the baseline has no representation channels");
  const bool tensors = cfg_.model_class == ModelClass::tensor;
  if (c.n_scalar() != 4 || c.n_vector() != 3 || c.n_tensor() != (tensors ? 9u : 0u))
    throw std::invalid_argument("phi: expected F_s = 4, F_v = 3 and F_t = 9 (tensor models) or 0");
  if (axes.size() != c.batch()) throw std::invalid_argument("phi: one axis per batch entry required");
  const std::size_t B = c.batch(), P = c.particles(), R = B * P;

  std::vector<Mat3> frames(R);
  for (std::size_t b = 0; b < B; ++b) {
    if (std::abs(axes[b].norm() - 1.0) > 1e-9) throw std::invalid_argument("phi: axes must be unit vectors");
    const Mat3 f = axis_frame(axes[b]).matrix();
    for (std::size_t p = 0; p < P; ++p) frames[b * P + p] = f;
  }

  ad::Block s(R, 1, 4), v(R, 3, 3), t;
  if (tensors) t = ad::Block(R, 9, 9);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < P; ++p) {
      const std::size_t r = b * P + p;
      for (std::size_t f = 0; f < 4; ++f) s.at(r, 0, f) = c.scalar(b, p, f);
      for (std::size_t f = 0; f < 3; ++f) {
        const Vec3 x = c.vector(b, p, f);
        for (int k = 0; k < 3; ++k) v.at(r, k, f) = x[k];
      }
      if (tensors)
        for (std::size_t f = 0; f < 9; ++f) {
          const Mat3 x = c.tensor(b, p, f);
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) t.at(r, 3 * i + j, f) = x(i, j);
        }
    }

  ad::Tape tape(store_, false);
  RepNodes x;
  x.scalars = tape.constant(std::move(s));
  x.vectors = tape.constant(std::move(v));
  if (tensors) x.tensors = tape.constant(std::move(t));
  const RepNodes y = run_phi(tape, x, frames);

  const std::size_t L = cfg_.latent_dim;
  RepChannels out(B, P, L, L, tensors ? L : 0);
  const ad::Block& ys = tape.value(y.scalars);
  const ad::Block& yv = tape.value(y.vectors);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < P; ++p) {
      const std::size_t r = b * P + p;
      for (std::size_t f = 0; f < L; ++f) {
        out.scalar(b, p, f) = ys.at(r, 0, f);
        out.set_vector(b, p, f, Vec3(yv.at(r, 0, f), yv.at(r, 1, f), yv.at(r, 2, f)));
        if (tensors) {
          const ad::Block& yt = tape.value(*y.tensors);
          Mat3 m;
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m(i, j) = yt.at(r, 3 * i + j, f);
          out.set_tensor(b, p, f, m);
        }
      }
    }
  apply_mask(out, mask);
  return out;
}

std::vector<double> invariant_readout(const RepChannels& c, std::size_t b, std::size_t p) {
  std::vector<double> out;
  out.reserve(c.n_scalar() + c.n_vector() + c.n_tensor());
  for (std::size_t f = 0; f < c.n_scalar(); ++f) out.push_back(c.scalar(b, p, f));
  for (std::size_t f = 0; f < c.n_vector(); ++f) out.push_back(c.vector(b, p, f).squaredNorm());
  for (std::size_t f = 0; f < c.n_tensor(); ++f) out.push_back(c.tensor(b, p, f).squaredNorm());
  return out;
}

}  // namespace btn
