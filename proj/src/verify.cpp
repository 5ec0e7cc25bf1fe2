#include "btn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "btn/channels.hpp"
#include "btn/datagen.hpp"
#include "btn/layers.hpp"
#include "btn/models.hpp"
#include "btn/ops.hpp"

namespace btn {

namespace {

using Rng = std::mt19937_64;

double gauss(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

Vec3 random_vec(Rng& rng) { return Vec3(gauss(rng), gauss(rng), gauss(rng)); }

Mat3 random_mat(Rng& rng) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = gauss(rng);
  return m;
}

// Magnitudes spread around 1 so both branches of the saturating units occur.
Vec3 straddling_vec(Rng& rng) {
  return random_vec(rng).normalized() * std::uniform_real_distribution<double>(0.2, 2.0)(rng);
}
Mat3 straddling_mat(Rng& rng) {
  const Mat3 m = random_mat(rng);
  return m / m.norm() * std::uniform_real_distribution<double>(0.2, 2.0)(rng);
}

AffineParams random_affine(Rng& rng, std::size_t in, std::size_t out) {
  AffineParams p = AffineParams::zeros(in, out);
  for (double& w : p.weight) w = gauss(rng);
  for (double& b : p.bias) b = gauss(rng);
  for (double& b : p.tensor_bias) b = gauss(rng);
  return p;
}

struct Tester {
  const CheckOptions& opt;
  Rng rng;
  std::vector<CheckLine> lines;

  // Rotation applied to the inputs; deliberately wrong under the fixture.
  Rotation input_rotation(const Rotation& r) const { return opt.transpose_bug ? r.inverse() : r; }

  void record(std::string name, double residual, double tol) {
    lines.push_back({std::move(name), residual, tol, std::isfinite(residual) && residual < tol});
  }

  template <typename F>
  void over_rotations(const std::string& name, double tol, F&& residual_for) {
    double worst = 0.0;
    for (std::size_t i = 0; i < opt.rotations; ++i) worst = std::max(worst, residual_for(random_rotation(rng)));
    record(name, worst, tol);
  }
};

std::vector<Vec3> rot(const Rotation& r, std::span<const Vec3> v) {
  std::vector<Vec3> out;
  for (const auto& x : v) out.push_back(apply_to_vector(r, x));
  return out;
}
std::vector<Mat3> rot(const Rotation& r, std::span<const Mat3> t) {
  std::vector<Mat3> out;
  for (const auto& x : t) out.push_back(apply_to_tensor(r, x));
  return out;
}
double diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}
double diff(std::span<const Vec3> a, std::span<const Vec3> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return m;
}
double diff(std::span<const Mat3> a, std::span<const Mat3> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return m;
}
double diff(const MixedFeatures& a, const MixedFeatures& b) {
  return std::max({diff(a.scalars, b.scalars), diff(a.vectors, b.vectors), diff(a.tensors, b.tensors)});
}
MixedFeatures rot(const Rotation& r, const MixedFeatures& m) { return {m.scalars, rot(r, m.vectors), rot(r, m.tensors)}; }

void layer_checks(Tester& t) {
  constexpr std::size_t F = 4;
  constexpr double tol = 1e-10;
  auto& rng = t.rng;
  auto vecs = [&](std::size_t n) {
    std::vector<Vec3> v(n);
    for (auto& x : v) x = random_vec(rng);
    return v;
  };
  auto mats = [&](std::size_t n) {
    std::vector<Mat3> v(n);
    for (auto& x : v) x = random_mat(rng);
    return v;
  };
  auto scalars = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = gauss(rng);
    return v;
  };

  t.over_rotations("scalar_affine invariance", tol, [&](const Rotation& r) {
    // Scalars built from rotated geometry (|v|^2, tr T) must not move.
    const auto p = random_affine(rng, F, F);
    const auto v = vecs(F);
    const auto x = mats(F);
    const auto rv = rot(t.input_rotation(r), v);
    const auto rx = rot(t.input_rotation(r), x);
    std::vector<double> a(F), b(F);
    for (std::size_t i = 0; i < F; ++i) {
      a[i] = v[i].squaredNorm() + x[i].trace();
      b[i] = rv[i].squaredNorm() + rx[i].trace();
    }
    return diff(scalar_affine(p, a), scalar_affine(p, b));
  });
  t.over_rotations("vector_linear equivariance", tol, [&](const Rotation& r) {
    const auto p = random_affine(rng, F, F);
    const auto v = vecs(F);
    return diff(vector_linear(p, rot(t.input_rotation(r), v)), rot(r, vector_linear(p, v)));
  });
  t.over_rotations("tensor_affine equivariance", tol, [&](const Rotation& r) {
    const auto p = random_affine(rng, F, F);
    const auto x = mats(F);
    return diff(tensor_affine(p, rot(t.input_rotation(r), x)), rot(r, tensor_affine(p, x)));
  });
  t.over_rotations("bilinear_mix equivariance", tol, [&](const Rotation& r) {
    const auto s = scalars(2 * F);
    const auto v = vecs(2 * F);
    const auto x = mats(2 * F);
    const Rotation ri = t.input_rotation(r);
    return diff(bilinear_mix(s, rot(ri, v), rot(ri, x)), rot(r, bilinear_mix(s, v, x)));
  });
  t.over_rotations("bilinear_mix_vector equivariance", tol, [&](const Rotation& r) {
    const auto s = scalars(2 * F);
    const auto v = vecs(2 * F);
    return diff(bilinear_mix_vector(s, rot(t.input_rotation(r), v)), rot(r, bilinear_mix_vector(s, v)));
  });
  t.over_rotations("vrelu equivariance", tol, [&](const Rotation& r) {
    std::vector<Vec3> v(F);
    for (auto& x : v) x = straddling_vec(rng);
    return diff(vrelu(std::span<const Vec3>(rot(t.input_rotation(r), v))), rot(r, vrelu(std::span<const Vec3>(v))));
  });
  t.over_rotations("trelu equivariance", tol, [&](const Rotation& r) {
    std::vector<Mat3> x(F);
    for (auto& m : x) m = straddling_mat(rng);
    return diff(trelu(std::span<const Mat3>(rot(t.input_rotation(r), x))), rot(r, trelu(std::span<const Mat3>(x))));
  });

  auto so2_params = [&] {
    So2Params p = So2Params::uniform(F, F, {});
    for (auto* side : {&p.left, &p.right})
      for (auto& c : *side) c = {gauss(rng), gauss(rng), gauss(rng)};
    return p;
  };
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  t.over_rotations("so2_vector_linear axial commutation", tol, [&](const Rotation& g) {
    const Vec3 axis = apply_to_vector(g, Vec3::UnitZ());
    const Rotation r = Rotation::from_axis_angle(axis, angle(rng));
    const auto p = so2_params();
    const auto v = vecs(F);
    return diff(so2_vector_linear(p, axis, rot(t.input_rotation(r), v)), rot(r, so2_vector_linear(p, axis, v)));
  });
  t.over_rotations("so2_tensor_linear axial commutation", tol, [&](const Rotation& g) {
    const Vec3 axis = apply_to_vector(g, Vec3::UnitZ());
    const Rotation r = Rotation::from_axis_angle(axis, angle(rng));
    const auto p = so2_params();
    const auto x = mats(F);
    return diff(so2_tensor_linear(p, axis, rot(t.input_rotation(r), x)), rot(r, so2_tensor_linear(p, axis, x)));
  });

  // Pooling: channel rotation commutes with the masked sum.
  t.over_rotations("masked_sum_pool equivariance", tol, [&](const Rotation& r) {
    RepChannels c(1, 6, 2, 2, 2);
    Mask m(1, 6);
    for (std::size_t p = 0; p < 4; ++p) {
      m.set(0, p, true);
      for (std::size_t f = 0; f < 2; ++f) {
        c.scalar(0, p, f) = gauss(rng);
        c.set_vector(0, p, f, random_vec(rng));
        c.set_tensor(0, p, f, random_mat(rng));
      }
    }
    return max_abs_diff(masked_sum_pool(rotate_channels(t.input_rotation(r), c), m),
                        rotate_channels(r, masked_sum_pool(c, m)));
  });
}

// Batched tape ops against the per-element reference layers.
void batched_route_checks(Tester& t) {
  auto& rng = t.rng;
  constexpr std::size_t F = 3, rows = 5;
  ad::ParamStore store;
  ops::So2Views l{store.add("l.a", F, F), store.add("l.b", F, F), store.add("l.phi", F, F)};
  ops::So2Views r{store.add("r.a", F, F), store.add("r.b", F, F), store.add("r.phi", F, F)};
  for (double& x : store.values()) x = gauss(rng);
  auto coeffs = [&](const ops::So2Views& v) {
    std::vector<So2Coeffs> c(F * F);
    for (std::size_t i = 0; i < F * F; ++i)
      c[i] = {store.values(v.a)[i], store.values(v.b)[i], store.values(v.phi)[i]};
    return c;
  };
  So2Params ref{F, F, coeffs(l), coeffs(r)};

  std::vector<Vec3> axes(rows);
  std::vector<Mat3> frames(rows);
  ad::Block vb(rows, 3, F), tb(rows, 9, F);
  std::vector<std::vector<Vec3>> vin(rows, std::vector<Vec3>(F));
  std::vector<std::vector<Mat3>> tin(rows, std::vector<Mat3>(F));
  for (std::size_t k = 0; k < rows; ++k) {
    axes[k] = random_vec(rng).normalized();
    frames[k] = axis_frame(axes[k]).matrix();
    for (std::size_t f = 0; f < F; ++f) {
      vin[k][f] = random_vec(rng);
      tin[k][f] = random_mat(rng);
      for (int c = 0; c < 3; ++c) vb.at(k, c, f) = vin[k][f][c];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) tb.at(k, 3 * i + j, f) = tin[k][f](i, j);
    }
  }
  ad::Tape tape(store, false);
  const ad::Block& yv = tape.value(ops::so2_vector(tape, tape.constant(vb), l, frames));
  const ad::Block& yt = tape.value(ops::so2_tensor(tape, tape.constant(tb), l, r, frames));
  double dv = 0, dt = 0;
  for (std::size_t k = 0; k < rows; ++k) {
    const auto ev = so2_vector_linear(ref, axes[k], vin[k]);
    const auto et = so2_tensor_linear(ref, axes[k], tin[k]);
    for (std::size_t f = 0; f < F; ++f) {
      for (int c = 0; c < 3; ++c) dv = std::max(dv, std::abs(yv.at(k, c, f) - ev[f][c]));
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) dt = std::max(dt, std::abs(yt.at(k, 3 * i + j, f) - et[f](i, j)));
    }
  }
  t.record("batched so2_vector vs reference", dv, 1e-10);
  t.record("batched so2_tensor vs reference", dt, 1e-10);
}

void gradient_checks(Tester& t) {
  auto& rng = t.rng;
  constexpr std::size_t F = 4, rows = 3;
  // near-zero gradients are held to |g - fd| < tol * floor * max(1, |L|) = 1e-10 max(1, |L|),
  // about ten times the roundoff of the difference quotient
  constexpr double h = 1e-5, tol = 1e-6, floor = 1e-10 / tol;
  auto block = [&](std::size_t comps, std::size_t features, double scale) {
    ad::Block b(rows, comps, features);
    for (double& x : b.data) x = scale * gauss(rng);
    return b;
  };
  const ad::Block s0 = block(1, F, 1.0), v0 = block(3, F, 1.0), t0 = block(9, F, 1.0);
  std::vector<Mat3> frames(rows);
  for (auto& f : frames) f = axis_frame(random_vec(rng).normalized()).matrix();
  const std::vector<std::size_t> offsets{0, 2, 3};

  auto run = [&](const std::string& name, auto build) {
    ad::ParamStore store;
    ops::DenseParams ws{store.add("ws", F, F), store.add("bs", 1, F)};
    ops::DenseParams wv{store.add("wv", F, F), std::nullopt};
    ops::DenseParams wt{store.add("wt", F, F), store.add("bt", 1, F)};
    ops::So2Views l{store.add("l.a", F, F), store.add("l.b", F, F), store.add("l.phi", F, F)};
    ops::So2Views r{store.add("r.a", F, F), store.add("r.b", F, F), store.add("r.phi", F, F)};
    for (double& x : store.values()) x = 0.5 * gauss(rng);
    const auto loss = [&](ad::Tape& tape) {
      return build(tape, ops::affine(tape, tape.constant(s0), ws), ops::affine(tape, tape.constant(v0), wv),
                   ops::affine(tape, tape.constant(t0), wt), l, r);
    };
    const auto res = ad::finite_diff_check(store, loss, t.opt.grad_params, h, rng, floor);
    t.record("gradient " + name, res.max_rel_error, tol);
  };

  run("affine", [&](ad::Tape& tape, ad::NodeId s, ad::NodeId v, ad::NodeId x, auto&, auto&) {
    return ops::sum_all(tape, ops::concat(tape, ops::readout(tape, s, v, x), ops::readout(tape, s, v, x)));
  });
  run("so2_vector", [&](ad::Tape& tape, ad::NodeId, ad::NodeId v, ad::NodeId, auto& l, auto&) {
    return ops::sum_squares(tape, ops::so2_vector(tape, v, l, frames));
  });
  run("so2_tensor", [&](ad::Tape& tape, ad::NodeId, ad::NodeId, ad::NodeId x, auto& l, auto& r) {
    return ops::sum_squares(tape, ops::so2_tensor(tape, x, l, r, frames));
  });
  run("bilinear", [&](ad::Tape& tape, ad::NodeId s, ad::NodeId v, ad::NodeId x, auto&, auto&) {
    const auto m = ops::bilinear(tape, s, v, x);
    return ops::sum_all(tape, ops::readout(tape, m.scalars, m.vectors, m.tensors));
  });
  run("bilinear (vector)", [&](ad::Tape& tape, ad::NodeId s, ad::NodeId v, ad::NodeId, auto&, auto&) {
    const auto m = ops::bilinear(tape, s, v, std::nullopt);
    return ops::sum_all(tape, ops::readout(tape, m.scalars, m.vectors, std::nullopt));
  });
  run("relu/vrelu/trelu", [&](ad::Tape& tape, ad::NodeId s, ad::NodeId v, ad::NodeId x, auto&, auto&) {
    return ops::sum_all(tape, ops::readout(tape, ops::relu(tape, s), ops::vrelu(tape, v), ops::trelu(tape, x)));
  });
  run("log_relu", [&](ad::Tape& tape, ad::NodeId s, ad::NodeId, ad::NodeId, auto&, auto&) {
    return ops::sum_squares(tape, ops::log_relu(tape, s));
  });
  run("segment_sum", [&](ad::Tape& tape, ad::NodeId s, ad::NodeId v, ad::NodeId x, auto&, auto&) {
    return ops::sum_all(tape, ops::readout(tape, ops::segment_sum(tape, s, offsets), ops::segment_sum(tape, v, offsets),
                                           ops::segment_sum(tape, x, offsets)));
  });
}

std::vector<JetEvent> check_events(std::size_t n, std::uint64_t seed) {
  GenConfig g;
  g.seed = seed;
  return generate_events(g, n, 99);
}

void model_checks(Tester& t) {
  const auto events = check_events(t.opt.events, t.opt.seed);
  const std::vector<std::pair<ModelClass, std::pair<bool, bool>>> ladder = {
      {ModelClass::vector, {false, false}}, {ModelClass::vector, {true, false}}, {ModelClass::vector, {true, true}},
      {ModelClass::tensor, {false, false}}, {ModelClass::tensor, {true, false}}, {ModelClass::tensor, {true, true}}};
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  for (const auto& [cls, flags] : ladder) {
    ModelConfig cfg;
    cfg.model_class = cls;
    cfg.bilinear = flags.first;
    cfg.so2 = flags.second;
    cfg.rep_width = 8;
    cfg.latent_dim = 8;
    cfg.hidden_width = 16;
    cfg.seed = t.opt.seed;
    Model model(cfg);
    const auto base = model.logits(events);
    double global = 0, axial = 0;
    for (std::size_t k = 0; k < t.opt.event_rotations; ++k) {
      const Rotation r = random_rotation(t.rng);
      std::vector<JetEvent> rotated, spun;
      for (const auto& e : events) {
        rotated.push_back(rotate_event(e, t.input_rotation(r)));
        spun.push_back(rotate_event(e, t.input_rotation(Rotation::from_axis_angle(e.axis(), angle(t.rng)))));
      }
      const auto zr = model.logits(rotated);
      for (std::size_t i = 0; i < events.size(); ++i)
        for (int c = 0; c < 2; ++c) global = std::max(global, std::abs(zr[i][c] - base[i][c]));
      if (cfg.so2) {
        const auto zs = model.logits(spun);
        for (std::size_t i = 0; i < events.size(); ++i)
          for (int c = 0; c < 2; ++c) axial = std::max(axial, std::abs(zs[i][c] - base[i][c]));
      }
    }
    // Under the fixture the "rotation" is still a rotation of the whole
    // event, so invariance alone cannot detect it; the layer checks do.
    t.record(cfg.label() + " logits under global rotation", global, 1e-6);
    if (cfg.so2) t.record(cfg.label() + " logits under axial rotation", axial, 1e-6);
  }

  ModelConfig cfg;
  cfg.rep_width = 8;
  cfg.latent_dim = 8;
  cfg.hidden_width = 16;
  cfg.seed = t.opt.seed;
  Model model(cfg);
  const std::vector<JetEvent> few(events.begin(), events.begin() + std::min<std::size_t>(4, events.size()));
  const EventBatch batch = model.prepare(few);
  const auto loss = [&](ad::Tape& tape) { return ops::softmax_cross_entropy(tape, model.forward(tape, batch), batch.labels); };
  const auto res = ad::finite_diff_check(model.params(), loss, t.opt.grad_params, 1e-5, t.rng);
  t.record("gradient " + cfg.label() + " model", res.max_rel_error, 1e-5);
}

}  // namespace

std::vector<CheckLine> run_checks(const CheckOptions& opt) {
  Tester t{opt, Rng(opt.seed), {}};
  layer_checks(t);
  batched_route_checks(t);
  gradient_checks(t);
  if (opt.model_checks) model_checks(t);
  return t.lines;
}

}  // namespace btn
