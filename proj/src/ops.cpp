#include "btn/ops.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace btn::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_matrix(const Block& b) {
  return ConstMatMap(b.data.data(), static_cast<Eigen::Index>(b.rows * b.comps),
                     static_cast<Eigen::Index>(b.features));
}
MatMap as_matrix(Block& b) {
  return MatMap(b.data.data(), static_cast<Eigen::Index>(b.rows * b.comps),
                static_cast<Eigen::Index>(b.features));
}
ConstMatMap param_matrix(const ad::ParamStore& s, const ParamView& v) {
  return ConstMatMap(s.values(v).data(), static_cast<Eigen::Index>(v.rows),
                     static_cast<Eigen::Index>(v.cols));
}
MatMap grad_matrix(ad::ParamStore& s, const ParamView& v) {
  return MatMap(s.grads(v).data(), static_cast<Eigen::Index>(v.rows),
                static_cast<Eigen::Index>(v.cols));
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void accumulate(Block& dst, const Block& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

Vec3 load_vec(const Block& b, std::size_t r, std::size_t f) {
  const std::size_t F = b.features;
  const double* p = b.data.data() + r * 3 * F + f;
  return {p[0], p[F], p[2 * F]};
}

void add_vec(Block& b, std::size_t r, std::size_t f, const Vec3& v) {
  const std::size_t F = b.features;
  double* p = b.data.data() + r * 3 * F + f;
  p[0] += v.x();
  p[F] += v.y();
  p[2 * F] += v.z();
}

Mat3 load_mat(const Block& b, std::size_t r, std::size_t f) {
  const std::size_t F = b.features;
  const double* p = b.data.data() + r * 9 * F + f;
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = p[(3 * i + j) * F];
  return m;
}

void add_mat(Block& b, std::size_t r, std::size_t f, const Mat3& m) {
  const std::size_t F = b.features;
  double* p = b.data.data() + r * 9 * F + f;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) p[(3 * i + j) * F] += m(i, j);
}

// ---------------------------------------------------------------------------
// Axial maps in the jet frame.
//
// With j = +z, A = a P + (b cos phi) Q + (b sin phi) K where P keeps z,
// Q keeps (x, y) and K maps (x, y) -> (-y, x). Each piece only touches a few
// components, so the layer is a handful of small GEMMs on gathered
// components instead of a dense 3x3 (or 9x9) product per connection.

struct MapEntry {
  int in;
  int out;
  double sign;
};
using CompMap = std::vector<MapEntry>;

const std::array<CompMap, 3>& vector_maps() {
  static const std::array<CompMap, 3> maps = {
      CompMap{{2, 2, 1.0}},                  // P
      CompMap{{0, 0, 1.0}, {1, 1, 1.0}},     // Q
      CompMap{{1, 0, -1.0}, {0, 1, 1.0}},    // K
  };
  return maps;
}

struct Term {
  CompMap map;
  int left;
  int right;  // -1 for vector layers
};

const std::vector<Term>& vector_terms() {
  static const std::vector<Term> terms = [] {
    std::vector<Term> t;
    for (int a = 0; a < 3; ++a) t.push_back({vector_maps()[a], a, -1});
    return t;
  }();
  return terms;
}

// (M_a T M_b^T)_{kl} picks T_{mn} for (m -> k) in M_a and (n -> l) in M_b.
const std::vector<Term>& tensor_terms() {
  static const std::vector<Term> terms = [] {
    std::vector<Term> t;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        CompMap m;
        for (const auto& ra : vector_maps()[a])
          for (const auto& rb : vector_maps()[b])
            m.push_back({3 * ra.in + rb.in, 3 * ra.out + rb.out, ra.sign * rb.sign});
        t.push_back({std::move(m), a, b});
      }
    return t;
  }();
  return terms;
}

// Coefficient matrices (out x in) of P, Q, K for one side of the layer.
struct SideCoeffs {
  std::array<RowMat, 3> c;
};

SideCoeffs side_coeffs(const ad::ParamStore& store, const So2Views& v) {
  const auto a = param_matrix(store, v.a);
  const auto b = param_matrix(store, v.b);
  const auto phi = param_matrix(store, v.phi);
  SideCoeffs s;
  s.c[0] = a;
  s.c[1] = b.cwiseProduct(phi.array().cos().matrix());
  s.c[2] = b.cwiseProduct(phi.array().sin().matrix());
  return s;
}

void gather(const Block& x, const CompMap& map, RowMat& g) {
  const std::size_t n = map.size(), F = x.features;
  g.resize(static_cast<Eigen::Index>(x.rows * n), static_cast<Eigen::Index>(F));
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t q = 0; q < n; ++q) {
      const double* src = x.data.data() + (r * x.comps + map[q].in) * F;
      std::copy(src, src + F, g.data() + (r * n + q) * F);
    }
}

void scatter_out(const RowMat& s, const CompMap& map, Block& y) {
  const std::size_t n = map.size(), F = y.features;
  for (std::size_t r = 0; r < y.rows; ++r)
    for (std::size_t q = 0; q < n; ++q) {
      const double* src = s.data() + (r * n + q) * F;
      double* dst = y.data.data() + (r * y.comps + map[q].out) * F;
      const double sign = map[q].sign;
      for (std::size_t f = 0; f < F; ++f) dst[f] += sign * src[f];
    }
}

void gather_out(const Block& gy, const CompMap& map, RowMat& gs) {
  const std::size_t n = map.size(), F = gy.features;
  gs.resize(static_cast<Eigen::Index>(gy.rows * n), static_cast<Eigen::Index>(F));
  for (std::size_t r = 0; r < gy.rows; ++r)
    for (std::size_t q = 0; q < n; ++q) {
      const double* src = gy.data.data() + (r * gy.comps + map[q].out) * F;
      double* dst = gs.data() + (r * n + q) * F;
      const double sign = map[q].sign;
      for (std::size_t f = 0; f < F; ++f) dst[f] = sign * src[f];
    }
}

void scatter_in(const RowMat& gg, const CompMap& map, Block& gx) {
  const std::size_t n = map.size(), F = gx.features;
  for (std::size_t r = 0; r < gx.rows; ++r)
    for (std::size_t q = 0; q < n; ++q) {
      const double* src = gg.data() + (r * n + q) * F;
      double* dst = gx.data.data() + (r * gx.comps + map[q].in) * F;
      for (std::size_t f = 0; f < F; ++f) dst[f] += src[f];
    }
}

RowMat term_weight(const Term& t, const std::vector<SideCoeffs>& sides) {
  if (t.right < 0) return sides[0].c[t.left];
  return sides[0].c[t.left].cwiseProduct(sides[1].c[t.right]);
}

void chain_side(ad::ParamStore& store, const So2Views& v, const SideCoeffs& grad) {
  const auto b = param_matrix(store, v.b);
  const auto phi = param_matrix(store, v.phi);
  const RowMat cosp = phi.array().cos().matrix();
  const RowMat sinp = phi.array().sin().matrix();
  grad_matrix(store, v.a) += grad.c[0];
  grad_matrix(store, v.b) += grad.c[1].cwiseProduct(cosp) + grad.c[2].cwiseProduct(sinp);
  grad_matrix(store, v.phi) +=
      b.cwiseProduct(grad.c[2].cwiseProduct(cosp) - grad.c[1].cwiseProduct(sinp));
}

NodeId so2_apply(Tape& tape, NodeId x_id, std::vector<So2Views> views, const std::vector<Term>& terms,
                 std::size_t comps, std::span<const Mat3> frames) {
  const Block& x = tape.value(x_id);
  require(x.comps == comps, "so2 layer: wrong representation");
  require(frames.size() == x.rows, "so2 layer: one frame per row required");
  for (const auto& v : views)
    require(v.a.cols == x.features && v.b.size() == v.a.size() && v.phi.size() == v.a.size(),
            "so2 layer: parameter shape mismatch");
  const std::size_t out_features = views[0].a.rows;

  std::vector<SideCoeffs> sides;
  for (const auto& v : views) sides.push_back(side_coeffs(tape.store(), v));

  auto xf = std::make_shared<Block>(rotate_rows(x, frames, false));
  Block yf(x.rows, comps, out_features);
  RowMat g, s;
  for (const auto& t : terms) {
    gather(*xf, t.map, g);
    s.noalias() = g * term_weight(t, sides).transpose();
    scatter_out(s, t.map, yf);
  }
  const NodeId y_id = tape.emit(rotate_rows(yf, frames, true), true);
  if (!tape.recording()) return y_id;

  std::vector<Mat3> frame_copy(frames.begin(), frames.end());
  tape.on_backward([&tape, x_id, y_id, xf, views = std::move(views), sides = std::move(sides),
                    &terms, frame_copy = std::move(frame_copy)] {
    const Block gyf = rotate_rows(tape.grad(y_id), frame_copy, false);
    std::vector<SideCoeffs> dsides(sides.size());
    for (std::size_t k = 0; k < sides.size(); ++k)
      for (int a = 0; a < 3; ++a) dsides[k].c[a] = RowMat::Zero(sides[k].c[a].rows(), sides[k].c[a].cols());
    const bool want_x = tape.needs_grad(x_id);
    Block gxf(xf->rows, xf->comps, xf->features);
    RowMat g, gs, dw, gg;
    for (const auto& t : terms) {
      gather(*xf, t.map, g);
      gather_out(gyf, t.map, gs);
      dw.noalias() = gs.transpose() * g;
      if (t.right < 0) {
        dsides[0].c[t.left] += dw;
      } else {
        dsides[0].c[t.left] += dw.cwiseProduct(sides[1].c[t.right]);
        dsides[1].c[t.right] += dw.cwiseProduct(sides[0].c[t.left]);
      }
      if (want_x) {
        gg.noalias() = gs * term_weight(t, sides);
        scatter_in(gg, t.map, gxf);
      }
    }
    for (std::size_t k = 0; k < views.size(); ++k) chain_side(tape.store(), views[k], dsides[k]);
    if (want_x) accumulate(tape.grad(x_id), rotate_rows(gxf, frame_copy, true));
  });
  return y_id;
}

}  // namespace

Block rotate_rows(const Block& x, std::span<const Mat3> frames, bool inverse) {
  if (x.comps == 1) return x;
  require(x.comps == 3 || x.comps == 9, "rotate_rows: comps must be 1, 3 or 9");
  require(frames.size() == x.rows, "rotate_rows: one frame per row required");
  Block y(x.rows, x.comps, x.features);
  const auto F = static_cast<Eigen::Index>(x.features);
  const auto C = static_cast<Eigen::Index>(x.comps);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const Mat3 f = inverse ? Mat3(frames[r].transpose()) : frames[r];
    ConstMatMap in(x.data.data() + r * x.comps * x.features, C, F);
    MatMap out(y.data.data() + r * x.comps * x.features, C, F);
    if (x.comps == 3) {
      out.noalias() = f.lazyProduct(in);
    } else {
      // Row c = 3i + j holds T_ij. Rotate the i index, then the j index.
      Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic, Eigen::RowMajor>> t(in.data(), 3, 3 * F);
      Eigen::Matrix<double, 3, Eigen::Dynamic, Eigen::RowMajor> z = f.lazyProduct(t);
      for (int a = 0; a < 3; ++a) {
        Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic, Eigen::RowMajor>> za(z.data() + a * 3 * F, 3, F);
        Eigen::Map<Eigen::Matrix<double, 3, Eigen::Dynamic, Eigen::RowMajor>> ya(out.data() + a * 3 * F, 3, F);
        ya.noalias() = f.lazyProduct(za);
      }
    }
  }
  return y;
}

NodeId affine(Tape& tape, NodeId x_id, const DenseParams& p) {
  const Block& x = tape.value(x_id);
  require(x.features == p.weight.cols, "affine: input feature count mismatch");
  if (p.bias) {
    require(x.comps != 3, "affine: vector layers take no bias");
    require(p.bias->size() == p.weight.rows, "affine: bias length mismatch");
  }
  Block y(x.rows, x.comps, p.weight.rows);
  const auto w = param_matrix(tape.store(), p.weight);
  as_matrix(y).noalias() = as_matrix(x) * w.transpose();
  if (p.bias) {
    const auto bias = tape.store().values(*p.bias);
    const std::size_t F = y.features;
    for (std::size_t r = 0; r < y.rows; ++r) {
      if (y.comps == 1) {
        for (std::size_t f = 0; f < F; ++f) y.data[r * F + f] += bias[f];
      } else {
        for (std::size_t c : {0, 4, 8})
          for (std::size_t f = 0; f < F; ++f) y.data[(r * 9 + c) * F + f] += bias[f];
      }
    }
  }
  const NodeId y_id = tape.emit(std::move(y), true);
  tape.on_backward([&tape, x_id, y_id, p] {
    const Block& gy = tape.grad(y_id);
    const Block& xv = tape.value(x_id);
    const auto g = as_matrix(gy);
    grad_matrix(tape.store(), p.weight).noalias() += g.transpose() * as_matrix(xv);
    if (p.bias) {
      auto db = tape.store().grads(*p.bias);
      const std::size_t F = gy.features;
      for (std::size_t r = 0; r < gy.rows; ++r) {
        if (gy.comps == 1) {
          for (std::size_t f = 0; f < F; ++f) db[f] += gy.data[r * F + f];
        } else {
          for (std::size_t c : {0, 4, 8})
            for (std::size_t f = 0; f < F; ++f) db[f] += gy.data[(r * 9 + c) * F + f];
        }
      }
    }
    if (tape.needs_grad(x_id))
      as_matrix(tape.grad(x_id)).noalias() += g * param_matrix(tape.store(), p.weight);
  });
  return y_id;
}

NodeId so2_vector(Tape& tape, NodeId x, const So2Views& p, std::span<const Mat3> frames) {
  return so2_apply(tape, x, {p}, vector_terms(), 3, frames);
}

NodeId so2_tensor(Tape& tape, NodeId x, const So2Views& left, const So2Views& right,
                  std::span<const Mat3> frames) {
  require(left.a.rows == right.a.rows && left.a.cols == right.a.cols,
          "so2_tensor: left/right shape mismatch");
  return so2_apply(tape, x, {left, right}, tensor_terms(), 9, frames);
}

Mixed bilinear(Tape& tape, NodeId s_id, NodeId v_id, std::optional<NodeId> t_id) {
  const Block& s = tape.value(s_id);
  const Block& v = tape.value(v_id);
  require(s.comps == 1 && v.comps == 3, "bilinear: expected scalar and vector blocks");
  require(s.features % 2 == 0 && s.features > 0, "bilinear: feature count must be even and nonzero");
  require(v.features == s.features && v.rows == s.rows, "bilinear: mismatched feature counts");
  const bool with_t = t_id.has_value();
  if (with_t) {
    const Block& t = tape.value(*t_id);
    require(t.comps == 9 && t.features == s.features && t.rows == s.rows,
            "bilinear: mismatched feature counts");
  }
  const std::size_t R = s.rows, F = s.features / 2, k = with_t ? 3 : 2;
  Block so(R, 1, k * F), vo(R, 3, k * F), to;
  if (with_t) to = Block(R, 9, 3 * F);
  const Block* tp = with_t ? &tape.value(*t_id) : nullptr;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t i = 0; i < F; ++i) {
      const double sa = s.data[r * 2 * F + i], sb = s.data[r * 2 * F + F + i];
      const Vec3 va = load_vec(v, r, i), vb = load_vec(v, r, F + i);
      so.data[r * k * F + i] = sa * sb;
      so.data[r * k * F + F + i] = va.dot(vb);
      add_vec(vo, r, i, sa * vb);
      add_vec(vo, r, F + i, va.cross(vb));
      if (with_t) {
        const Mat3 ta = load_mat(*tp, r, i), tb = load_mat(*tp, r, F + i);
        so.data[r * 3 * F + 2 * F + i] = ta.cwiseProduct(tb).sum();
        add_vec(vo, r, 2 * F + i, ta * vb);
        add_mat(to, r, i, sa * tb);
        add_mat(to, r, F + i, va * vb.transpose());
        add_mat(to, r, 2 * F + i, ta * tb);
      }
    }
  Mixed out;
  out.scalars = tape.emit(std::move(so), true);
  out.vectors = tape.emit(std::move(vo), true);
  if (with_t) out.tensors = tape.emit(std::move(to), true);
  const bool any = tape.needs_grad(s_id) || tape.needs_grad(v_id) || (with_t && tape.needs_grad(*t_id));
  if (!any) return out;

  tape.on_backward([&tape, s_id, v_id, t_id, out, R, F, k, with_t] {
    const Block& s = tape.value(s_id);
    const Block& v = tape.value(v_id);
    const Block& gso = tape.grad(out.scalars);
    const Block& gvo = tape.grad(out.vectors);
    Block gs(s.rows, 1, s.features), gv(v.rows, 3, v.features), gt;
    const Block* tp = with_t ? &tape.value(*t_id) : nullptr;
    const Block* gto = with_t ? &tape.grad(*out.tensors) : nullptr;
    if (with_t) gt = Block(s.rows, 9, s.features);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t i = 0; i < F; ++i) {
        const double sa = s.data[r * 2 * F + i], sb = s.data[r * 2 * F + F + i];
        const Vec3 va = load_vec(v, r, i), vb = load_vec(v, r, F + i);
        const double g1 = gso.data[r * k * F + i];
        const double g2 = gso.data[r * k * F + F + i];
        const Vec3 g4 = load_vec(gvo, r, i), g5 = load_vec(gvo, r, F + i);
        double dsa = g1 * sb + g4.dot(vb);
        double dsb = g1 * sa;
        Vec3 dva = g2 * vb + vb.cross(g5);
        Vec3 dvb = g2 * va + sa * g4 + g5.cross(va);
        if (with_t) {
          const Mat3 ta = load_mat(*tp, r, i), tb = load_mat(*tp, r, F + i);
          const double g3 = gso.data[r * 3 * F + 2 * F + i];
          const Vec3 g6 = load_vec(gvo, r, 2 * F + i);
          const Mat3 g7 = load_mat(*gto, r, i), g8 = load_mat(*gto, r, F + i),
                     g9 = load_mat(*gto, r, 2 * F + i);
          dsa += g7.cwiseProduct(tb).sum();
          dva += g8 * vb;
          dvb += ta.transpose() * g6 + g8.transpose() * va;
          add_mat(gt, r, i, g3 * tb + g6 * vb.transpose() + g9 * tb.transpose());
          add_mat(gt, r, F + i, g3 * ta + sa * g7 + ta.transpose() * g9);
        }
        gs.data[r * 2 * F + i] += dsa;
        gs.data[r * 2 * F + F + i] += dsb;
        add_vec(gv, r, i, dva);
        add_vec(gv, r, F + i, dvb);
      }
    if (tape.needs_grad(s_id)) accumulate(tape.grad(s_id), gs);
    if (tape.needs_grad(v_id)) accumulate(tape.grad(v_id), gv);
    if (with_t && tape.needs_grad(*t_id)) accumulate(tape.grad(*t_id), gt);
  });
  return out;
}

NodeId relu(Tape& tape, NodeId x_id) {
  Block y = tape.value(x_id);
  for (double& e : y.data) {
    tape.note_branch(e > 0.0);
    if (!(e > 0.0)) e = 0.0;
  }
  const bool want = tape.needs_grad(x_id);
  const NodeId y_id = tape.emit(std::move(y), want);
  if (!want) return y_id;
  tape.on_backward([&tape, x_id, y_id] {
    const Block& x = tape.value(x_id);
    const Block& gy = tape.grad(y_id);
    Block& gx = tape.grad(x_id);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      if (x.data[i] > 0.0) gx.data[i] += gy.data[i];
  });
  return y_id;
}

NodeId log_relu(Tape& tape, NodeId x_id) {
  Block y = tape.value(x_id);
  for (double& e : y.data) {
    tape.note_branch(e > 0.0);
    e = e > 0.0 ? std::log1p(e) : 0.0;
  }
  const bool want = tape.needs_grad(x_id);
  const NodeId y_id = tape.emit(std::move(y), want);
  if (!want) return y_id;
  tape.on_backward([&tape, x_id, y_id] {
    const Block& x = tape.value(x_id);
    const Block& gy = tape.grad(y_id);
    Block& gx = tape.grad(x_id);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      if (x.data[i] > 0.0) gx.data[i] += gy.data[i] / (1.0 + x.data[i]);
  });
  return y_id;
}

namespace {

// Norm-saturating activation over the `comps` components of each feature.
NodeId saturate(Tape& tape, NodeId x_id, std::size_t comps) {
  const Block& x = tape.value(x_id);
  require(x.comps == comps, "norm activation: wrong representation");
  const std::size_t F = x.features;
  Block y = x;
  std::vector<double> norms(x.rows * F);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t f = 0; f < F; ++f) {
      double n2 = 0.0;
      for (std::size_t c = 0; c < comps; ++c) n2 += x.data[(r * comps + c) * F + f] * x.data[(r * comps + c) * F + f];
      const double n = std::sqrt(n2);
      norms[r * F + f] = n;
      tape.note_branch(n > 1.0);
      if (n > 1.0)
        for (std::size_t c = 0; c < comps; ++c) y.data[(r * comps + c) * F + f] /= n;
    }
  const bool want = tape.needs_grad(x_id);
  const NodeId y_id = tape.emit(std::move(y), want);
  if (!want) return y_id;
  tape.on_backward([&tape, x_id, y_id, comps, norms = std::move(norms)] {
    const Block& gy = tape.grad(y_id);
    const Block& yv = tape.value(y_id);
    Block& gx = tape.grad(x_id);
    const std::size_t F = gy.features;
    for (std::size_t r = 0; r < gy.rows; ++r)
      for (std::size_t f = 0; f < F; ++f) {
        const double n = norms[r * F + f];
        if (n > 1.0) {
          // y = x/|x|: dx = (g - (g.y) y) / |x|
          double gdoty = 0.0;
          for (std::size_t c = 0; c < comps; ++c) {
            const std::size_t i = (r * comps + c) * F + f;
            gdoty += gy.data[i] * yv.data[i];
          }
          for (std::size_t c = 0; c < comps; ++c) {
            const std::size_t i = (r * comps + c) * F + f;
            gx.data[i] += (gy.data[i] - gdoty * yv.data[i]) / n;
          }
        } else {
          for (std::size_t c = 0; c < comps; ++c) {
            const std::size_t i = (r * comps + c) * F + f;
            gx.data[i] += gy.data[i];
          }
        }
      }
  });
  return y_id;
}

}  // namespace

NodeId vrelu(Tape& tape, NodeId x) { return saturate(tape, x, 3); }
NodeId trelu(Tape& tape, NodeId x) { return saturate(tape, x, 9); }

NodeId segment_sum(Tape& tape, NodeId x_id, std::span<const std::size_t> offsets, double scale) {
  const Block& x = tape.value(x_id);
  require(!offsets.empty() && offsets.back() == x.rows, "segment_sum: offsets do not cover the rows");
  const std::size_t E = offsets.size() - 1, width = x.comps * x.features;
  Block y(E, x.comps, x.features);
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t r = offsets[e]; r < offsets[e + 1]; ++r)
      for (std::size_t k = 0; k < width; ++k) y.data[e * width + k] += scale * x.data[r * width + k];
  const bool want = tape.needs_grad(x_id);
  const NodeId y_id = tape.emit(std::move(y), want);
  if (!want) return y_id;
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  tape.on_backward([&tape, x_id, y_id, off = std::move(off), width, scale] {
    const Block& gy = tape.grad(y_id);
    Block& gx = tape.grad(x_id);
    for (std::size_t e = 0; e + 1 < off.size(); ++e)
      for (std::size_t r = off[e]; r < off[e + 1]; ++r)
        for (std::size_t k = 0; k < width; ++k) gx.data[r * width + k] += scale * gy.data[e * width + k];
  });
  return y_id;
}

NodeId readout(Tape& tape, NodeId s_id, std::optional<NodeId> v_id, std::optional<NodeId> t_id) {
  const Block& s = tape.value(s_id);
  require(s.comps == 1, "readout: scalar block expected");
  const std::size_t R = s.rows, Fs = s.features;
  const std::size_t Fv = v_id ? tape.value(*v_id).features : 0;
  const std::size_t Ft = t_id ? tape.value(*t_id).features : 0;
  if (v_id) require(tape.value(*v_id).comps == 3 && tape.value(*v_id).rows == R, "readout: bad vector block");
  if (t_id) require(tape.value(*t_id).comps == 9 && tape.value(*t_id).rows == R, "readout: bad tensor block");
  const std::size_t W = Fs + Fv + Ft;
  Block y(R, 1, W);
  auto squares = [&](const Block& b, std::size_t offset) {
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < b.comps; ++c)
        for (std::size_t f = 0; f < b.features; ++f) {
          const double e = b.data[(r * b.comps + c) * b.features + f];
          y.data[r * W + offset + f] += e * e;
        }
  };
  for (std::size_t r = 0; r < R; ++r)
    std::copy_n(s.data.begin() + r * Fs, Fs, y.data.begin() + r * W);
  if (v_id) squares(tape.value(*v_id), Fs);
  if (t_id) squares(tape.value(*t_id), Fs + Fv);
  const NodeId y_id = tape.emit(std::move(y), true);
  tape.on_backward([&tape, s_id, v_id, t_id, y_id, R, Fs, Fv, W] {
    const Block& gy = tape.grad(y_id);
    if (tape.needs_grad(s_id)) {
      Block& gs = tape.grad(s_id);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t f = 0; f < Fs; ++f) gs.data[r * Fs + f] += gy.data[r * W + f];
    }
    auto back = [&](NodeId id, std::size_t offset) {
      if (!tape.needs_grad(id)) return;
      const Block& b = tape.value(id);
      Block& gb = tape.grad(id);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < b.comps; ++c)
          for (std::size_t f = 0; f < b.features; ++f) {
            const std::size_t i = (r * b.comps + c) * b.features + f;
            gb.data[i] += 2.0 * b.data[i] * gy.data[r * W + offset + f];
          }
    };
    if (v_id) back(*v_id, Fs);
    if (t_id) back(*t_id, Fs + Fv);
  });
  return y_id;
}

NodeId concat(Tape& tape, NodeId a_id, NodeId b_id) {
  const Block& a = tape.value(a_id);
  const Block& b = tape.value(b_id);
  require(a.rows == b.rows && a.comps == b.comps, "concat: rows/comps mismatch");
  const std::size_t Fa = a.features, Fb = b.features, F = Fa + Fb;
  Block y(a.rows, a.comps, F);
  for (std::size_t rc = 0; rc < a.rows * a.comps; ++rc) {
    std::copy_n(a.data.begin() + rc * Fa, Fa, y.data.begin() + rc * F);
    std::copy_n(b.data.begin() + rc * Fb, Fb, y.data.begin() + rc * F + Fa);
  }
  const bool want = tape.needs_grad(a_id) || tape.needs_grad(b_id);
  const NodeId y_id = tape.emit(std::move(y), want);
  if (!want) return y_id;
  tape.on_backward([&tape, a_id, b_id, y_id, Fa, Fb, F] {
    const Block& gy = tape.grad(y_id);
    const std::size_t n = gy.rows * gy.comps;
    if (tape.needs_grad(a_id)) {
      Block& ga = tape.grad(a_id);
      for (std::size_t rc = 0; rc < n; ++rc)
        for (std::size_t f = 0; f < Fa; ++f) ga.data[rc * Fa + f] += gy.data[rc * F + f];
    }
    if (tape.needs_grad(b_id)) {
      Block& gb = tape.grad(b_id);
      for (std::size_t rc = 0; rc < n; ++rc)
        for (std::size_t f = 0; f < Fb; ++f) gb.data[rc * Fb + f] += gy.data[rc * F + Fa + f];
    }
  });
  return y_id;
}

NodeId embedding(Tape& tape, std::span<const int> index, const ParamView& table) {
  const std::size_t D = table.cols;
  Block y(index.size(), 1, D);
  const auto values = tape.store().values(table);
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] >= 0 && static_cast<std::size_t>(index[r]) < table.rows, "embedding: index out of range");
    std::copy_n(values.begin() + index[r] * D, D, y.data.begin() + r * D);
  }
  const NodeId y_id = tape.emit(std::move(y), true);
  std::vector<int> idx(index.begin(), index.end());
  tape.on_backward([&tape, y_id, table, idx = std::move(idx), D] {
    const Block& gy = tape.grad(y_id);
    auto g = tape.store().grads(table);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t d = 0; d < D; ++d) g[idx[r] * D + d] += gy.data[r * D + d];
  });
  return y_id;
}

NodeId parameter(Tape& tape, const ParamView& view) {
  Block y(1, 1, view.size());
  const auto values = tape.store().values(view);
  std::copy(values.begin(), values.end(), y.data.begin());
  const NodeId y_id = tape.emit(std::move(y), true);
  tape.on_backward([&tape, y_id, view] {
    const Block& gy = tape.grad(y_id);
    auto g = tape.store().grads(view);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy.data[i];
  });
  return y_id;
}

NodeId sum_all(Tape& tape, NodeId x_id) {
  Block y(1, 1, 1);
  for (double e : tape.value(x_id).data) y.data[0] += e;
  const bool want = tape.needs_grad(x_id);
  const NodeId y_id = tape.emit(std::move(y), want);
  if (want)
    tape.on_backward([&tape, x_id, y_id] {
      const double g = tape.grad(y_id).data[0];
      for (double& e : tape.grad(x_id).data) e += g;
    });
  return y_id;
}

NodeId sum_squares(Tape& tape, NodeId x_id) {
  Block y(1, 1, 1);
  for (double e : tape.value(x_id).data) y.data[0] += e * e;
  const bool want = tape.needs_grad(x_id);
  const NodeId y_id = tape.emit(std::move(y), want);
  if (want)
    tape.on_backward([&tape, x_id, y_id] {
      const double g = tape.grad(y_id).data[0];
      const Block& x = tape.value(x_id);
      Block& gx = tape.grad(x_id);
      for (std::size_t i = 0; i < x.data.size(); ++i) gx.data[i] += 2.0 * g * x.data[i];
    });
  return y_id;
}

NodeId softmax_cross_entropy(Tape& tape, NodeId logits_id, std::span<const int> labels) {
  const Block& z = tape.value(logits_id);
  require(z.comps == 1 && z.features == 2 && z.rows == labels.size() && !labels.empty(),
          "softmax_cross_entropy: expected B x 2 logits");
  Block y(1, 1, 1);
  y.data[0] = ad::cross_entropy_loss(z.data, labels);
  const bool want = tape.needs_grad(logits_id);
  const NodeId y_id = tape.emit(std::move(y), want);
  if (!want) return y_id;
  std::vector<int> lab(labels.begin(), labels.end());
  tape.on_backward([&tape, logits_id, y_id, lab = std::move(lab)] {
    const double g = tape.grad(y_id).data[0] / static_cast<double>(lab.size());
    const Block& zv = tape.value(logits_id);
    Block& gz = tape.grad(logits_id);
    for (std::size_t b = 0; b < lab.size(); ++b) {
      const double l0 = zv.data[2 * b], l1 = zv.data[2 * b + 1];
      const double hi = std::max(l0, l1);
      const double e0 = std::exp(l0 - hi), e1 = std::exp(l1 - hi);
      const double p1 = e1 / (e0 + e1);
      const double p0 = 1.0 - p1;
      gz.data[2 * b] += g * (p0 - (lab[b] == 0 ? 1.0 : 0.0));
      gz.data[2 * b + 1] += g * (p1 - (lab[b] == 1 ? 1.0 : 0.0));
    }
  });
  return y_id;
}

}  // namespace btn::ops
