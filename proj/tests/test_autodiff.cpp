#include <doctest.h>

#include <cmath>

#include "btn/autodiff.hpp"
#include "btn/ops.hpp"
#include "helpers.hpp"

using namespace btn;
using namespace btn::ad;

TEST_CASE("sum of parameters has unit gradients") {
  ParamStore store;
  const auto w = store.add("w", 3, 4);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& x : store.values()) x = n(rng);
  Tape tape(store);
  tape.backward(ops::sum_all(tape, ops::parameter(tape, w)));
  for (double g : store.grads()) CHECK(g == 1.0);
}

TEST_CASE("scalar affine under a quadratic loss matches the closed form") {
  // loss = sum_r sum_o (W x_r + b)_o^2, dW = 2 y x^T, db = 2 sum_r y
  ParamStore store;
  const ops::DenseParams p{store.add("w", 2, 3), store.add("b", 1, 2)};
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& x : store.values()) x = n(rng);
  Block x(4, 1, 3);
  for (double& e : x.data) e = n(rng);

  Tape tape(store);
  tape.backward(ops::sum_squares(tape, ops::affine(tape, tape.constant(x), p)));

  const auto W = store.values(p.weight), b = store.values(*p.bias);
  std::vector<double> dw(6, 0.0), db(2, 0.0);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t o = 0; o < 2; ++o) {
      double y = b[o];
      for (std::size_t i = 0; i < 3; ++i) y += W[o * 3 + i] * x.at(r, 0, i);
      for (std::size_t i = 0; i < 3; ++i) dw[o * 3 + i] += 2 * y * x.at(r, 0, i);
      db[o] += 2 * y;
    }
  const auto g = store.grads();
  for (std::size_t i = 0; i < 6; ++i) CHECK(g[p.weight.offset + i] == doctest::Approx(dw[i]).epsilon(1e-13));
  for (std::size_t i = 0; i < 2; ++i) CHECK(g[p.bias->offset + i] == doctest::Approx(db[i]).epsilon(1e-13));
}

TEST_CASE("tape is single use") {
  ParamStore store;
  const auto w = store.add("w", 1, 1);
  Tape tape(store);
  const auto loss = ops::sum_all(tape, ops::parameter(tape, w));
  tape.backward(loss);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
  Tape off(store, false);
  CHECK_THROWS_AS(off.backward(ops::sum_all(off, ops::parameter(off, w))), std::logic_error);
}

TEST_CASE("cross entropy values") {
  const std::vector<int> y0{0}, y1{1};
  const std::vector<double> even{0.0, 0.0};
  CHECK(cross_entropy_loss(even, y0) == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy_loss(even, y1) == doctest::Approx(std::log(2.0)));
  // log(1 + e^-20), expanded
  const double ref = std::exp(-20.0) - std::exp(-40.0) / 2;
  const std::vector<double> sharp{10.0, -10.0};
  CHECK(cross_entropy_loss(sharp, y0) == doctest::Approx(ref).epsilon(1e-12));
  CHECK(cross_entropy_loss(sharp, y0) == doctest::Approx(2.061e-9).epsilon(1e-3));
  const std::vector<double> huge{800.0, -800.0};
  CHECK(std::isfinite(cross_entropy_loss(huge, y1)));
  CHECK(cross_entropy_loss(huge, y1) == doctest::Approx(1600.0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> z{n(rng), n(rng)};
    CHECK(cross_entropy_loss(z, y0) >= 0.0);
  }
  const std::vector<int> bad{2};
  CHECK_THROWS_AS(cross_entropy_loss(even, bad), std::invalid_argument);
}

TEST_CASE("adam_step") {
  ParamStore store;
  store.add("w", 1, 3);
  store.values()[0] = 1.0;
  store.values()[1] = -2.0;
  AdamState st;
  adam_step(st, store);
  CHECK(st.step == 1);
  CHECK(store.values()[0] == 1.0);
  CHECK(store.values()[1] == -2.0);

  for (int i = 0; i < 50; ++i) {
    store.grads()[0] = 0.3;
    store.grads()[1] = -0.3;
    adam_step(st, store);
    CHECK(st.step == static_cast<std::uint64_t>(i + 2));
    for (double g : store.grads()) CHECK(g == 0.0);
  }
  CHECK(store.values()[0] < 1.0);
  CHECK(store.values()[1] > -2.0);
  // bias-corrected first step moves by lr
  ParamStore s2;
  s2.add("w", 1, 1);
  AdamState a2;
  s2.grads()[0] = 4.0;
  adam_step(a2, s2);
  CHECK(s2.values()[0] == doctest::Approx(-a2.config.lr).epsilon(1e-6));
}

TEST_CASE("finite differences on a linear model are exact to roundoff") {
  ParamStore store;
  const ops::DenseParams p{store.add("w", 2, 3), store.add("b", 1, 2)};
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& x : store.values()) x = n(rng);
  Block x(5, 1, 3);
  for (double& e : x.data) e = n(rng);
  const auto loss = [&](Tape& t) { return ops::sum_all(t, ops::affine(t, t.constant(x), p)); };
  const auto r = finite_diff_check(store, loss, 8, 1e-5, rng);
  CHECK(r.checked == 8);
  CHECK(r.max_rel_error < 1e-9);
}

TEST_CASE("finite differences catch a wrong backward") {
  // y = sum x^2 with a backward that drops the factor 2
  ParamStore store;
  const auto w = store.add("w", 1, 4);
  std::mt19937_64 rng(5);
  for (double& x : store.values()) x = 1.0 + std::normal_distribution<double>(0.0, 0.1)(rng);
  const auto loss = [&](Tape& t) {
    const NodeId x = ops::parameter(t, w);
    Block y(1, 1, 1);
    for (double e : t.value(x).data) y.data[0] += e * e;
    const NodeId y_id = t.emit(std::move(y), true);
    t.on_backward([&t, x, y_id] {
      const double g = t.grad(y_id).data[0];
      Block& gx = t.grad(x);
      for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += g * t.value(x).data[i];
    });
    return y_id;
  };
  const auto r = finite_diff_check(store, loss, 4, 1e-5, rng);
  CHECK(r.max_rel_error > 0.4);
}

TEST_CASE("log_relu values and gradient") {
  ParamStore store;
  const auto id = store.add("x", 1, 4);
  auto v = store.values(id);
  v[0] = -1.0;
  v[1] = 0.0;
  v[2] = 1.0;
  v[3] = std::exp(2.0) - 1.0;
  Tape tape(store);
  const auto y = ops::log_relu(tape, ops::parameter(tape, id));
  const auto& yv = tape.value(y);
  CHECK(yv.data[0] == 0.0);
  CHECK(yv.data[1] == 0.0);
  CHECK(yv.data[2] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(yv.data[3] == doctest::Approx(2.0).epsilon(1e-15));
  tape.backward(ops::sum_all(tape, y));
  const auto g = store.grads(id);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(g[3] == doctest::Approx(std::exp(-2.0)).epsilon(1e-13));
}

TEST_CASE("segment_sum pools rows per event") {
  ParamStore store;
  Block x(4, 3, 2);
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = static_cast<double>(i);
  Tape tape(store, false);
  const std::vector<std::size_t> off{0, 1, 4};
  const Block& y = tape.value(ops::segment_sum(tape, tape.constant(x), off, 0.5));
  CHECK(y.rows == 2);
  CHECK(y.at(0, 2, 1) == 0.5 * x.at(0, 2, 1));
  CHECK(y.at(1, 1, 0) == 0.5 * (x.at(1, 1, 0) + x.at(2, 1, 0) + x.at(3, 1, 0)));
}

TEST_CASE("rotate_rows round trip") {
  std::mt19937_64 rng(6);
  Block x(3, 9, 2);
  for (double& e : x.data) e = std::normal_distribution<double>(0.0, 1.0)(rng);
  std::vector<Mat3> frames;
  for (int i = 0; i < 3; ++i) frames.push_back(random_rotation(rng).matrix());
  const Block back = ops::rotate_rows(ops::rotate_rows(x, frames, false), frames, true);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(back.data[i] == doctest::Approx(x.data[i]).epsilon(1e-14));
  // row 1, feature 0 as a matrix: F T F^T
  Mat3 t;
  for (int c = 0; c < 9; ++c) t(c / 3, c % 3) = x.at(1, c, 0);
  const Block fwd = ops::rotate_rows(x, frames, false);
  const Mat3 expect = frames[1] * t * frames[1].transpose();
  for (int c = 0; c < 9; ++c) CHECK(fwd.at(1, c, 0) == doctest::Approx(expect(c / 3, c % 3)).epsilon(1e-13));
}
