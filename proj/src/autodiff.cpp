#include "btn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace btn::ad {

ParamView ParamStore::add(std::string name, std::size_t rows, std::size_t cols) {
  for (const auto& v : views_)
    if (v.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
  ParamView view{values_.size(), rows, cols};
  values_.resize(values_.size() + view.size(), 0.0);
  grads_.resize(values_.size(), 0.0);
  views_.push_back({std::move(name), view});
  return view;
}

const ParamView& ParamStore::view(const std::string& name) const {
  for (const auto& v : views_)
    if (v.name == name) return v.view;
  throw std::out_of_range("unknown parameter: " + name);
}

void ParamStore::zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

NodeId Tape::constant(Block value) { return emit(std::move(value), false); }

NodeId Tape::emit(Block value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad && record_;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Block& Tape::grad(NodeId id) {
  Node& n = nodes_.at(id);
  if (!n.grad_ready) {
    n.grad = Block(n.value.rows, n.value.comps, n.value.features);
    n.grad_ready = true;
  }
  return n.grad;
}

void Tape::on_backward(std::function<void()> fn) {
  if (record_) backward_fns_.push_back(std::move(fn));
}

void Tape::backward(NodeId loss, double seed) {
  if (!record_) throw std::logic_error("backward on a non-recording tape");
  if (consumed_) throw std::logic_error("tape already consumed");
  consumed_ = true;
  Block& g = grad(loss);
  std::fill(g.data.begin(), g.data.end(), seed);
  for (auto it = backward_fns_.rbegin(); it != backward_fns_.rend(); ++it) (*it)();
  backward_fns_.clear();
}

void adam_step(AdamState& state, ParamStore& store) {
  const std::size_t n = store.size();
  if (state.m.size() != n) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  auto values = store.values();
  auto grads = store.grads();
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double mhat = state.m[i] / correct1;
    const double vhat = state.v[i] / correct2;
    values[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
  store.zero_grads();
}

double cross_entropy_loss(std::span<const double> logits, std::span<const int> labels) {
  if (logits.size() != 2 * labels.size() || labels.empty())
    throw std::invalid_argument("cross_entropy_loss: expected B x 2 logits");
  double total = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] != 0 && labels[b] != 1)
      throw std::invalid_argument("cross_entropy_loss: label must be 0 or 1");
    const double l0 = logits[2 * b], l1 = logits[2 * b + 1];
    const double hi = std::max(l0, l1);
    const double lse = hi + std::log(std::exp(l0 - hi) + std::exp(l1 - hi));
    total += lse - (labels[b] == 0 ? l0 : l1);
  }
  return total / static_cast<double>(labels.size());
}

GradCheckResult finite_diff_check(ParamStore& store, const LossFn& loss, std::size_t n_params,
                                  double h, std::mt19937_64& rng, double floor) {
  GradCheckResult result;
  if (store.size() == 0 || n_params == 0) return result;

  store.zero_grads();
  std::vector<double> analytic;
  {
    Tape tape(store);
    tape.backward(loss(tape));
    analytic.assign(store.grads().begin(), store.grads().end());
  }
  store.zero_grads();

  auto evaluate = [&](std::vector<unsigned char>& signature) {
    Tape tape(store, false);
    tape.set_track_branches(true);
    const NodeId id = loss(tape);
    signature = tape.branch_signature();
    return tape.value(id).data.at(0);
  };

  std::vector<unsigned char> base_sig, plus_sig, minus_sig;
  // roundoff in the loss is ~eps |L| / h in the difference quotient, so the
  // floor grows with the loss
  const double scaled_floor = floor * std::max(1.0, std::abs(evaluate(base_sig)));

  std::uniform_int_distribution<std::size_t> pick(0, store.size() - 1);
  auto values = store.values();
  const std::size_t max_attempts = 50 * n_params;
  for (std::size_t attempt = 0; result.checked < n_params && attempt < max_attempts; ++attempt) {
    const std::size_t i = pick(rng);
    const double saved = values[i];
    values[i] = saved + h;
    const double plus = evaluate(plus_sig);
    values[i] = saved - h;
    const double minus = evaluate(minus_sig);
    values[i] = saved;
    if (plus_sig != base_sig || minus_sig != base_sig) {
      ++result.skipped;
      continue;
    }
    const double fd = (plus - minus) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(fd), scaled_floor});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic[i] - fd) / denom);
    ++result.checked;
  }
  return result;
}

}  // namespace btn::ad
