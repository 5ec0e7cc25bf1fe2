#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace btn::ad {

/// Dense activations for `rows` items with `features` channels of `comps`
/// components each (1 scalar, 3 vector, 9 tensor). Layout is
/// [row][component][feature] so that a feature-mixing layer is a single GEMM
/// on a (rows*comps) x features matrix.
struct Block {
  std::size_t rows = 0;
  std::size_t comps = 1;
  std::size_t features = 0;
  std::vector<double> data;

  Block() = default;
  Block(std::size_t rows, std::size_t comps, std::size_t features)
      : rows(rows), comps(comps), features(features), data(rows * comps * features, 0.0) {}

  double& at(std::size_t r, std::size_t c, std::size_t f) { return data[(r * comps + c) * features + f]; }
  double at(std::size_t r, std::size_t c, std::size_t f) const { return data[(r * comps + c) * features + f]; }
  bool same_shape(const Block& o) const {
    return rows == o.rows && comps == o.comps && features == o.features;
  }
};

/// A rows x cols slice of the flat parameter array.
struct ParamView {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

struct NamedView {
  std::string name;
  ParamView view;
};

/// Flat parameter values with a congruent gradient array.
class ParamStore {
 public:
  ParamView add(std::string name, std::size_t rows, std::size_t cols);

  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }
  std::span<double> values(const ParamView& v) { return {values_.data() + v.offset, v.size()}; }
  std::span<const double> values(const ParamView& v) const {
    return {values_.data() + v.offset, v.size()};
  }
  std::span<double> grads(const ParamView& v) { return {grads_.data() + v.offset, v.size()}; }

  const std::vector<NamedView>& views() const { return views_; }
  const ParamView& view(const std::string& name) const;
  void zero_grads();

 private:
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<NamedView> views_;
};

using NodeId = std::size_t;

/// Records a forward computation for a single reverse sweep. Ops append a
/// value node and, when recording, a closure that propagates the node's
/// gradient to its inputs and to parameters in the store.
class Tape {
 public:
  explicit Tape(ParamStore& store, bool record = true) : store_(&store), record_(record) {}

  /// A node that never receives a gradient (network inputs).
  NodeId constant(Block value);
  NodeId emit(Block value, bool needs_grad);

  const Block& value(NodeId id) const { return nodes_.at(id).value; }
  /// Lazily allocated, zero-initialised.
  Block& grad(NodeId id);
  bool needs_grad(NodeId id) const { return nodes_.at(id).needs_grad; }
  bool recording() const { return record_; }
  ParamStore& store() { return *store_; }
  std::size_t size() const { return nodes_.size(); }

  void on_backward(std::function<void()> fn);

  /// Seeds d(loss)/d(loss) and runs every closure once in reverse order.
  /// Throws std::logic_error if the tape was already consumed or not recording.
  void backward(NodeId loss, double seed = 1.0);
  bool consumed() const { return consumed_; }

  /// Piecewise ops log which branch each element took; two forward passes
  /// with equal signatures lie on the same smooth piece.
  void set_track_branches(bool on) { track_branches_ = on; }
  void note_branch(bool upper) {
    if (track_branches_) branches_.push_back(upper ? 1 : 0);
  }
  const std::vector<unsigned char>& branch_signature() const { return branches_; }

 private:
  struct Node {
    Block value;
    Block grad;
    bool needs_grad = false;
    bool grad_ready = false;
  };
  ParamStore* store_;
  bool record_;
  bool consumed_ = false;
  bool track_branches_ = false;
  std::deque<Node> nodes_;  // stable references across emit()
  std::vector<std::function<void()>> backward_fns_;
  std::vector<unsigned char> branches_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update on every parameter, then zeroes the gradients.
void adam_step(AdamState& state, ParamStore& store);

/// Mean over rows of -log softmax(logits)[label], with log-sum-exp
/// stabilisation. Throws std::invalid_argument for labels outside {0, 1}.
double cross_entropy_loss(std::span<const double> logits, std::span<const int> labels);

/// Builds a loss on the given tape and returns its node.
using LossFn = std::function<NodeId(Tape&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Samples whose +-h probes crossed an activation kink and were redrawn.
  std::size_t skipped = 0;
};

/// Compares backward() against central differences on `n_params` randomly
/// chosen parameters. Relative error is |g - fd| / max(|g|, |fd|, floor * max(1, |L|));
/// below that gradient size a double-precision difference quotient at h = 1e-5
/// cannot resolve a 1e-5 relative error.
GradCheckResult finite_diff_check(ParamStore& store, const LossFn& loss, std::size_t n_params,
                                  double h, std::mt19937_64& rng, double floor = 1e-5);

}  // namespace btn::ad
