#pragma once

#include <optional>
#include <span>
#include <vector>

#include "btn/autodiff.hpp"
#include "btn/geometry.hpp"

// Batched, differentiable versions of the layer primitives. Every op reads
// its inputs from the tape, appends its output, and registers a backward
// closure when the tape is recording.

namespace btn::ops {

using ad::Block;
using ad::NodeId;
using ad::ParamView;
using ad::Tape;

/// weight: out x in. The bias (length out) is added to every row of a
/// scalar block and to the diagonal of every tensor; vector blocks take no
/// bias.
struct DenseParams {
  ParamView weight;
  std::optional<ParamView> bias;
};

NodeId affine(Tape& tape, NodeId x, const DenseParams& p);

/// Each view is out x in.
struct So2Views {
  ParamView a;
  ParamView b;
  ParamView phi;
};

/// `frames[r]` is axis_frame(j_r).matrix() for the axis attached to row r.
NodeId so2_vector(Tape& tape, NodeId x, const So2Views& p, std::span<const Mat3> frames);
NodeId so2_tensor(Tape& tape, NodeId x, const So2Views& left, const So2Views& right,
                  std::span<const Mat3> frames);

struct Mixed {
  NodeId scalars;
  NodeId vectors;
  std::optional<NodeId> tensors;
};

/// Batched bilinear_mix (or bilinear_mix_vector when `t` is empty).
Mixed bilinear(Tape& tape, NodeId s, NodeId v, std::optional<NodeId> t);

NodeId relu(Tape& tape, NodeId x);
/// log(1 + max(x, 0)), elementwise.
NodeId log_relu(Tape& tape, NodeId x);
NodeId vrelu(Tape& tape, NodeId x);
NodeId trelu(Tape& tape, NodeId x);

/// Sums rows [offsets[e], offsets[e+1]) into row e, times `scale`.
NodeId segment_sum(Tape& tape, NodeId x, std::span<const std::size_t> offsets, double scale = 1.0);

/// Scalars, then |v|^2 per vector feature, then ||T||_F^2 per tensor feature.
NodeId readout(Tape& tape, NodeId s, std::optional<NodeId> v, std::optional<NodeId> t);

/// Feature-axis concatenation of blocks with equal rows and comps.
NodeId concat(Tape& tape, NodeId a, NodeId b);

/// Row r gets table[index[r]]; the table view is n_classes x dim.
NodeId embedding(Tape& tape, std::span<const int> index, const ParamView& table);

/// A view of the store as a 1 x 1 x size node.
NodeId parameter(Tape& tape, const ParamView& view);

NodeId sum_all(Tape& tape, NodeId x);
NodeId sum_squares(Tape& tape, NodeId x);

/// Mean softmax cross-entropy of rows x 1 x 2 logits.
NodeId softmax_cross_entropy(Tape& tape, NodeId logits, std::span<const int> labels);

/// Rotates each row into (or, with `inverse`, out of) its frame. Blocks with
/// comps 1 are returned unchanged.
Block rotate_rows(const Block& x, std::span<const Mat3> frames, bool inverse);

}  // namespace btn::ops
