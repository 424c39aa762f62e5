#pragma once

#include "ecgan/common.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ecgan {

/// A named trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

/// Geometry of a batch of images stored one flattened CHW image per row.
struct ImageShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  int flat() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

struct Conv2dGeometry {
  ImageShape in;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  ImageShape out() const {
    return {out_channels, (in.height + 2 * padding - kernel) / stride + 1,
            (in.width + 2 * padding - kernel) / stride + 1};
  }
};

/// Tape-based reverse-mode differentiation over dense matrices.
///
/// A Graph is built for one loss evaluation and discarded afterwards. Nodes
/// created from parameters with `track = true` push their gradient into
/// `Parameter::grad` during backward(); everything else is treated as a
/// constant and pruned from the backward sweep.
class Graph {
 public:
  struct Var {
    int id = -1;
  };

  Var constant(Matrix value);
  Var param(Parameter& p, bool track = true);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_row(Var a, Var row);  // broadcast a 1×n row over every row of a
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }
  Var transpose(Var a);

  Var leaky_relu(Var a, double slope);
  Var relu(Var a);
  Var tanh(Var a);

  Var concat_cols(Var a, Var b);
  Var concat_rows(Var a, Var b);
  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
  Var gather_rows(Var table, std::span<const int> rows);
  Var pick(Var a, std::span<const int> cols);  // out[i] = a(i, cols[i]); shape m×1
  Var row_dot(Var a, Var b);                    // out[i] = <a_i, b_i>; shape m×1
  Var row_logsumexp(Var a);
  Var masked_row_logsumexp(Var a, const Matrix& mask);  // mask entries 0/1, ≥1 per row

  Var sum(Var a);
  Var mean(Var a);

  /// W / σ with σ = uᵀ W v; u and v are treated as constants.
  Var spectral_norm(Var w, const Vector& u, const Vector& v);

  /// Rows of `x` are flattened CHW images; `kernel` is out_channels × (C·k·k).
  Var conv2d(Var x, Var kernel, Var bias, const Conv2dGeometry& geom);
  Var upsample_nearest2(Var x, const ImageShape& shape);

  /// Seeds d(out)/d(out) = 1 for a 1×1 node and sweeps the tape backwards.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* target = nullptr;
    std::function<void(Graph&, int)> backward;
  };

  Var push(Matrix value, bool requires_grad, std::function<void(Graph&, int)> bw);
  Matrix& grad_of(int id);

  std::vector<Node> nodes_;
};

}  // namespace ecgan
