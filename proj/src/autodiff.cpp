#include "ecgan/autodiff.hpp"

#include <cmath>

namespace ecgan {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()) + ")");
  }
}

Matrix im2col(const double* image, const Conv2dGeometry& g) {
  const ImageShape o = g.out();
  const int k = g.kernel;
  Matrix cols = Matrix::Zero(g.in.channels * k * k, o.height * o.width);
  for (int c = 0; c < g.in.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int row = (c * k + ky) * k + kx;
        for (int oy = 0; oy < o.height; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.in.height) continue;
          for (int ox = 0; ox < o.width; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.in.width) continue;
            cols(row, oy * o.width + ox) = image[(c * g.in.height + iy) * g.in.width + ix];
          }
        }
      }
    }
  }
  return cols;
}

void col2im_add(const Matrix& cols, const Conv2dGeometry& g, double* image) {
  const ImageShape o = g.out();
  const int k = g.kernel;
  for (int c = 0; c < g.in.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int row = (c * k + ky) * k + kx;
        for (int oy = 0; oy < o.height; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.in.height) continue;
          for (int ox = 0; ox < o.width; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.in.width) continue;
            image[(c * g.in.height + iy) * g.in.width + ix] += cols(row, oy * o.width + ox);
          }
        }
      }
    }
  }
}

}  // namespace

Graph::Var Graph::push(Matrix value, bool requires_grad, std::function<void(Graph&, int)> bw) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix& Graph::grad_of(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

double Graph::scalar(Var v) const {
  const Matrix& m = nodes_[v.id].value;
  require(m.rows() == 1 && m.cols() == 1, "scalar(): node is not 1x1");
  return m(0, 0);
}

Graph::Var Graph::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Graph::Var Graph::param(Parameter& p, bool track) {
  Var v = push(p.value, track, [](Graph&, int) {});
  if (track) nodes_[v.id].target = &p;
  return v;
}

Graph::Var Graph::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.cols() == bv.rows(), "matmul: inner dimension mismatch");
  return push(av * bv, requires_grad(a) || requires_grad(b), [a, b](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    if (g.requires_grad(a)) g.grad_of(a.id).noalias() += go * g.value(b).transpose();
    if (g.requires_grad(b)) g.grad_of(b.id).noalias() += g.value(a).transpose() * go;
  });
}

Graph::Var Graph::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  return push(value(a) + value(b), requires_grad(a) || requires_grad(b), [a, b](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    if (g.requires_grad(a)) g.grad_of(a.id) += go;
    if (g.requires_grad(b)) g.grad_of(b.id) += go;
  });
}

Graph::Var Graph::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  return push(value(a) - value(b), requires_grad(a) || requires_grad(b), [a, b](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    if (g.requires_grad(a)) g.grad_of(a.id) += go;
    if (g.requires_grad(b)) g.grad_of(b.id) -= go;
  });
}

Graph::Var Graph::mul(Var a, Var b) {
  check_same_shape(value(a), value(b), "mul");
  Matrix out = value(a).cwiseProduct(value(b));
  return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    if (g.requires_grad(a)) g.grad_of(a.id) += go.cwiseProduct(g.value(b));
    if (g.requires_grad(b)) g.grad_of(b.id) += go.cwiseProduct(g.value(a));
  });
}

Graph::Var Graph::add_row(Var a, Var row) {
  const Matrix& av = value(a);
  const Matrix& rv = value(row);
  require(rv.rows() == 1 && rv.cols() == av.cols(), "add_row: row shape mismatch");
  Matrix out = av.rowwise() + rv.row(0);
  return push(std::move(out), requires_grad(a) || requires_grad(row), [a, row](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    if (g.requires_grad(a)) g.grad_of(a.id) += go;
    if (g.requires_grad(row)) g.grad_of(row.id) += go.colwise().sum();
  });
}

Graph::Var Graph::scale(Var a, double c) {
  return push(value(a) * c, requires_grad(a), [a, c](Graph& g, int self) {
    g.grad_of(a.id) += g.nodes_[self].grad * c;
  });
}

Graph::Var Graph::add_scalar(Var a, double c) {
  return push(value(a).array() + c, requires_grad(a), [a](Graph& g, int self) {
    g.grad_of(a.id) += g.nodes_[self].grad;
  });
}

Graph::Var Graph::transpose(Var a) {
  return push(value(a).transpose(), requires_grad(a), [a](Graph& g, int self) {
    g.grad_of(a.id) += g.nodes_[self].grad.transpose();
  });
}

Graph::Var Graph::leaky_relu(Var a, double slope) {
  Matrix out = value(a).unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return push(std::move(out), requires_grad(a), [a, slope](Graph& g, int self) {
    const Matrix& x = g.value(a);
    Matrix d = x.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    g.grad_of(a.id) += g.nodes_[self].grad.cwiseProduct(d);
  });
}

Graph::Var Graph::relu(Var a) { return leaky_relu(a, 0.0); }

Graph::Var Graph::tanh(Var a) {
  Matrix out = value(a).array().tanh();
  return push(std::move(out), requires_grad(a), [a](Graph& g, int self) {
    const Matrix& y = g.nodes_[self].value;
    Matrix d = (1.0 - y.array().square()).matrix();
    g.grad_of(a.id) += g.nodes_[self].grad.cwiseProduct(d);
  });
}

Graph::Var Graph::concat_cols(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.rows() == bv.rows(), "concat_cols: row count mismatch");
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const Eigen::Index ac = av.cols();
  const Eigen::Index bc = bv.cols();
  return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b, ac, bc](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    if (g.requires_grad(a)) g.grad_of(a.id) += go.leftCols(ac);
    if (g.requires_grad(b)) g.grad_of(b.id) += go.rightCols(bc);
  });
}

Graph::Var Graph::concat_rows(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.cols() == bv.cols(), "concat_rows: column count mismatch");
  Matrix out(av.rows() + bv.rows(), av.cols());
  out << av, bv;
  const Eigen::Index ar = av.rows();
  const Eigen::Index br = bv.rows();
  return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b, ar, br](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    if (g.requires_grad(a)) g.grad_of(a.id) += go.topRows(ar);
    if (g.requires_grad(b)) g.grad_of(b.id) += go.bottomRows(br);
  });
}

Graph::Var Graph::slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& av = value(a);
  require(start >= 0 && count >= 0 && start + count <= av.rows(), "slice_rows: range out of bounds");
  return push(av.middleRows(start, count), requires_grad(a), [a, start, count](Graph& g, int self) {
    g.grad_of(a.id).middleRows(start, count) += g.nodes_[self].grad;
  });
}

Graph::Var Graph::gather_rows(Var table, std::span<const int> rows) {
  const Matrix& t = value(table);
  std::vector<int> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), t.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < t.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = t.row(idx[i]);
  }
  return push(std::move(out), requires_grad(table), [table, idx](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    Matrix& gt = g.grad_of(table.id);
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += go.row(static_cast<Eigen::Index>(i));
  });
}

Graph::Var Graph::pick(Var a, std::span<const int> cols) {
  const Matrix& av = value(a);
  require(static_cast<Eigen::Index>(cols.size()) == av.rows(), "pick: one column index per row required");
  std::vector<int> idx(cols.begin(), cols.end());
  Matrix out(av.rows(), 1);
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    require(idx[i] >= 0 && idx[i] < av.cols(), "pick: column index out of range");
    out(i, 0) = av(i, idx[i]);
  }
  return push(std::move(out), requires_grad(a), [a, idx](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    Matrix& ga = g.grad_of(a.id);
    for (std::size_t i = 0; i < idx.size(); ++i) ga(static_cast<Eigen::Index>(i), idx[i]) += go(i, 0);
  });
}

Graph::Var Graph::row_dot(Var a, Var b) {
  check_same_shape(value(a), value(b), "row_dot");
  Matrix out = value(a).cwiseProduct(value(b)).rowwise().sum();
  return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    if (g.requires_grad(a)) g.grad_of(a.id).array() += g.value(b).array().colwise() * go.col(0).array();
    if (g.requires_grad(b)) g.grad_of(b.id).array() += g.value(a).array().colwise() * go.col(0).array();
  });
}

Graph::Var Graph::row_logsumexp(Var a) {
  return masked_row_logsumexp(a, Matrix::Ones(value(a).rows(), value(a).cols()));
}

Graph::Var Graph::masked_row_logsumexp(Var a, const Matrix& mask) {
  const Matrix& av = value(a);
  check_same_shape(av, mask, "masked_row_logsumexp");
  require(av.cols() > 0, "masked_row_logsumexp: empty rows");
  const Eigen::Index m = av.rows();
  Matrix out(m, 1);
  Matrix weights = Matrix::Zero(av.rows(), av.cols());  // softmax over the masked entries
  for (Eigen::Index i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < av.cols(); ++j)
      if (mask(i, j) != 0.0) mx = std::max(mx, av(i, j));
    require(std::isfinite(mx), "masked_row_logsumexp: row has no finite masked entry");
    double s = 0.0;
    for (Eigen::Index j = 0; j < av.cols(); ++j) {
      if (mask(i, j) == 0.0) continue;
      weights(i, j) = std::exp(av(i, j) - mx);
      s += weights(i, j);
    }
    weights.row(i) /= s;
    out(i, 0) = mx + std::log(s);
  }
  return push(std::move(out), requires_grad(a), [a, weights](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    g.grad_of(a.id) += (weights.array().colwise() * go.col(0).array()).matrix();
  });
}

Graph::Var Graph::sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), requires_grad(a), [a](Graph& g, int self) {
    g.grad_of(a.id).array() += g.nodes_[self].grad(0, 0);
  });
}

Graph::Var Graph::mean(Var a) {
  const double n = static_cast<double>(value(a).size());
  require(n > 0, "mean: empty input");
  Matrix out(1, 1);
  out(0, 0) = value(a).sum() / n;
  return push(std::move(out), requires_grad(a), [a, n](Graph& g, int self) {
    g.grad_of(a.id).array() += g.nodes_[self].grad(0, 0) / n;
  });
}

Graph::Var Graph::spectral_norm(Var w, const Vector& u, const Vector& v) {
  const Matrix& wv = value(w);
  require(u.size() == wv.rows() && v.size() == wv.cols(), "spectral_norm: vector sizes do not match weight");
  const double sigma = u.dot(wv * v);
  require(sigma > 0.0 && std::isfinite(sigma), "spectral_norm: non-positive singular value estimate");
  Matrix out = wv / sigma;
  return push(std::move(out), requires_grad(w), [w, u, v, sigma](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    const Matrix& wn = g.nodes_[self].value;
    const double inner = go.cwiseProduct(wn).sum();
    g.grad_of(w.id) += (go - inner * (u * v.transpose())) / sigma;
  });
}

Graph::Var Graph::conv2d(Var x, Var kernel, Var bias, const Conv2dGeometry& geom) {
  const Matrix& xv = value(x);
  const Matrix& kv = value(kernel);
  const Matrix& bv = value(bias);
  const ImageShape o = geom.out();
  require(xv.cols() == geom.in.flat(), "conv2d: input width does not match geometry");
  require(kv.rows() == geom.out_channels && kv.cols() == geom.in.channels * geom.kernel * geom.kernel,
          "conv2d: kernel shape mismatch");
  require(bv.rows() == 1 && bv.cols() == geom.out_channels, "conv2d: bias shape mismatch");
  require(o.height > 0 && o.width > 0, "conv2d: empty output");

  Matrix out(xv.rows(), o.flat());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    Matrix cols = im2col(xv.row(i).data(), geom);
    Matrix y = kv * cols;
    y.colwise() += bv.row(0).transpose();
    out.row(i) = Eigen::Map<const RowVector>(y.data(), y.size());
  }
  const bool rg = requires_grad(x) || requires_grad(kernel) || requires_grad(bias);
  return push(std::move(out), rg, [x, kernel, bias, geom, o](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    const Matrix& xv = g.value(x);
    const Matrix& kv = g.value(kernel);
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
      Eigen::Map<const Matrix> dy(go.row(i).data(), o.channels, o.height * o.width);
      if (g.requires_grad(kernel)) g.grad_of(kernel.id).noalias() += dy * im2col(xv.row(i).data(), geom).transpose();
      if (g.requires_grad(bias)) g.grad_of(bias.id) += dy.rowwise().sum().transpose();
      if (g.requires_grad(x)) {
        Matrix dcols = kv.transpose() * dy;
        col2im_add(dcols, geom, g.grad_of(x.id).row(i).data());
      }
    }
  });
}

Graph::Var Graph::upsample_nearest2(Var x, const ImageShape& s) {
  const Matrix& xv = value(x);
  require(xv.cols() == s.flat(), "upsample_nearest2: input width does not match shape");
  const int H2 = 2 * s.height;
  const int W2 = 2 * s.width;
  Matrix out(xv.rows(), s.channels * H2 * W2);
  for (Eigen::Index i = 0; i < xv.rows(); ++i)
    for (int c = 0; c < s.channels; ++c)
      for (int y = 0; y < H2; ++y)
        for (int xx = 0; xx < W2; ++xx)
          out(i, (c * H2 + y) * W2 + xx) = xv(i, (c * s.height + y / 2) * s.width + xx / 2);
  return push(std::move(out), requires_grad(x), [x, s, H2, W2](Graph& g, int self) {
    const Matrix& go = g.nodes_[self].grad;
    Matrix& gx = g.grad_of(x.id);
    for (Eigen::Index i = 0; i < go.rows(); ++i)
      for (int c = 0; c < s.channels; ++c)
        for (int y = 0; y < H2; ++y)
          for (int xx = 0; xx < W2; ++xx)
            gx(i, (c * s.height + y / 2) * s.width + xx / 2) += go(i, (c * H2 + y) * W2 + xx);
  });
}

void Graph::backward(Var out) {
  require(value(out).rows() == 1 && value(out).cols() == 1, "backward: output must be a 1x1 node");
  if (!requires_grad(out)) return;
  grad_of(out.id).setOnes();
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.target != nullptr) {
      n.target->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

}  // namespace ecgan
