#pragma once

// Reverse-mode automatic differentiation on a tape of Eigen matrices.
// Every operation appends one node holding the result value and a backward
// closure that scatters the node's gradient to its inputs. Ops are batched
// at matrix granularity so a full model forward stays in the low thousands
// of tape nodes.
//
// Segmented reductions (segment_sum_cols, segment_softmax_row) accumulate
// summands in an order derived from the summand *values*, not their column
// positions. Relabeling graph nodes permutes edge lists but leaves each
// neighborhood's multiset of messages unchanged, so aggregated states stay
// bit-identical under within-type permutations.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "htgnn/errors.hpp"

namespace htgnn::ad {

using Mat = Eigen::MatrixXd;

class Tape {
 public:
  struct Node {
    Mat value;
    Mat grad;  // sized on first touch
    std::function<void(Tape&)> backward;
  };

  int push(Mat value) {
    nodes_.push_back(Node{std::move(value), Mat(), {}});
    return static_cast<int>(nodes_.size()) - 1;
  }
  void set_backward(int i, std::function<void(Tape&)> fn) {
    nodes_[i].backward = std::move(fn);
  }

  const Mat& val(int i) const { return nodes_[i].value; }

  Mat& grad_ref(int i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  // Seeds d(root)/d(root) = 1 and runs the tape in reverse. Root must be 1x1.
  void run_backward(int root) {
    if (val(root).rows() != 1 || val(root).cols() != 1)
      throw ShapeMismatch("backward root must be a 1x1 scalar");
    grad_ref(root)(0, 0) += 1.0;
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

struct Var {
  Tape* tape = nullptr;
  int idx = -1;
  bool valid() const { return tape != nullptr && idx >= 0; }
  const Mat& value() const { return tape->val(idx); }
  const Mat& grad() const { return tape->grad_ref(idx); }
};

inline Var constant(Tape& t, Mat v) { return Var{&t, t.push(std::move(v))}; }
inline Var leaf(Tape& t, Mat v) { return Var{&t, t.push(std::move(v))}; }

inline void backward(const Var& root) { root.tape->run_backward(root.idx); }

namespace detail {

inline void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch(std::string(op) + ": operand shapes differ");
}

}  // namespace detail

// ---- arithmetic -----------------------------------------------------------

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  detail::check_same_shape(t.val(a.idx), t.val(b.idx), "add");
  int io = t.push(t.val(a.idx) + t.val(b.idx));
  t.set_backward(io, [ia = a.idx, ib = b.idx, io](Tape& tp) {
    const Mat& g = tp.grad_ref(io);
    tp.grad_ref(ia) += g;
    tp.grad_ref(ib) += g;
  });
  return Var{&t, io};
}

inline Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  detail::check_same_shape(t.val(a.idx), t.val(b.idx), "sub");
  int io = t.push(t.val(a.idx) - t.val(b.idx));
  t.set_backward(io, [ia = a.idx, ib = b.idx, io](Tape& tp) {
    const Mat& g = tp.grad_ref(io);
    tp.grad_ref(ia) += g;
    tp.grad_ref(ib) -= g;
  });
  return Var{&t, io};
}

inline Var cmul(Var a, Var b) {
  Tape& t = *a.tape;
  detail::check_same_shape(t.val(a.idx), t.val(b.idx), "cmul");
  int io = t.push(t.val(a.idx).cwiseProduct(t.val(b.idx)));
  t.set_backward(io, [ia = a.idx, ib = b.idx, io](Tape& tp) {
    const Mat& g = tp.grad_ref(io);
    tp.grad_ref(ia) += g.cwiseProduct(tp.val(ib));
    tp.grad_ref(ib) += g.cwiseProduct(tp.val(ia));
  });
  return Var{&t, io};
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  int io = t.push(t.val(a.idx) * s);
  t.set_backward(io, [ia = a.idx, io, s](Tape& tp) {
    tp.grad_ref(ia) += tp.grad_ref(io) * s;
  });
  return Var{&t, io};
}

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  if (t.val(a.idx).cols() != t.val(b.idx).rows())
    throw ShapeMismatch("matmul: inner dimensions differ");
  int io = t.push(t.val(a.idx) * t.val(b.idx));
  t.set_backward(io, [ia = a.idx, ib = b.idx, io](Tape& tp) {
    const Mat& g = tp.grad_ref(io);
    tp.grad_ref(ia).noalias() += g * tp.val(ib).transpose();
    tp.grad_ref(ib).noalias() += tp.val(ia).transpose() * g;
  });
  return Var{&t, io};
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  int io = t.push(t.val(a.idx).transpose());
  t.set_backward(io, [ia = a.idx, io](Tape& tp) {
    tp.grad_ref(ia) += tp.grad_ref(io).transpose();
  });
  return Var{&t, io};
}

// M (r x c) + v (r x 1) broadcast over columns.
inline Var add_col_broadcast(Var m, Var v) {
  Tape& t = *m.tape;
  if (t.val(m.idx).rows() != t.val(v.idx).rows() || t.val(v.idx).cols() != 1)
    throw ShapeMismatch("add_col_broadcast: bias must be (rows x 1)");
  Mat out = t.val(m.idx);
  out.colwise() += Eigen::VectorXd(t.val(v.idx).col(0));
  int io = t.push(std::move(out));
  t.set_backward(io, [im = m.idx, iv = v.idx, io](Tape& tp) {
    const Mat& g = tp.grad_ref(io);
    tp.grad_ref(im) += g;
    tp.grad_ref(iv) += g.rowwise().sum();
  });
  return Var{&t, io};
}

// M (r x c) with column j scaled by w(0, j); w is (1 x c).
inline Var cmul_row_broadcast(Var m, Var w) {
  Tape& t = *m.tape;
  if (t.val(m.idx).cols() != t.val(w.idx).cols() || t.val(w.idx).rows() != 1)
    throw ShapeMismatch("cmul_row_broadcast: weights must be (1 x cols)");
  Mat out = t.val(m.idx).array().rowwise() * t.val(w.idx).row(0).array();
  int io = t.push(std::move(out));
  t.set_backward(io, [im = m.idx, iw = w.idx, io](Tape& tp) {
    const Mat& g = tp.grad_ref(io);
    tp.grad_ref(im).array() += g.array().rowwise() * tp.val(iw).row(0).array();
    tp.grad_ref(iw) += (g.cwiseProduct(tp.val(im))).colwise().sum();
  });
  return Var{&t, io};
}

// M (r x c) with gate g (r x 1) broadcast over columns (elementwise scale).
inline Var cmul_col_broadcast(Var m, Var v) {
  Tape& t = *m.tape;
  if (t.val(m.idx).rows() != t.val(v.idx).rows() || t.val(v.idx).cols() != 1)
    throw ShapeMismatch("cmul_col_broadcast: gate must be (rows x 1)");
  Mat out = t.val(m.idx).array().colwise() * t.val(v.idx).col(0).array();
  int io = t.push(std::move(out));
  t.set_backward(io, [im = m.idx, iv = v.idx, io](Tape& tp) {
    const Mat& g = tp.grad_ref(io);
    tp.grad_ref(im).array() += g.array().colwise() * tp.val(iv).col(0).array();
    tp.grad_ref(iv) += (g.cwiseProduct(tp.val(im))).rowwise().sum();
  });
  return Var{&t, io};
}

// Columns scaled by a constant per-column factor (no gradient through w).
inline Var scale_cols_const(Var m, const Eigen::RowVectorXd& w) {
  Tape& t = *m.tape;
  if (t.val(m.idx).cols() != w.cols())
    throw ShapeMismatch("scale_cols_const: factor count mismatch");
  Mat out = t.val(m.idx).array().rowwise() * w.array();
  int io = t.push(std::move(out));
  t.set_backward(io, [im = m.idx, io, w](Tape& tp) {
    tp.grad_ref(im).array() += tp.grad_ref(io).array().rowwise() * w.array();
  });
  return Var{&t, io};
}

// ---- nonlinearities ---------------------------------------------------------

inline Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Mat out = (1.0 / (1.0 + (-t.val(a.idx).array()).exp())).matrix();
  int io = t.push(std::move(out));
  t.set_backward(io, [ia = a.idx, io](Tape& tp) {
    const auto& y = tp.val(io).array();
    tp.grad_ref(ia).array() += tp.grad_ref(io).array() * y * (1.0 - y);
  });
  return Var{&t, io};
}

inline Var tanh_fn(Var a) {
  Tape& t = *a.tape;
  Mat out = t.val(a.idx).array().tanh().matrix();
  int io = t.push(std::move(out));
  t.set_backward(io, [ia = a.idx, io](Tape& tp) {
    const auto& y = tp.val(io).array();
    tp.grad_ref(ia).array() += tp.grad_ref(io).array() * (1.0 - y * y);
  });
  return Var{&t, io};
}

// SiLU(x) = x * sigmoid(x)
inline Var silu(Var a) {
  Tape& t = *a.tape;
  Mat s = (1.0 / (1.0 + (-t.val(a.idx).array()).exp())).matrix();
  Mat out = t.val(a.idx).cwiseProduct(s);
  int io = t.push(std::move(out));
  t.set_backward(io, [ia = a.idx, io](Tape& tp) {
    const auto x = tp.val(ia).array();
    const auto s2 = 1.0 / (1.0 + (-x).exp());
    tp.grad_ref(ia).array() +=
        tp.grad_ref(io).array() * (s2 * (1.0 + x * (1.0 - s2)));
  });
  return Var{&t, io};
}

inline Var leaky_relu(Var a, double slope) {
  Tape& t = *a.tape;
  Mat out = t.val(a.idx).unaryExpr(
      [slope](double x) { return x > 0.0 ? x : slope * x; });
  int io = t.push(std::move(out));
  t.set_backward(io, [ia = a.idx, io, slope](Tape& tp) {
    tp.grad_ref(ia).array() +=
        tp.grad_ref(io).array() *
        tp.val(ia).unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; })
            .array();
  });
  return Var{&t, io};
}

// ---- reductions -------------------------------------------------------------

inline Var sum_all(Var a) {
  Tape& t = *a.tape;
  Mat out(1, 1);
  out(0, 0) = t.val(a.idx).sum();
  int io = t.push(std::move(out));
  t.set_backward(io, [ia = a.idx, io](Tape& tp) {
    tp.grad_ref(ia).array() += tp.grad_ref(io)(0, 0);
  });
  return Var{&t, io};
}

// Per-row mean over columns: (r x c) -> (r x 1).
inline Var mean_cols(Var a) {
  Tape& t = *a.tape;
  const double c = static_cast<double>(t.val(a.idx).cols());
  Mat out = t.val(a.idx).rowwise().mean();
  int io = t.push(std::move(out));
  t.set_backward(io, [ia = a.idx, io, c](Tape& tp) {
    tp.grad_ref(ia).colwise() +=
        Eigen::VectorXd(tp.grad_ref(io).col(0) / c);
  });
  return Var{&t, io};
}

// Mean squared error against a constant target, averaged over all entries.
inline Var mse_loss(Var pred, const Mat& target) {
  Tape& t = *pred.tape;
  detail::check_same_shape(t.val(pred.idx), target, "mse_loss");
  const double n = static_cast<double>(target.size());
  Mat diff = t.val(pred.idx) - target;
  Mat out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  int io = t.push(std::move(out));
  t.set_backward(io, [ip = pred.idx, io, target, n](Tape& tp) {
    tp.grad_ref(ip) +=
        (2.0 / n) * tp.grad_ref(io)(0, 0) * (tp.val(ip) - target);
  });
  return Var{&t, io};
}

// ---- structure --------------------------------------------------------------

inline Var concat_rows(const std::vector<Var>& parts) {
  Tape& t = *parts.front().tape;
  Eigen::Index rows = 0;
  const Eigen::Index cols = t.val(parts.front().idx).cols();
  for (const Var& p : parts) {
    if (t.val(p.idx).cols() != cols)
      throw ShapeMismatch("concat_rows: column counts differ");
    rows += t.val(p.idx).rows();
  }
  Mat out(rows, cols);
  std::vector<int> srcs;
  std::vector<Eigen::Index> offs;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, t.val(p.idx).rows()) = t.val(p.idx);
    srcs.push_back(p.idx);
    offs.push_back(r);
    r += t.val(p.idx).rows();
  }
  int io = t.push(std::move(out));
  t.set_backward(io, [srcs, offs, io](Tape& tp) {
    const Mat& g = tp.grad_ref(io);
    for (std::size_t k = 0; k < srcs.size(); ++k)
      tp.grad_ref(srcs[k]) += g.middleRows(offs[k], tp.val(srcs[k]).rows());
  });
  return Var{&t, io};
}

inline Var concat_cols(const std::vector<Var>& parts) {
  Tape& t = *parts.front().tape;
  Eigen::Index cols = 0;
  const Eigen::Index rows = t.val(parts.front().idx).rows();
  for (const Var& p : parts) {
    if (t.val(p.idx).rows() != rows)
      throw ShapeMismatch("concat_cols: row counts differ");
    cols += t.val(p.idx).cols();
  }
  Mat out(rows, cols);
  std::vector<int> srcs;
  std::vector<Eigen::Index> offs;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, t.val(p.idx).cols()) = t.val(p.idx);
    srcs.push_back(p.idx);
    offs.push_back(c);
    c += t.val(p.idx).cols();
  }
  int io = t.push(std::move(out));
  t.set_backward(io, [srcs, offs, io](Tape& tp) {
    const Mat& g = tp.grad_ref(io);
    for (std::size_t k = 0; k < srcs.size(); ++k)
      tp.grad_ref(srcs[k]) += g.middleCols(offs[k], tp.val(srcs[k]).cols());
  });
  return Var{&t, io};
}

inline Var slice_cols(Var a, Eigen::Index c0, Eigen::Index n) {
  Tape& t = *a.tape;
  if (c0 < 0 || c0 + n > t.val(a.idx).cols())
    throw ShapeMismatch("slice_cols: range out of bounds");
  int io = t.push(t.val(a.idx).middleCols(c0, n));
  t.set_backward(io, [ia = a.idx, io, c0, n](Tape& tp) {
    tp.grad_ref(ia).middleCols(c0, n) += tp.grad_ref(io);
  });
  return Var{&t, io};
}

inline Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n) {
  Tape& t = *a.tape;
  if (r0 < 0 || r0 + n > t.val(a.idx).rows())
    throw ShapeMismatch("slice_rows: range out of bounds");
  int io = t.push(t.val(a.idx).middleRows(r0, n));
  t.set_backward(io, [ia = a.idx, io, r0, n](Tape& tp) {
    tp.grad_ref(ia).middleRows(r0, n) += tp.grad_ref(io);
  });
  return Var{&t, io};
}

inline Var gather_cols(Var a, std::vector<int> idx) {
  Tape& t = *a.tape;
  Mat out(t.val(a.idx).rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= t.val(a.idx).cols())
      throw ShapeMismatch("gather_cols: index out of bounds");
    out.col(static_cast<Eigen::Index>(k)) = t.val(a.idx).col(idx[k]);
  }
  int io = t.push(std::move(out));
  t.set_backward(io, [ia = a.idx, io, idx = std::move(idx)](Tape& tp) {
    const Mat& g = tp.grad_ref(io);
    Mat& ga = tp.grad_ref(ia);
    for (std::size_t k = 0; k < idx.size(); ++k)
      ga.col(idx[k]) += g.col(static_cast<Eigen::Index>(k));
  });
  return Var{&t, io};
}

inline Var reverse_cols(Var a) {
  Tape& t = *a.tape;
  int io = t.push(t.val(a.idx).rowwise().reverse());
  t.set_backward(io, [ia = a.idx, io](Tape& tp) {
    tp.grad_ref(ia) += tp.grad_ref(io).rowwise().reverse();
  });
  return Var{&t, io};
}

namespace detail {

// Column accumulation order determined by column values (lexicographic),
// invariant to the columns' positions within each segment.
inline std::vector<std::vector<int>> value_sorted_groups(
    const Mat& x, const std::vector<int>& seg, int nseg) {
  std::vector<std::vector<int>> groups(nseg);
  for (std::size_t e = 0; e < seg.size(); ++e)
    groups[seg[e]].push_back(static_cast<int>(e));
  auto col_less = [&x](int a, int b) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      if (x(r, a) < x(r, b)) return true;
      if (x(r, a) > x(r, b)) return false;
    }
    return false;  // equal columns: order is irrelevant for the sum
  };
  for (auto& g : groups) std::stable_sort(g.begin(), g.end(), col_less);
  return groups;
}

}  // namespace detail

// Sums columns of x (d x E) into segments: output (d x nseg). Accumulation
// within a segment is value-ordered (see header comment).
inline Var segment_sum_cols(Var a, const std::vector<int>& seg, int nseg) {
  Tape& t = *a.tape;
  const Mat& x = t.val(a.idx);
  if (static_cast<Eigen::Index>(seg.size()) != x.cols())
    throw ShapeMismatch("segment_sum_cols: one segment id per column required");
  auto groups = detail::value_sorted_groups(x, seg, nseg);
  Mat out = Mat::Zero(x.rows(), nseg);
  for (int s = 0; s < nseg; ++s)
    for (int e : groups[s]) out.col(s) += x.col(e);
  int io = t.push(std::move(out));
  t.set_backward(io, [ia = a.idx, io, seg](Tape& tp) {
    const Mat& g = tp.grad_ref(io);
    Mat& ga = tp.grad_ref(ia);
    for (std::size_t e = 0; e < seg.size(); ++e)
      ga.col(static_cast<Eigen::Index>(e)) += g.col(seg[e]);
  });
  return Var{&t, io};
}

// Softmax of a score row (1 x E) within each segment. Normalizer sums are
// value-ordered for permutation bit-stability.
inline Var segment_softmax_row(Var a, const std::vector<int>& seg, int nseg) {
  Tape& t = *a.tape;
  const Mat& x = t.val(a.idx);
  if (x.rows() != 1 || static_cast<Eigen::Index>(seg.size()) != x.cols())
    throw ShapeMismatch("segment_softmax_row: expects (1 x E) scores");
  auto groups = detail::value_sorted_groups(x, seg, nseg);
  Mat out(1, x.cols());
  for (int s = 0; s < nseg; ++s) {
    if (groups[s].empty()) continue;
    double m = -std::numeric_limits<double>::infinity();
    for (int e : groups[s]) m = std::max(m, x(0, e));
    double denom = 0.0;
    for (int e : groups[s]) denom += std::exp(x(0, e) - m);
    for (int e : groups[s]) out(0, e) = std::exp(x(0, e) - m) / denom;
  }
  int io = t.push(std::move(out));
  t.set_backward(io, [ia = a.idx, io, seg, nseg](Tape& tp) {
    const Mat& g = tp.grad_ref(io);
    const Mat& y = tp.val(io);
    Mat& ga = tp.grad_ref(ia);
    // dL/ds_k = y_k * (g_k - sum_j g_j y_j) within the segment
    std::vector<double> dot(nseg, 0.0);
    for (std::size_t e = 0; e < seg.size(); ++e)
      dot[seg[e]] += g(0, static_cast<Eigen::Index>(e)) *
                     y(0, static_cast<Eigen::Index>(e));
    for (std::size_t e = 0; e < seg.size(); ++e) {
      const auto k = static_cast<Eigen::Index>(e);
      ga(0, k) += y(0, k) * (g(0, k) - dot[seg[e]]);
    }
  });
  return Var{&t, io};
}

// im2col for a 1D convolution with zero same-padding. Input (C x T),
// output (C*K x T): output block row c*K+k at column t holds
// x(c, t + (k - K/2) * dilation) or 0 outside the window.
inline Var im2col_same(Var a, int kernel, int dilation) {
  Tape& t = *a.tape;
  const Mat& x = t.val(a.idx);
  if (kernel < 1 || kernel % 2 == 0)
    throw ShapeMismatch("im2col_same: kernel width must be odd and positive");
  if (dilation < 1) throw ShapeMismatch("im2col_same: dilation must be >= 1");
  const Eigen::Index C = x.rows(), T = x.cols();
  const int half = kernel / 2;
  Mat out = Mat::Zero(C * kernel, T);
  for (Eigen::Index c = 0; c < C; ++c)
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index row = c * kernel + k;
      const int off = (k - half) * dilation;
      for (Eigen::Index tt = 0; tt < T; ++tt) {
        const Eigen::Index src = tt + off;
        if (src >= 0 && src < T) out(row, tt) = x(c, src);
      }
    }
  int io = t.push(std::move(out));
  t.set_backward(io, [ia = a.idx, io, kernel, dilation](Tape& tp) {
    const Mat& g = tp.grad_ref(io);
    Mat& ga = tp.grad_ref(ia);
    const Eigen::Index C = ga.rows(), T = ga.cols();
    const int half = kernel / 2;
    for (Eigen::Index c = 0; c < C; ++c)
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index row = c * kernel + k;
        const int off = (k - half) * dilation;
        for (Eigen::Index tt = 0; tt < T; ++tt) {
          const Eigen::Index src = tt + off;
          if (src >= 0 && src < T) ga(c, src) += g(row, tt);
        }
      }
  });
  return Var{&t, io};
}

// Inverted dropout with a fixed mask drawn by the caller (mask entries are
// 0 or 1/(1-rate)); identity when mask is empty.
inline Var dropout_mask(Var a, const Mat& mask) {
  if (mask.size() == 0) return a;
  Tape& t = *a.tape;
  detail::check_same_shape(t.val(a.idx), mask, "dropout_mask");
  int io = t.push(t.val(a.idx).cwiseProduct(mask));
  t.set_backward(io, [ia = a.idx, io, mask](Tape& tp) {
    tp.grad_ref(ia) += tp.grad_ref(io).cwiseProduct(mask);
  });
  return Var{&t, io};
}

}  // namespace htgnn::ad
