#pragma once

// Matrix-level reverse-mode differentiation.
//
// Every node stores a dense value and a backward rule. Backward rules are
// written in terms of the same differentiable ops, so running `gradients`
// with create_graph = true yields gradient Vars that can themselves be
// differentiated (double backprop). With create_graph = false the backward
// sweep runs under a NoGradGuard and produces plain constants.
//
// Every op has an Eigen::MatrixXd overload with identical semantics, so model
// code can be written once as a template over the value type.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace uno::ad {

using Mat = Eigen::MatrixXd;

class Var;
struct Node;
using NodePtr = std::shared_ptr<Node>;
using Backward = std::function<std::vector<Var>(const Var& self, const Var& upstream)>;

struct Node {
  Mat value;
  std::vector<NodePtr> inputs;
  Backward backward;
  bool requires_grad = false;
  std::uint64_t order = 0;
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const NodePtr& node() const { return node_; }

  // Value of a 1x1 Var.
  double item() const;

 private:
  NodePtr node_;
};

Var variable(Mat value);
Var constant(Mat value);
Var constant(double value);

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// d(output)/d(wrt[i]) for a 1x1 output. Inputs the output does not depend on
// receive zero matrices of their own shape.
std::vector<Var> gradients(const Var& output, std::span<const Var> wrt, bool create_graph);

// ---- differentiable ops -------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var mul(const Var& a, const Var& b);  // elementwise
Var div(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(const Var& a, const Var& row);
// a (n x m) * col (n x 1) broadcast over columns.
Var mul_col(const Var& a, const Var& col);
// Column sums: (n x m) -> (1 x m).
Var sum_rows(const Var& a);
// Row sums: (n x m) -> (n x 1).
Var sum_cols(const Var& a);
Var broadcast_rows(const Var& row, Eigen::Index n);
Var broadcast_cols(const Var& col, Eigen::Index m);
Var broadcast(const Var& scalar, Eigen::Index rows, Eigen::Index cols);
Var sum(const Var& a);
Var mean(const Var& a);

Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var relu(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
// Values outside [lo, hi] are clamped and pass zero gradient.
Var clamp(const Var& a, double lo, double hi);

// Columns [start, start + count).
Var cols(const Var& a, Eigen::Index start, Eigen::Index count);
// Embeds a into a zero matrix with `total` columns at column offset `start`.
Var pad_cols(const Var& a, Eigen::Index start, Eigen::Index total);
// Row-wise log-softmax.
Var log_softmax_rows(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }

// ---- plain overloads ----------------------------------------------------

Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat neg(const Mat& a);
Mat mul(const Mat& a, const Mat& b);
Mat div(const Mat& a, const Mat& b);
Mat scale(const Mat& a, double c);
Mat add_scalar(const Mat& a, double c);
Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
Mat add_row(const Mat& a, const Mat& row);
Mat mul_col(const Mat& a, const Mat& col);
Mat sum_rows(const Mat& a);
Mat sum_cols(const Mat& a);
Mat broadcast_rows(const Mat& row, Eigen::Index n);
Mat broadcast_cols(const Mat& col, Eigen::Index m);
Mat broadcast(const Mat& scalar, Eigen::Index rows, Eigen::Index cols);
Mat sum(const Mat& a);
Mat mean(const Mat& a);
Mat exp(const Mat& a);
Mat log(const Mat& a);
Mat tanh(const Mat& a);
Mat sigmoid(const Mat& a);
Mat softplus(const Mat& a);
Mat relu(const Mat& a);
Mat square(const Mat& a);
Mat sqrt(const Mat& a);
Mat clamp(const Mat& a, double lo, double hi);
Mat cols(const Mat& a, Eigen::Index start, Eigen::Index count);
Mat pad_cols(const Mat& a, Eigen::Index start, Eigen::Index total);
Mat log_softmax_rows(const Mat& a);

inline double item(const Mat& a) { return a(0, 0); }
inline double item(const Var& a) { return a.item(); }

// Lifts a plain matrix into the value type T as a non-differentiable constant.
template <class T>
T lift(const Mat& m);
template <>
inline Mat lift<Mat>(const Mat& m) { return m; }
template <>
inline Var lift<Var>(const Mat& m) { return constant(m); }

template <class T>
T lift_scalar(double v) { return lift<T>(Mat::Constant(1, 1, v)); }

}  // namespace uno::ad
