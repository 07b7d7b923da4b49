#pragma once

#include <Eigen/Core>

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace uno {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct TensorSpec {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return rows * cols; }
  bool operator==(const TensorSpec&) const = default;
};

// Ordered (name, shape, offset) descriptors of a flat parameter array.
// Tensors are stored column-major, back to back, in insertion order.
class Layout {
 public:
  Layout& add(std::string name, Eigen::Index rows, Eigen::Index cols);

  std::span<const TensorSpec> tensors() const { return tensors_; }
  std::size_t count() const { return tensors_.size(); }
  Eigen::Index total_size() const { return total_; }
  const TensorSpec& operator[](std::size_t i) const { return tensors_[i]; }
  std::size_t index_of(std::string_view name) const;

  bool operator==(const Layout& other) const { return tensors_ == other.tensors_; }

 private:
  std::vector<TensorSpec> tensors_;
  Eigen::Index total_ = 0;
};

using LayoutPtr = std::shared_ptr<const Layout>;

bool congruent(const LayoutPtr& a, const LayoutPtr& b);

// Flat array of trainable parameters in the canonical layout order.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(LayoutPtr layout);
  ParamVector(LayoutPtr layout, Vec values);

  const Layout& layout() const { return *layout_; }
  const LayoutPtr& layout_ptr() const { return layout_; }
  const Vec& values() const { return values_; }
  Vec& values() { return values_; }
  Eigen::Index size() const { return values_.size(); }

  Eigen::Map<const Mat> tensor(std::size_t i) const;
  Eigen::Map<Mat> tensor(std::size_t i);
  std::vector<Mat> tensors() const;

  bool operator==(const ParamVector& other) const;

 private:
  LayoutPtr layout_;
  Vec values_;
};

// Flat gradient congruent to a ParamVector. Immutable once built.
class GradVector {
 public:
  GradVector() = default;
  explicit GradVector(LayoutPtr layout);  // zeros
  GradVector(LayoutPtr layout, Vec values);

  // Flattens per-tensor gradients given in layout order.
  static GradVector from_tensors(LayoutPtr layout, std::span<const Mat> tensors);

  const Layout& layout() const { return *layout_; }
  const LayoutPtr& layout_ptr() const { return layout_; }
  const Vec& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }
  Eigen::Map<const Mat> tensor(std::size_t i) const;

  bool all_finite() const { return values_.allFinite(); }

 private:
  LayoutPtr layout_;
  Vec values_;
};

double dot(const GradVector& a, const GradVector& b);
double norm(const GradVector& a);
// alpha * x + y
GradVector axpy(double alpha, const GradVector& x, const GradVector& y);
GradVector operator*(double alpha, const GradVector& x);
GradVector operator+(const GradVector& a, const GradVector& b);
GradVector operator-(const GradVector& a, const GradVector& b);

// theta + alpha * direction
ParamVector axpy(double alpha, const GradVector& direction, const ParamVector& theta);

}  // namespace uno
