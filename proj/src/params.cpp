#include "uno/params.hpp"

#include "uno/error.hpp"

#include <algorithm>

namespace uno {

Layout& Layout::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  tensors_.push_back(TensorSpec{std::move(name), rows, cols, total_});
  total_ += rows * cols;
  return *this;
}

std::size_t Layout::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].name == name) return i;
  throw Error(ErrorCode::LayoutMismatch, "no tensor named '" + std::string(name) + "'");
}

bool congruent(const LayoutPtr& a, const LayoutPtr& b) {
  if (a == b) return true;
  return a && b && *a == *b;
}

namespace {

void check_congruent(const LayoutPtr& a, const LayoutPtr& b, const char* where) {
  if (!congruent(a, b)) throw Error(ErrorCode::LayoutMismatch, where);
}

void check_size(const LayoutPtr& layout, const Vec& values) {
  if (!layout) throw Error(ErrorCode::LayoutMismatch, "null layout");
  if (values.size() != layout->total_size())
    throw Error(ErrorCode::LayoutMismatch, "value count " + std::to_string(values.size()) +
                                               " != layout size " +
                                               std::to_string(layout->total_size()));
}

}  // namespace

ParamVector::ParamVector(LayoutPtr layout) : layout_(std::move(layout)) {
  check_size(layout_, Vec::Zero(layout_ ? layout_->total_size() : 0));
  values_ = Vec::Zero(layout_->total_size());
}

ParamVector::ParamVector(LayoutPtr layout, Vec values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  check_size(layout_, values_);
}

Eigen::Map<const Mat> ParamVector::tensor(std::size_t i) const {
  const TensorSpec& t = (*layout_)[i];
  return {values_.data() + t.offset, t.rows, t.cols};
}

Eigen::Map<Mat> ParamVector::tensor(std::size_t i) {
  const TensorSpec& t = (*layout_)[i];
  return {values_.data() + t.offset, t.rows, t.cols};
}

std::vector<Mat> ParamVector::tensors() const {
  std::vector<Mat> out;
  out.reserve(layout_->count());
  for (std::size_t i = 0; i < layout_->count(); ++i) out.emplace_back(tensor(i));
  return out;
}

bool ParamVector::operator==(const ParamVector& other) const {
  return congruent(layout_, other.layout_) && values_.size() == other.values_.size() &&
         std::equal(values_.data(), values_.data() + values_.size(), other.values_.data());
}

GradVector::GradVector(LayoutPtr layout) : layout_(std::move(layout)) {
  if (!layout_) throw Error(ErrorCode::LayoutMismatch, "null layout");
  values_ = Vec::Zero(layout_->total_size());
}

GradVector::GradVector(LayoutPtr layout, Vec values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  check_size(layout_, values_);
}

GradVector GradVector::from_tensors(LayoutPtr layout, std::span<const Mat> tensors) {
  if (!layout || tensors.size() != layout->count())
    throw Error(ErrorCode::LayoutMismatch, "tensor count does not match layout");
  Vec values(layout->total_size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const TensorSpec& t = (*layout)[i];
    if (tensors[i].rows() != t.rows || tensors[i].cols() != t.cols)
      throw Error(ErrorCode::LayoutMismatch, "shape of tensor '" + t.name + "'");
    Eigen::Map<Mat>(values.data() + t.offset, t.rows, t.cols) = tensors[i];
  }
  return GradVector(std::move(layout), std::move(values));
}

Eigen::Map<const Mat> GradVector::tensor(std::size_t i) const {
  const TensorSpec& t = (*layout_)[i];
  return {values_.data() + t.offset, t.rows, t.cols};
}

double dot(const GradVector& a, const GradVector& b) {
  check_congruent(a.layout_ptr(), b.layout_ptr(), "dot");
  return a.values().dot(b.values());
}

double norm(const GradVector& a) { return a.values().norm(); }

GradVector axpy(double alpha, const GradVector& x, const GradVector& y) {
  check_congruent(x.layout_ptr(), y.layout_ptr(), "axpy");
  return GradVector(x.layout_ptr(), alpha * x.values() + y.values());
}

GradVector operator*(double alpha, const GradVector& x) {
  return GradVector(x.layout_ptr(), alpha * x.values());
}

GradVector operator+(const GradVector& a, const GradVector& b) { return axpy(1.0, a, b); }

GradVector operator-(const GradVector& a, const GradVector& b) { return axpy(-1.0, b, a); }

ParamVector axpy(double alpha, const GradVector& direction, const ParamVector& theta) {
  check_congruent(direction.layout_ptr(), theta.layout_ptr(), "parameter update");
  return ParamVector(theta.layout_ptr(), theta.values() + alpha * direction.values());
}

}  // namespace uno
