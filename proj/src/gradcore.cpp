#include "uno/gradcore.hpp"

#include "uno/error.hpp"

#include <cmath>

namespace uno {

DiffContext::DiffContext(const ParamVector& params) : layout_(params.layout_ptr()) {
  leaves_.reserve(layout_->count());
  for (std::size_t i = 0; i < layout_->count(); ++i) leaves_.push_back(ad::variable(params.tensor(i)));
}

VarList DiffContext::gradient(const ad::Var& objective, bool create_graph) const {
  return ad::gradients(objective, leaves_, create_graph);
}

GradVector DiffContext::gradient_vector(const ad::Var& objective) const {
  return to_grad_vector(layout_, gradient(objective, false));
}

GradVector to_grad_vector(const LayoutPtr& layout, std::span<const ad::Var> grads) {
  std::vector<Mat> tensors;
  tensors.reserve(grads.size());
  for (const ad::Var& g : grads) tensors.push_back(g.value());
  GradVector out = GradVector::from_tensors(layout, tensors);
  if (!out.all_finite()) throw Error(ErrorCode::NonFiniteGradient, "gradient has NaN/Inf entries");
  return out;
}

GradVector grad(const Objective& objective, const ParamVector& params) {
  DiffContext ctx(params);
  return ctx.gradient_vector(objective(ctx.params()));
}

GradVector grad_of_grad_functional(const GradFunctional& outer, const Objective& inner_a,
                                   const Objective& inner_b, const ParamVector& params) {
  DiffContext ctx(params);
  const VarList ga = ctx.gradient(inner_a(ctx.params()), true);
  const VarList gb = ctx.gradient(inner_b(ctx.params()), true);
  if (std::sqrt(squared_norm(ga).item()) < kDegenerateNorm ||
      std::sqrt(squared_norm(gb).item()) < kDegenerateNorm)
    throw Error(ErrorCode::DegenerateGradient, "inner gradient norm below 1e-12");
  return ctx.gradient_vector(outer(ga, gb));
}

ad::Var dot(std::span<const ad::Var> a, std::span<const ad::Var> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LayoutMismatch, "gradient lists differ in length");
  ad::Var acc = ad::constant(0.0);
  for (std::size_t i = 0; i < a.size(); ++i) acc = acc + ad::sum(ad::mul(a[i], b[i]));
  return acc;
}

ad::Var squared_norm(std::span<const ad::Var> a) {
  ad::Var acc = ad::constant(0.0);
  for (const ad::Var& t : a) acc = acc + ad::sum(ad::square(t));
  return acc;
}

ad::Var cosine_sq(std::span<const ad::Var> a, std::span<const ad::Var> b) {
  const ad::Var aa = squared_norm(a);
  const ad::Var bb = squared_norm(b);
  const double floor = kDegenerateNorm * kDegenerateNorm;
  if (aa.item() < floor || bb.item() < floor) return ad::constant(0.0);
  const ad::Var ab = dot(a, b);
  return ad::div(ad::square(ab), ad::mul(aa, bb));
}

}  // namespace uno
