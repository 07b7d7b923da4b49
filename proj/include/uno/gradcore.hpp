#pragma once

#include "uno/ad.hpp"
#include "uno/params.hpp"

#include <functional>
#include <span>
#include <vector>

namespace uno {

// Norm below which a gradient is treated as zero by cosine-type functionals.
inline constexpr double kDegenerateNorm = 1e-12;

using VarList = std::vector<ad::Var>;

// Scalar objective over the bound parameter tensors (one Var per layout entry).
using Objective = std::function<ad::Var(std::span<const ad::Var> params)>;
// Scalar function of two gradients, each given as one Var per layout entry.
using GradFunctional =
    std::function<ad::Var(std::span<const ad::Var> grad_a, std::span<const ad::Var> grad_b)>;

// Evaluation record of scalar expressions over one ParamVector. Binds each
// tensor of the layout to a differentiable leaf; gradients may be taken with
// create_graph so that scalars built from them can be differentiated again.
class DiffContext {
 public:
  explicit DiffContext(const ParamVector& params);

  std::span<const ad::Var> params() const { return leaves_; }
  const LayoutPtr& layout() const { return layout_; }

  VarList gradient(const ad::Var& objective, bool create_graph) const;

  // First-order gradient flattened into a GradVector. Throws NonFiniteGradient.
  GradVector gradient_vector(const ad::Var& objective) const;

 private:
  LayoutPtr layout_;
  VarList leaves_;
};

GradVector to_grad_vector(const LayoutPtr& layout, std::span<const ad::Var> grads);

GradVector grad(const Objective& objective, const ParamVector& params);

// Gradient of outer(grad inner_a, grad inner_b) with respect to the parameters.
// Throws DegenerateGradient when either inner gradient is (numerically) zero.
GradVector grad_of_grad_functional(const GradFunctional& outer, const Objective& inner_a,
                                   const Objective& inner_b, const ParamVector& params);

// ---- functionals over per-tensor gradient lists -------------------------

ad::Var dot(std::span<const ad::Var> a, std::span<const ad::Var> b);
ad::Var squared_norm(std::span<const ad::Var> a);
// (a.b / (|a||b|))^2, defined as a constant 0 when either norm is below
// kDegenerateNorm.
ad::Var cosine_sq(std::span<const ad::Var> a, std::span<const ad::Var> b);

}  // namespace uno
