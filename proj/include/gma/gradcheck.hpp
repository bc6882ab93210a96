#ifndef GMA_GRADCHECK_HPP
#define GMA_GRADCHECK_HPP

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "gma/tensor.hpp"

namespace gma {

/// Central-difference verification of reverse-mode gradients.
///
/// `loss` evaluates the scalar objective from the current contents of
/// `params` (it must be deterministic); `analytic` holds dLoss/dParam in the
/// same order. Returns the max relative error
///   |a - n| / max(1e-8, |a| + |n|)
/// over every coordinate.
inline double grad_check(const std::function<double()>& loss,
                         std::vector<Tensor<double>*> params,
                         const std::vector<Tensor<double>>& analytic,
                         double eps = 1e-5) {
  if (params.size() != analytic.size())
    throw std::invalid_argument("grad_check: params/analytic size mismatch");
  double worst = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor<double>& t = *params[p];
    if (!t.same_shape(analytic[p]))
      throw std::invalid_argument("grad_check: gradient shape mismatch");
    for (size_t i = 0; i < t.size(); ++i) {
      double saved = t.data[i];
      t.data[i] = saved + eps;
      double fp = loss();
      t.data[i] = saved - eps;
      double fm = loss();
      t.data[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("grad_check: non-finite loss");
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[p].data[i];
      double err = std::fabs(a - numeric) /
                   std::max(1e-8, std::fabs(a) + std::fabs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

/// Like grad_check, but coordinates whose error at `eps` exceeds `tol` are
/// re-measured at 10x and 100x eps and the best agreement kept. Central
/// differences of a deep network lose the signal of very small gradients to
/// cancellation at small eps; enlarging the step recovers it, while a wrong
/// adjoint stays wrong at every step size.
inline double grad_check_adaptive(const std::function<double()>& loss,
                                  std::vector<Tensor<double>*> params,
                                  const std::vector<Tensor<double>>& analytic,
                                  double eps = 1e-5, double tol = 1e-5) {
  if (params.size() != analytic.size())
    throw std::invalid_argument("grad_check: params/analytic size mismatch");
  auto coord_err = [&](Tensor<double>& t, size_t i, double a, double step) {
    double saved = t.data[i];
    t.data[i] = saved + step;
    double fp = loss();
    t.data[i] = saved - step;
    double fm = loss();
    t.data[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("grad_check: non-finite loss");
    double numeric = (fp - fm) / (2.0 * step);
    return std::fabs(a - numeric) /
           std::max(1e-8, std::fabs(a) + std::fabs(numeric));
  };
  double worst = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor<double>& t = *params[p];
    if (!t.same_shape(analytic[p]))
      throw std::invalid_argument("grad_check: gradient shape mismatch");
    for (size_t i = 0; i < t.size(); ++i) {
      double a = analytic[p].data[i];
      double err = coord_err(t, i, a, eps);
      // larger steps beat cancellation on tiny gradients, smaller ones stay
      // inside the local smooth piece near relu/argmax kinks
      for (double mult : {10.0, 100.0, 0.1}) {
        if (err <= tol) break;
        err = std::min(err, coord_err(t, i, a, eps * mult));
      }
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace gma

#endif  // GMA_GRADCHECK_HPP
