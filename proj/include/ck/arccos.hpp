#ifndef CK_ARCCOS_HPP
#define CK_ARCCOS_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ck {

// Project-wide activation normalization constant for ReLU, chosen so that
// E[relu(u)^2] = Var(u) * c_sigma / 2 preserves scale across layers.
inline constexpr double kCSigma = 2.0;

// 2x2 covariance of a centered bivariate Gaussian (u, v):
//   [[a, b], [b, d]],  a = Var u, d = Var v, b = Cov(u, v).
struct Cov2 {
  double a = 0.0;
  double d = 0.0;
  double b = 0.0;

  // PSD up to the slack that layer-recursion round-off produces.
  bool valid() const {
    if (std::isnan(a) || std::isnan(d) || std::isnan(b)) return false;
    if (a < -1e-12 || d < -1e-12) return false;
    return b * b <= a * d * (1.0 + 1e-9) + 1e-12;
  }
};

namespace detail {

// Hot-path forms. Inputs are trusted (the DP constructs them from patch
// traces of Gram tensors); correlation is clamped to [-1, 1] to absorb
// ~1e-15 PSD violations from round-off.
template <typename S>
inline S relu_prod_raw(S a, S d, S b) {
  const S s2 = a * d;
  if (!(s2 > S(0))) return S(0);  // a degenerate side makes the product a.s. zero
  const S s = std::sqrt(s2);
  S rho = b / s;
  rho = std::clamp(rho, S(-1), S(1));
  const S pi = S(std::numbers::pi);
  return s * (std::sqrt(S(1) - rho * rho) + rho * (pi - std::acos(rho))) / (S(2) * pi);
}

template <typename S>
inline S relu_deriv_prod_raw(S a, S d, S b) {
  const S s2 = a * d;
  if (!(s2 > S(0))) return S(0);
  S rho = b / std::sqrt(s2);
  rho = std::clamp(rho, S(-1), S(1));
  const S pi = S(std::numbers::pi);
  return (pi - std::acos(rho)) / (S(2) * pi);
}

}  // namespace detail

inline void validate_cov2(const Cov2& c) {
  if (std::isnan(c.a) || std::isnan(c.d) || std::isnan(c.b))
    throw std::invalid_argument("Cov2: NaN entry");
  if (c.a < -1e-12 || c.d < -1e-12)
    throw std::invalid_argument("Cov2: negative variance beyond tolerance");
}

// E[relu(u) relu(v)] for (u, v) ~ N(0, [[a,b],[b,d]]).
// Closed form: with s = sqrt(a d), rho = b/s,
//   s/(2 pi) * (sqrt(1 - rho^2) + rho (pi - acos rho)).
inline double expect_relu_prod(const Cov2& c) {
  validate_cov2(c);
  return detail::relu_prod_raw(std::max(c.a, 0.0), std::max(c.d, 0.0), c.b);
}

// E[relu'(u) relu'(v)]: (pi - acos rho) / (2 pi). relu'(0) is taken as 0;
// the event has measure zero so the expectation does not depend on it.
inline double expect_relu_deriv_prod(const Cov2& c) {
  validate_cov2(c);
  return detail::relu_deriv_prod_raw(std::max(c.a, 0.0), std::max(c.d, 0.0), c.b);
}

}  // namespace ck

#endif  // CK_ARCCOS_HPP
