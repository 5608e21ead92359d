#pragma once

// Calculus for monotone scalar functions of one variable: generalized
// inverses, antiderivatives, Legendre transforms and C1 monotone extensions
// of a nonlinearity g given on a compact interval [m, M].

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace eulerstab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Interval {
  double lo = -kInf;
  double hi = kInf;

  bool contains(double s) const { return s >= lo && s <= hi; }
  bool bounded() const { return lo > -kInf && hi < kInf; }
  double length() const { return hi - lo; }
};

/// One polynomial piece, q(s) = sum_k coeffs[k] * (s - origin)^k for s in (lo, hi].
struct PolyPiece {
  double lo = -kInf;
  double hi = kInf;
  double origin = 0.0;
  std::vector<double> coeffs;

  double eval(double s) const;
  double deriv(double s) const;
  /// Antiderivative of this piece measured from `from`, evaluated at s.
  double integral(double from, double s) const;
};

enum class FnKind {
  kPiecewisePolynomial,
  kSampled,
  kInverse,
  kAntiderivative,
  kLegendre,
  kCallable,
  kExtended,
};

std::string to_string(FnKind kind);

namespace detail {

class FnImpl {
 public:
  virtual ~FnImpl() = default;
  virtual double eval(double s) const = 0;
  virtual std::optional<double> deriv(double s) const = 0;
  virtual bool has_deriv() const = 0;
  virtual Interval domain() const = 0;
  virtual std::vector<double> breakpoints() const = 0;
  virtual FnKind kind() const = 0;
};

}  // namespace detail

/// Immutable, cheaply copyable real function of one real variable.
///
/// Evaluation is total on domain(); every kind is safe to evaluate from many
/// threads at once.
class ScalarFn {
 public:
  ScalarFn() = default;
  explicit ScalarFn(std::shared_ptr<const detail::FnImpl> impl) : impl_(std::move(impl)) {}

  static ScalarFn piecewise(std::vector<PolyPiece> pieces);
  /// A single polynomial on the whole line, coefficients in powers of s.
  static ScalarFn polynomial(std::vector<double> coeffs);
  static ScalarFn affine(double slope, double intercept);
  /// Monotone cubic Hermite interpolation through (xs, ys) on [xs.front(), xs.back()].
  static ScalarFn sampled(std::vector<double> xs, std::vector<double> ys);
  static ScalarFn callable(std::function<double(double)> f,
                           std::function<double(double)> df = {},
                           Interval domain = {}, std::vector<double> breakpoints = {});

  double operator()(double s) const { return impl_->eval(s); }
  /// Derivative at s; throws RegularityViolation when the kind has none.
  double deriv(double s) const;
  std::optional<double> try_deriv(double s) const { return impl_->deriv(s); }
  bool has_deriv() const { return impl_->has_deriv(); }
  Interval domain() const { return impl_->domain(); }
  std::vector<double> breakpoints() const { return impl_->breakpoints(); }
  FnKind kind() const { return impl_->kind(); }
  bool valid() const { return impl_ != nullptr; }

  /// Pieces when kind() == kPiecewisePolynomial, otherwise nullptr.
  const std::vector<PolyPiece>* pieces() const;

 private:
  std::shared_ptr<const detail::FnImpl> impl_;
};

enum class InverseMode { kDecreasing, kNondecreasing };

struct ProbeOptions {
  /// Probe points per unit interval for monotonicity checks.
  double density = 1024.0;
  /// Hard cap on the number of probes of one check.
  std::size_t max_probes = std::size_t{1} << 20;
};

/// Generalized inverse of a monotone q that escapes to +-infinity.
///
/// kDecreasing:    p(s) = inf{t : q(t) <= s}
/// kNondecreasing: p(s) = inf{t : q(t) == s}  (left-continuous at plateaus)
///
/// Evaluated lazily by bracketing and bisection on q.
ScalarFn generalized_inverse(const ScalarFn& q, InverseMode mode, const ProbeOptions& probe = {});

/// P(s) = integral of p from 0 to s. Closed form for piecewise polynomials,
/// adaptive Gauss-Kronrod (absolute tolerance 1e-12 per unit interval) otherwise.
ScalarFn antiderivative(const ScalarFn& p);

enum class LegendreRoute {
  /// Q^(s) = s p(s) - Q(p(s)), the supremum attained on the level set of s.
  kLevelSet,
  /// Q^(s) = P(s) + Q^(0) with P the antiderivative of the generalized inverse.
  kAntiderivative,
};

/// Legendre transform of Q = integral of q, for q continuous, nondecreasing,
/// with linear growth at both ends.
ScalarFn legendre_transform(const ScalarFn& Q, const ScalarFn& q,
                            LegendreRoute route = LegendreRoute::kLevelSet);

/// A nondecreasing C1 nonlinearity on [m, M] together with its C1 extension
/// to the whole line and the associated antiderivative and Legendre transform.
struct MonotoneProfile {
  ScalarFn g;       // given nonlinearity, used on [m, M]
  double m = 0.0;
  double M = 0.0;
  ScalarFn g_ext;   // extension to the real line
  ScalarFn G;       // antiderivative of g_ext, G(0) = 0
  ScalarFn G_hat;   // Legendre transform of G
  ScalarFn g_inv;   // generalized inverse of g_ext (nondecreasing mode)
  double c1 = 0.0;  // lim g_ext(s)/s as s -> +inf
  double c2 = 0.0;  // lim g_ext(s)/s as s -> -inf
};

/// Extend g (C1, nondecreasing on [m, M]) to the real line: a tangent line
/// where the end slope is positive, otherwise a downward (upward) parabola of
/// unit width followed by a line of slope 2.
MonotoneProfile extend_monotone(const ScalarFn& g, double m, double M,
                                const ProbeOptions& probe = {});
/// Same, taking [m, M] from g's (bounded) domain.
MonotoneProfile extend_monotone(const ScalarFn& g, const ProbeOptions& probe = {});

/// Ghat(s) + G(tau) - s tau; nonnegative up to rounding.
double fenchel_gap(const MonotoneProfile& profile, double s, double tau);

/// A strictly decreasing nonlinearity extended to the real line, with the
/// inverse f and F(s) = integral of f from 0 to s.
struct DecreasingProfile {
  ScalarFn g;      // given nonlinearity
  double m = 0.0;
  double M = 0.0;
  ScalarFn g_ext;  // strictly decreasing on the line, -/+ infinity at +/- infinity
  ScalarFn f;      // inf{t : g_ext(t) <= s}
  ScalarFn F;      // integral of f from 0 to s
};

DecreasingProfile extend_decreasing(const ScalarFn& g, double m, double M,
                                    const ProbeOptions& probe = {});

/// Checks monotonicity of q on the probe grid of [lo, hi]; returns the left
/// probe of the first violating pair, or nullopt.
std::optional<double> find_monotonicity_violation(const ScalarFn& q, double lo, double hi,
                                                  InverseMode mode, bool strict,
                                                  const ProbeOptions& probe = {});

// JSON document {pieces: [...], m, M, extension: "lemma-mM"}. Coefficients
// and breakpoints are written as decimal strings that round-trip exactly.
nlohmann::json profile_to_json(const MonotoneProfile& profile);
MonotoneProfile profile_from_json(const nlohmann::json& doc, const ProbeOptions& probe = {});
nlohmann::json pieces_to_json(const std::vector<PolyPiece>& pieces);
std::vector<PolyPiece> pieces_from_json(const nlohmann::json& doc);

std::string format_exact(double value);
double parse_exact(const nlohmann::json& value);

}  // namespace eulerstab
