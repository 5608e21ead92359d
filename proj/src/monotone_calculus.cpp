#include "eulerstab/monotone_calculus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

// Boost 1.74 pchip calls isnan unqualified.
using std::isnan;
#include <boost/math/interpolators/pchip.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "eulerstab/errors.hpp"

namespace eulerstab {

namespace {

constexpr double kSlopeTol = 1e-12;
constexpr double kBracketLimit = 1e150;
constexpr int kMaxBisection = 200;
constexpr double kQuadTolPerUnit = 1e-12;
constexpr int kMaxQuadDepth = 48;

}  // namespace

double PolyPiece::eval(double s) const {
  const double x = s - origin;
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
  return acc;
}

double PolyPiece::deriv(double s) const {
  const double x = s - origin;
  double acc = 0.0;
  for (std::size_t k = coeffs.size(); k-- > 1;) acc = acc * x + static_cast<double>(k) * coeffs[k];
  return acc;
}

double PolyPiece::integral(double from, double s) const {
  auto prim = [this](double t) {
    const double x = t - origin;
    double acc = 0.0;
    for (std::size_t k = coeffs.size(); k-- > 0;) acc = acc * x + coeffs[k] / static_cast<double>(k + 1);
    return acc * x;
  };
  return prim(s) - prim(from);
}

std::string to_string(FnKind kind) {
  switch (kind) {
    case FnKind::kPiecewisePolynomial: return "piecewise-polynomial";
    case FnKind::kSampled: return "sampled";
    case FnKind::kInverse: return "inverse";
    case FnKind::kAntiderivative: return "antiderivative";
    case FnKind::kLegendre: return "legendre";
    case FnKind::kCallable: return "callable";
    case FnKind::kExtended: return "extended";
  }
  return "unknown";
}

namespace {

void check_in_domain(const Interval& dom, double s) {
  if (std::isnan(s)) throw RegularityViolation("evaluation at NaN");
  const double slack = 1e-12 * (1.0 + std::abs(s));
  if (s < dom.lo - slack || s > dom.hi + slack) {
    throw RegularityViolation("evaluation at " + format_exact(s) + " outside the domain [" +
                              format_exact(dom.lo) + ", " + format_exact(dom.hi) + "]");
  }
}

class PiecewiseImpl final : public detail::FnImpl {
 public:
  explicit PiecewiseImpl(std::vector<PolyPiece> pieces) : pieces_(std::move(pieces)) {
    if (pieces_.empty()) throw RegularityViolation("piecewise polynomial without pieces");
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      const auto& p = pieces_[i];
      if (p.coeffs.empty()) throw RegularityViolation("polynomial piece without coefficients");
      if (!(p.lo <= p.hi)) throw RegularityViolation("polynomial piece with lo > hi");
      if (i > 0 && pieces_[i - 1].hi != p.lo) {
        throw RegularityViolation("polynomial pieces are not contiguous");
      }
      his_.push_back(p.hi);
    }
  }

  const PolyPiece& locate(double s) const {
    auto it = std::lower_bound(his_.begin(), his_.end(), s);
    if (it == his_.end()) return pieces_.back();
    return pieces_[static_cast<std::size_t>(it - his_.begin())];
  }

  double eval(double s) const override {
    check_in_domain(domain(), s);
    return locate(s).eval(s);
  }
  std::optional<double> deriv(double s) const override {
    check_in_domain(domain(), s);
    return locate(s).deriv(s);
  }
  bool has_deriv() const override { return true; }
  Interval domain() const override { return {pieces_.front().lo, pieces_.back().hi}; }
  std::vector<double> breakpoints() const override {
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < pieces_.size(); ++i) out.push_back(pieces_[i].hi);
    return out;
  }
  FnKind kind() const override { return FnKind::kPiecewisePolynomial; }

  const std::vector<PolyPiece>& pieces() const { return pieces_; }

 private:
  std::vector<PolyPiece> pieces_;
  std::vector<double> his_;
};

class SampledImpl final : public detail::FnImpl {
 public:
  SampledImpl(std::vector<double> xs, std::vector<double> ys) : lo_(xs.front()), hi_(xs.back()) {
    interp_ = std::make_shared<boost::math::interpolators::pchip<std::vector<double>>>(std::move(xs),
                                                                                        std::move(ys));
  }
  double eval(double s) const override {
    check_in_domain(domain(), s);
    return (*interp_)(std::clamp(s, lo_, hi_));
  }
  std::optional<double> deriv(double s) const override {
    check_in_domain(domain(), s);
    return interp_->prime(std::clamp(s, lo_, hi_));
  }
  bool has_deriv() const override { return true; }
  Interval domain() const override { return {lo_, hi_}; }
  std::vector<double> breakpoints() const override { return {}; }
  FnKind kind() const override { return FnKind::kSampled; }

 private:
  double lo_, hi_;
  std::shared_ptr<const boost::math::interpolators::pchip<std::vector<double>>> interp_;
};

class CallableImpl final : public detail::FnImpl {
 public:
  CallableImpl(std::function<double(double)> f, std::function<double(double)> df, Interval dom,
               std::vector<double> bps)
      : f_(std::move(f)), df_(std::move(df)), dom_(dom), bps_(std::move(bps)) {
    std::sort(bps_.begin(), bps_.end());
  }
  double eval(double s) const override {
    check_in_domain(dom_, s);
    return f_(s);
  }
  std::optional<double> deriv(double s) const override {
    if (!df_) return std::nullopt;
    check_in_domain(dom_, s);
    return df_(s);
  }
  bool has_deriv() const override { return static_cast<bool>(df_); }
  Interval domain() const override { return dom_; }
  std::vector<double> breakpoints() const override { return bps_; }
  FnKind kind() const override { return FnKind::kCallable; }

 private:
  std::function<double(double)> f_, df_;
  Interval dom_;
  std::vector<double> bps_;
};

class InverseImpl final : public detail::FnImpl {
 public:
  InverseImpl(ScalarFn q, InverseMode mode) : q_(std::move(q)), mode_(mode) {}

  // Smallest t with q(t) >= s (nondecreasing) or q(t) <= s (decreasing).
  double eval(double s) const override {
    if (!std::isfinite(s)) throw RegularityViolation("inverse evaluated at a non-finite value");
    auto reached = [&](double t) { return mode_ == InverseMode::kNondecreasing ? q_(t) >= s : q_(t) <= s; };
    double lo = -1.0, hi = 1.0;
    while (reached(lo)) {
      hi = lo;
      lo *= 2.0;
      if (lo < -kBracketLimit) throw CoercivityViolation("q does not escape towards -infinity");
    }
    while (!reached(hi)) {
      lo = hi;
      hi *= 2.0;
      if (hi > kBracketLimit) throw CoercivityViolation("q does not escape towards +infinity");
    }
    for (int it = 0; it < kMaxBisection; ++it) {
      const double width = hi - lo;
      if (width <= 1e-15 * std::max({1.0, std::abs(lo), std::abs(hi)})) break;
      const double mid = lo + 0.5 * width;
      if (mid <= lo || mid >= hi) break;
      if (reached(mid)) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return hi;
  }
  std::optional<double> deriv(double s) const override {
    const auto d = q_.try_deriv(eval(s));
    if (!d || *d == 0.0) return std::nullopt;
    return 1.0 / *d;
  }
  bool has_deriv() const override { return q_.has_deriv(); }
  Interval domain() const override { return {}; }
  std::vector<double> breakpoints() const override {
    std::vector<double> out;
    if (const auto* pieces = q_.pieces()) {
      // both one-sided values, a jump in q is a flat stretch of the inverse
      for (const auto& p : *pieces) {
        if (std::isfinite(p.lo)) out.push_back(p.eval(p.lo));
        if (std::isfinite(p.hi)) out.push_back(p.eval(p.hi));
      }
    } else {
      for (double b : q_.breakpoints()) out.push_back(q_(b));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
  FnKind kind() const override { return FnKind::kInverse; }

 private:
  ScalarFn q_;
  InverseMode mode_;
};

// Integral of f over [a, b] by recursive bisection on a 15-point Gauss-Kronrod rule.
double adaptive_gk(const std::function<double(double)>& f, double a, double b, double tol_per_unit,
                   int depth) {
  double err = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 0, 0.0, &err);
  // boost reports the estimate on the reference interval [-1, 1] when max_depth is 0
  err *= 0.5 * (b - a);
  if (err <= tol_per_unit * (b - a) || err <= 1e-15 * std::abs(value)) return value;
  if (depth >= kMaxQuadDepth) {
    throw QuadratureFailure("tolerance not met on [" + format_exact(a) + ", " + format_exact(b) + "]");
  }
  const double mid = 0.5 * (a + b);
  return adaptive_gk(f, a, mid, tol_per_unit, depth + 1) + adaptive_gk(f, mid, b, tol_per_unit, depth + 1);
}

class QuadratureAntiderivativeImpl final : public detail::FnImpl {
 public:
  explicit QuadratureAntiderivativeImpl(ScalarFn p) : p_(std::move(p)) {
    bps_ = p_.breakpoints();
  }
  double eval(double s) const override {
    check_in_domain(domain(), s);
    if (s == 0.0) return 0.0;
    const double a = std::min(0.0, s), b = std::max(0.0, s);
    std::vector<double> cuts{a, b};
    for (double k = std::ceil(a); k < b; k += 1.0) {
      if (k > a) cuts.push_back(k);
      if (cuts.size() > 1'000'000) throw QuadratureFailure("integration range too long");
    }
    for (double bp : bps_) {
      if (bp > a && bp < b) cuts.push_back(bp);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    const std::function<double(double)> f = [this](double t) { return p_(t); };
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      total += adaptive_gk(f, cuts[i], cuts[i + 1], kQuadTolPerUnit, 0);
    }
    return s > 0.0 ? total : -total;
  }
  std::optional<double> deriv(double s) const override { return p_(s); }
  bool has_deriv() const override { return true; }
  Interval domain() const override { return p_.domain(); }
  std::vector<double> breakpoints() const override { return bps_; }
  FnKind kind() const override { return FnKind::kAntiderivative; }

 private:
  ScalarFn p_;
  std::vector<double> bps_;
};

class LegendreImpl final : public detail::FnImpl {
 public:
  LegendreImpl(ScalarFn Q, ScalarFn p, LegendreRoute route)
      : Q_(std::move(Q)), p_(std::move(p)), route_(route) {
    if (route_ == LegendreRoute::kAntiderivative) {
      P_ = antiderivative(p_);
      at_zero_ = -Q_(p_(0.0));
    }
  }
  double eval(double s) const override {
    if (route_ == LegendreRoute::kAntiderivative) return P_(s) + at_zero_;
    const double t = p_(s);
    return s * t - Q_(t);
  }
  std::optional<double> deriv(double s) const override { return p_(s); }
  bool has_deriv() const override { return true; }
  Interval domain() const override { return {}; }
  std::vector<double> breakpoints() const override { return p_.breakpoints(); }
  FnKind kind() const override { return FnKind::kLegendre; }

 private:
  ScalarFn Q_, p_, P_;
  LegendreRoute route_;
  double at_zero_ = 0.0;
};

// g on [m, M] glued to polynomial extension pieces on either side.
class ExtendedImpl final : public detail::FnImpl {
 public:
  ExtendedImpl(ScalarFn g, double m, double M, std::vector<PolyPiece> left, std::vector<PolyPiece> right)
      : g_(std::move(g)), m_(m), M_(M), left_(std::move(left)), right_(std::move(right)) {}

  static const PolyPiece& pick(const std::vector<PolyPiece>& pieces, double s) {
    for (const auto& p : pieces) {
      if (s <= p.hi) return p;
    }
    return pieces.back();
  }
  double eval(double s) const override {
    if (s < m_) return pick(left_, s).eval(s);
    if (s > M_) return pick(right_, s).eval(s);
    return g_(s);
  }
  std::optional<double> deriv(double s) const override {
    if (s < m_) return pick(left_, s).deriv(s);
    if (s > M_) return pick(right_, s).deriv(s);
    return g_.try_deriv(s);
  }
  bool has_deriv() const override { return true; }
  Interval domain() const override { return {}; }
  std::vector<double> breakpoints() const override {
    std::vector<double> out;
    for (const auto& p : left_) out.push_back(p.hi);
    for (double b : g_.breakpoints()) {
      if (b > m_ && b < M_) out.push_back(b);
    }
    for (const auto& p : right_) out.push_back(p.lo);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
  FnKind kind() const override { return FnKind::kExtended; }

 private:
  ScalarFn g_;
  double m_, M_;
  std::vector<PolyPiece> left_, right_;
};

const PiecewiseImpl* as_piecewise_impl(const ScalarFn& fn, const detail::FnImpl* impl) {
  if (fn.kind() != FnKind::kPiecewisePolynomial) return nullptr;
  return static_cast<const PiecewiseImpl*>(impl);
}

}  // namespace

ScalarFn ScalarFn::piecewise(std::vector<PolyPiece> pieces) {
  return ScalarFn(std::make_shared<PiecewiseImpl>(std::move(pieces)));
}

ScalarFn ScalarFn::polynomial(std::vector<double> coeffs) {
  return piecewise({PolyPiece{-kInf, kInf, 0.0, std::move(coeffs)}});
}

ScalarFn ScalarFn::affine(double slope, double intercept) { return polynomial({intercept, slope}); }

ScalarFn ScalarFn::sampled(std::vector<double> xs, std::vector<double> ys) {
  if (xs.size() != ys.size() || xs.size() < 4) {
    throw RegularityViolation("sampled function needs at least 4 matching samples");
  }
  if (!std::is_sorted(xs.begin(), xs.end()) ||
      std::adjacent_find(xs.begin(), xs.end()) != xs.end()) {
    throw RegularityViolation("sample abscissae must be strictly increasing");
  }
  return ScalarFn(std::make_shared<SampledImpl>(std::move(xs), std::move(ys)));
}

ScalarFn ScalarFn::callable(std::function<double(double)> f, std::function<double(double)> df,
                            Interval domain, std::vector<double> breakpoints) {
  return ScalarFn(std::make_shared<CallableImpl>(std::move(f), std::move(df), domain, std::move(breakpoints)));
}

double ScalarFn::deriv(double s) const {
  auto d = impl_->deriv(s);
  if (!d) throw RegularityViolation(to_string(kind()) + " function has no derivative at " + format_exact(s));
  return *d;
}

const std::vector<PolyPiece>* ScalarFn::pieces() const {
  const auto* pw = as_piecewise_impl(*this, impl_.get());
  return pw ? &pw->pieces() : nullptr;
}

std::optional<double> find_monotonicity_violation(const ScalarFn& q, double lo, double hi,
                                                  InverseMode mode, bool strict,
                                                  const ProbeOptions& probe) {
  if (!(hi > lo)) return std::nullopt;
  const double want = std::ceil(probe.density * (hi - lo));
  const std::size_t n = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(want, 2.0)), 2,
                                                probe.max_probes);
  const double step = (hi - lo) / static_cast<double>(n);
  double prev_s = lo;
  double prev = q(lo);
  for (std::size_t k = 1; k <= n; ++k) {
    const double s = k == n ? hi : lo + step * static_cast<double>(k);
    const double cur = q(s);
    const double slack = strict ? 0.0 : 1e-14 * (1.0 + std::abs(prev));
    const double rise = mode == InverseMode::kNondecreasing ? cur - prev : prev - cur;
    if (strict ? !(rise > 0.0) : rise < -slack) return prev_s;
    prev = cur;
    prev_s = s;
  }
  return std::nullopt;
}

namespace {

// Sign of lim q(s) as s -> +-inf for the unbounded end pieces of a piecewise polynomial.
int end_sign(const PolyPiece& piece, bool towards_plus) {
  std::size_t d = piece.coeffs.size();
  while (d > 0 && piece.coeffs[d - 1] == 0.0) --d;
  if (d <= 1) return 0;
  const double lead = piece.coeffs[d - 1];
  const bool odd = (d - 1) % 2 == 1;
  const double sign = towards_plus ? lead : (odd ? -lead : lead);
  return sign > 0 ? 1 : -1;
}

}  // namespace

ScalarFn generalized_inverse(const ScalarFn& q, InverseMode mode, const ProbeOptions& probe) {
  const Interval dom = q.domain();
  if (dom.lo > -kInf || dom.hi < kInf) {
    throw CoercivityViolation("generalized inverse needs q defined on the whole line");
  }
  const bool increasing = mode == InverseMode::kNondecreasing;
  if (const auto* pieces = q.pieces()) {
    const int minus = end_sign(pieces->front(), false);
    const int plus = end_sign(pieces->back(), true);
    if (increasing ? (minus != -1 || plus != 1) : (minus != 1 || plus != -1)) {
      throw CoercivityViolation("q does not escape to the required infinities");
    }
  }
  const auto bps = q.breakpoints();
  const double lo = (bps.empty() ? 0.0 : bps.front()) - 1.0;
  const double hi = (bps.empty() ? 0.0 : bps.back()) + 1.0;
  if (auto bad = find_monotonicity_violation(q, lo, hi, mode, !increasing, probe)) {
    throw MonotonicityViolation("q is not " + std::string(increasing ? "nondecreasing" : "strictly decreasing") +
                                " near " + format_exact(*bad));
  }
  return ScalarFn(std::make_shared<InverseImpl>(q, mode));
}

ScalarFn antiderivative(const ScalarFn& p) {
  if (!p.domain().contains(0.0)) {
    throw QuadratureFailure("antiderivative anchored at 0 needs 0 in the domain");
  }
  if (const auto* pieces = p.pieces()) {
    // Integrate each piece; shift constants so that P(0) = 0 and P is continuous.
    std::vector<PolyPiece> out;
    out.reserve(pieces->size());
    for (const auto& pc : *pieces) {
      PolyPiece q{pc.lo, pc.hi, pc.origin, {}};
      q.coeffs.push_back(0.0);
      for (std::size_t k = 0; k < pc.coeffs.size(); ++k) {
        q.coeffs.push_back(pc.coeffs[k] / static_cast<double>(k + 1));
      }
      out.push_back(std::move(q));
    }
    std::size_t zero = 0;
    while (zero + 1 < out.size() && !(0.0 <= out[zero].hi)) ++zero;
    out[zero].coeffs[0] -= out[zero].eval(0.0);
    for (std::size_t k = zero + 1; k < out.size(); ++k) {
      out[k].coeffs[0] += out[k - 1].eval(out[k].lo) - out[k].eval(out[k].lo);
    }
    for (std::size_t k = zero; k-- > 0;) {
      out[k].coeffs[0] += out[k + 1].eval(out[k].hi) - out[k].eval(out[k].hi);
    }
    return ScalarFn::piecewise(std::move(out));
  }
  return ScalarFn(std::make_shared<QuadratureAntiderivativeImpl>(p));
}

ScalarFn legendre_transform(const ScalarFn& Q, const ScalarFn& q, LegendreRoute route) {
  auto p = generalized_inverse(q, InverseMode::kNondecreasing);
  return ScalarFn(std::make_shared<LegendreImpl>(Q, std::move(p), route));
}

namespace {

struct Extension {
  std::vector<PolyPiece> left, right;
  double c1 = 0.0, c2 = 0.0;
};

Extension build_extension(double m, double M, double gm, double dm, double gM, double dM) {
  Extension ext;
  if (dm > kSlopeTol) {
    ext.left.push_back({-kInf, m, m, {gm, dm}});
    ext.c2 = dm;
  } else {
    ext.left.push_back({-kInf, m - 1.0, m - 1.0, {gm - 1.0, 2.0}});
    ext.left.push_back({m - 1.0, m, m, {gm, 0.0, -1.0}});
    ext.c2 = 2.0;
  }
  if (dM > kSlopeTol) {
    ext.right.push_back({M, kInf, M, {gM, dM}});
    ext.c1 = dM;
  } else {
    ext.right.push_back({M, M + 1.0, M, {gM, 0.0, 1.0}});
    ext.right.push_back({M + 1.0, kInf, M + 1.0, {gM + 1.0, 2.0}});
    ext.c1 = 2.0;
  }
  return ext;
}

std::vector<PolyPiece> restrict_pieces(const std::vector<PolyPiece>& pieces, double m, double M) {
  std::vector<PolyPiece> out;
  for (const auto& p : pieces) {
    if (p.hi <= m || p.lo >= M) continue;
    PolyPiece q = p;
    q.lo = std::max(p.lo, m);
    q.hi = std::min(p.hi, M);
    out.push_back(std::move(q));
  }
  return out;
}

ScalarFn negate(const ScalarFn& fn) {
  if (const auto* pieces = fn.pieces()) {
    auto out = *pieces;
    for (auto& p : out) {
      for (auto& c : p.coeffs) c = -c;
    }
    return ScalarFn::piecewise(std::move(out));
  }
  std::function<double(double)> df;
  if (fn.has_deriv()) df = [fn](double s) { return -fn.deriv(s); };
  return ScalarFn::callable([fn](double s) { return -fn(s); }, df, fn.domain(), fn.breakpoints());
}

}  // namespace

MonotoneProfile extend_monotone(const ScalarFn& g, double m, double M, const ProbeOptions& probe) {
  if (!std::isfinite(m) || !std::isfinite(M) || m > M) {
    throw RegularityViolation("profile interval [m, M] must be finite with m <= M");
  }
  if (!g.has_deriv()) throw RegularityViolation("profile needs a derivative");
  const Interval dom = g.domain();
  if (!dom.contains(m) || !dom.contains(M)) throw RegularityViolation("[m, M] exceeds the domain of g");
  if (auto bad = find_monotonicity_violation(g, m, M, InverseMode::kNondecreasing, false, probe)) {
    throw RegularityViolation("g decreases near " + format_exact(*bad));
  }

  MonotoneProfile out;
  out.g = g;
  out.m = m;
  out.M = M;

  std::vector<PolyPiece> inner;
  if (const auto* pieces = g.pieces()) inner = restrict_pieces(*pieces, m, M);

  double gm, dm, gM, dM;
  if (!inner.empty()) {
    gm = inner.front().eval(m);
    dm = inner.front().deriv(m);
    gM = inner.back().eval(M);
    dM = inner.back().deriv(M);
  } else {
    gm = g(m);
    dm = g.deriv(m);
    gM = g(M);
    dM = g.deriv(M);
  }
  if (dm < -kSlopeTol || dM < -kSlopeTol) throw RegularityViolation("negative end slope of g");

  auto ext = build_extension(m, M, gm, dm, gM, dM);
  out.c1 = ext.c1;
  out.c2 = ext.c2;
  if (g.pieces()) {
    std::vector<PolyPiece> all = ext.left;
    all.insert(all.end(), inner.begin(), inner.end());
    all.insert(all.end(), ext.right.begin(), ext.right.end());
    out.g_ext = ScalarFn::piecewise(std::move(all));
  } else {
    out.g_ext = ScalarFn(std::make_shared<ExtendedImpl>(g, m, M, ext.left, ext.right));
  }
  out.G = antiderivative(out.g_ext);
  out.g_inv = generalized_inverse(out.g_ext, InverseMode::kNondecreasing, probe);
  out.G_hat = legendre_transform(out.G, out.g_ext, LegendreRoute::kLevelSet);
  return out;
}

MonotoneProfile extend_monotone(const ScalarFn& g, const ProbeOptions& probe) {
  const Interval dom = g.domain();
  if (!dom.bounded()) throw RegularityViolation("extend_monotone needs g on a compact interval");
  return extend_monotone(g, dom.lo, dom.hi, probe);
}

double fenchel_gap(const MonotoneProfile& profile, double s, double tau) {
  return profile.G_hat(s) + profile.G(tau) - s * tau;
}

DecreasingProfile extend_decreasing(const ScalarFn& g, double m, double M, const ProbeOptions& probe) {
  const auto mirrored = extend_monotone(negate(g), m, M, probe);
  DecreasingProfile out;
  out.g = g;
  out.m = m;
  out.M = M;
  out.g_ext = negate(mirrored.g_ext);
  out.f = generalized_inverse(out.g_ext, InverseMode::kDecreasing, probe);
  // F(s) = s f(s) - [Gint(f(s)) - Gint(f(0))], the inverse-function integral.
  const ScalarFn g_int = antiderivative(out.g_ext);
  const ScalarFn f = out.f;
  const double base = g_int(f(0.0));
  out.F = ScalarFn::callable(
      [f, g_int, base](double s) {
        const double t = f(s);
        return s * t - (g_int(t) - base);
      },
      [f](double s) { return f(s); }, Interval{}, f.breakpoints());
  return out;
}

std::string format_exact(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

double parse_exact(const nlohmann::json& value) {
  if (value.is_number()) return value.get<double>();
  if (!value.is_string()) throw ProfileFormatError("expected a decimal string or number");
  const auto text = value.get<std::string>();
  if (text == "inf" || text == "+inf") return kInf;
  if (text == "-inf") return -kInf;
  char* end = nullptr;
  const double out = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') throw ProfileFormatError("malformed decimal '" + text + "'");
  return out;
}

nlohmann::json pieces_to_json(const std::vector<PolyPiece>& pieces) {
  auto out = nlohmann::json::array();
  for (const auto& p : pieces) {
    auto coeffs = nlohmann::json::array();
    for (double c : p.coeffs) coeffs.push_back(format_exact(c));
    out.push_back({{"lo", format_exact(p.lo)},
                   {"hi", format_exact(p.hi)},
                   {"origin", format_exact(p.origin)},
                   {"coeffs", coeffs}});
  }
  return out;
}

std::vector<PolyPiece> pieces_from_json(const nlohmann::json& doc) {
  if (!doc.is_array() || doc.empty()) throw ProfileFormatError("pieces must be a nonempty array");
  std::vector<PolyPiece> out;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("coeffs")) throw ProfileFormatError("piece needs coeffs");
    for (const auto& [key, _] : item.items()) {
      if (key != "lo" && key != "hi" && key != "origin" && key != "coeffs") {
        throw ProfileFormatError("unknown piece key '" + key + "'");
      }
    }
    PolyPiece p;
    p.lo = item.contains("lo") ? parse_exact(item["lo"]) : -kInf;
    p.hi = item.contains("hi") ? parse_exact(item["hi"]) : kInf;
    p.origin = item.contains("origin") ? parse_exact(item["origin"]) : 0.0;
    if (!item["coeffs"].is_array() || item["coeffs"].empty()) throw ProfileFormatError("coeffs must be nonempty");
    for (const auto& c : item["coeffs"]) p.coeffs.push_back(parse_exact(c));
    out.push_back(std::move(p));
  }
  return out;
}

nlohmann::json profile_to_json(const MonotoneProfile& profile) {
  const auto* pieces = profile.g.pieces();
  if (!pieces) throw ProfileFormatError("only piecewise-polynomial profiles are serializable");
  return {{"pieces", pieces_to_json(restrict_pieces(*pieces, profile.m, profile.M))},
          {"m", format_exact(profile.m)},
          {"M", format_exact(profile.M)},
          {"extension", "lemma-mM"}};
}

MonotoneProfile profile_from_json(const nlohmann::json& doc, const ProbeOptions& probe) {
  if (!doc.is_object()) throw ProfileFormatError("profile document must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "pieces" && key != "m" && key != "M" && key != "extension") {
      throw ProfileFormatError("unknown profile key '" + key + "'");
    }
  }
  if (!doc.contains("pieces") || !doc.contains("m") || !doc.contains("M")) {
    throw ProfileFormatError("profile needs pieces, m and M");
  }
  if (doc.value("extension", std::string("lemma-mM")) != "lemma-mM") {
    throw ProfileFormatError("unsupported extension kind");
  }
  return extend_monotone(ScalarFn::piecewise(pieces_from_json(doc["pieces"])), parse_exact(doc["m"]),
                         parse_exact(doc["M"]), probe);
}

}  // namespace eulerstab
