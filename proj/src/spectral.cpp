#include "eulerstab/spectral.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseCholesky>

#include "eulerstab/errors.hpp"

namespace eulerstab {

namespace {

// A = L + diag(c) + w w^T / s, with the rank-one term optional.
struct Operator {
  const SparseMatrix& L;
  Eigen::VectorXd c;
  Eigen::VectorXd w;
  double s = 0.0;

  bool rank_one() const { return w.size() > 0; }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = L * x + c.cwiseProduct(x);
    if (rank_one()) y += w * (w.dot(x) / s);
    return y;
  }
};

// Solver for (A - sigma I) y = b via a factorization of L + diag(c - sigma)
// and Sherman-Morrison for the rank-one term.
class ShiftedSolver {
 public:
  ShiftedSolver(const Operator& op, double sigma) : op_(op) {
    SparseMatrix K = op.L;
    for (Eigen::Index k = 0; k < K.rows(); ++k) K.coeffRef(k, k) += op.c[k] - sigma;
    ldlt_.compute(K);
    if (ldlt_.info() != Eigen::Success) throw ConvergenceFailure("shifted factorization failed");
    if (op.rank_one()) {
      z_ = ldlt_.solve(op.w);
      denom_ = op.s + op.w.dot(z_);
      if (!(std::abs(denom_) > 1e-300)) throw ConvergenceFailure("singular rank-one update");
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd y = ldlt_.solve(b);
    if (op_.rank_one()) y -= z_ * (op_.w.dot(y) / denom_);
    return y;
  }

 private:
  const Operator& op_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
  Eigen::VectorXd z_;
  double denom_ = 0.0;
};

struct RawEigen {
  double value;
  Eigen::VectorXd vec;  // unit Euclidean norm
  double residual;      // relative, scale-free
  int iterations;
};

constexpr double kTargetResidual = 1e-10;
constexpr double kAcceptResidual = 1e-8;
constexpr int kMaxIterations = 500;

// Inverse iteration from the normalized all-ones vector: first with a shift
// below the spectrum, then with a shift just under the Rayleigh quotient.
RawEigen smallest_eigen(const Operator& op) {
  const auto n = op.L.rows();
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  const double sigma0 = op.c.minCoeff() - 1.0;

  auto rayleigh = [&](const Eigen::VectorXd& v, double& rq) {
    const Eigen::VectorXd Av = op.apply(v);
    rq = v.dot(Av);
    return (Av - rq * v).norm();
  };

  double rq = 0.0;
  double res = rayleigh(x, rq);
  int it = 0;
  {
    ShiftedSolver solver(op, sigma0);
    while (it < kMaxIterations && res > 1e-4 * std::max(1.0, std::abs(rq)) && res > kTargetResidual) {
      x = solver.solve(x);
      x.normalize();
      res = rayleigh(x, rq);
      ++it;
    }
  }
  double best_res = res;
  Eigen::VectorXd best_x = x;
  double best_rq = rq;
  if (res > kTargetResidual) {
    const double sigma1 = rq - 10.0 * res - 1e-9 * std::max(1.0, std::abs(rq));
    ShiftedSolver solver(op, sigma1);
    int stall = 0;
    while (it < kMaxIterations && best_res > kTargetResidual && stall < 6) {
      x = solver.solve(x);
      x.normalize();
      res = rayleigh(x, rq);
      ++it;
      if (res < best_res) {
        if (res < 0.5 * best_res) stall = 0; else ++stall;
        best_res = res;
        best_x = x;
        best_rq = rq;
      } else {
        ++stall;
      }
    }
  }
  if (!(best_res < kAcceptResidual)) {
    throw ConvergenceFailure("inverse iteration stopped at residual " + std::to_string(best_res));
  }
  if (best_x.sum() < 0.0) best_x = -best_x;
  return {best_rq, best_x, best_res, it};
}

Eigenpair to_pair(const GridPtr& grid, RawEigen raw) {
  const double scale = 1.0 / grid->h();  // unit discrete L2: h^2 * sum u^2 = 1
  return {raw.value, ScalarField(grid, raw.vec * scale), raw.residual, raw.iterations};
}

}  // namespace

Eigenpair principal_eigenpair(const ScalarField& c) {
  const auto& grid = c.grid();
  Operator op{grid->laplacian(), c.values(), {}, 0.0};
  return to_pair(grid, smallest_eigen(op));
}

Eigenpair principal_eigenpair(const GridPtr& grid) { return principal_eigenpair(ScalarField::zeros(grid)); }

Eigenpair coercivity_eigenpair(const ScalarField& gprime_field) {
  const auto& grid = gprime_field.grid();
  const double mass = gprime_field.values().sum();
  if (!(mass > 0.0)) throw MassViolation("integral of g' must be positive for the corrected form");
  Operator op{grid->laplacian(), -gprime_field.values(), gprime_field.values(), mass};
  return to_pair(grid, smallest_eigen(op));
}

double coercivity_delta(const ScalarField& gprime_field) { return coercivity_eigenpair(gprime_field).value; }

std::string to_string(Classification c) {
  switch (c) {
    case Classification::kArnoldFirst: return "ArnoldFirst";
    case Classification::kArnoldSecond: return "ArnoldSecond";
    case Classification::kWolanskyGhil: return "WolanskyGhil";
    case Classification::kThm1Semistable: return "Thm1Semistable";
    case Classification::kNone: return "None";
  }
  return "None";
}

Classification classification_from_string(const std::string& name) {
  for (auto c : {Classification::kArnoldFirst, Classification::kArnoldSecond, Classification::kWolanskyGhil,
                 Classification::kThm1Semistable, Classification::kNone}) {
    if (to_string(c) == name) return c;
  }
  throw Error("spectral", "unknown classification '" + name + "'");
}

bool StabilityCertificate::has_label(Classification c) const {
  return std::find(labels.begin(), labels.end(), c) != labels.end();
}

nlohmann::json StabilityCertificate::to_json() const {
  nlohmann::json doc;
  doc["lambda1"] = lambda1;
  doc["mu1"] = mu1;
  doc["delta"] = delta ? nlohmann::json(*delta) : nlohmann::json(nullptr);
  doc["mass_gprime"] = mass_gprime;
  auto names = nlohmann::json::array();
  for (auto l : labels) names.push_back(to_string(l));
  doc["labels"] = names;
  doc["classification"] = to_string(classification);
  doc["grid"] = grid;
  doc["profile_id"] = profile_id;
  nlohmann::json ev = evidence;
  ev["min_gprime"] = min_gprime;
  ev["max_gprime"] = max_gprime;
  if (sampled_form_min) ev["sampled_form_min"] = *sampled_form_min;
  doc["evidence"] = ev;
  return doc;
}

StabilityCertificate classify_stability(const SteadyState& steady, const ClassifyOptions& options) {
  const auto& grid = steady.grid();
  const double tol = options.tol;
  StabilityCertificate cert;
  cert.grid = grid->to_json();
  cert.profile_id = steady.profile_id;

  // g' over [m, M] on the probe grid.
  const double span = steady.M - steady.m;
  const auto probes = span > 0.0
      ? std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(options.probe.density * span)) + 1, 257,
                                options.probe.max_probes)
      : std::size_t{1};
  cert.min_gprime = kInf;
  cert.max_gprime = -kInf;
  for (std::size_t i = 0; i < probes; ++i) {
    const double s = probes == 1 ? steady.m
                                 : steady.m + span * static_cast<double>(i) / static_cast<double>(probes - 1);
    const double d = steady.gprime(s);
    cert.min_gprime = std::min(cert.min_gprime, d);
    cert.max_gprime = std::max(cert.max_gprime, d);
  }

  const ScalarField gp = steady.psi_bar.map([&](double s) { return steady.gprime(s); });
  cert.mass_gprime = integral(gp);

  const auto lap = principal_eigenpair(grid);
  cert.lambda1 = lap.value;
  const auto lin = principal_eigenpair(gp * -1.0);
  cert.mu1 = lin.value;
  cert.evidence["lambda1_residual"] = lap.residual;
  cert.evidence["mu1_residual"] = lin.residual;
  cert.evidence["tol"] = tol;
  cert.evidence["m"] = steady.m;
  cert.evidence["M"] = steady.M;

  const bool nondecreasing = cert.min_gprime >= 0.0;
  bool strictly_increasing = nondecreasing && cert.max_gprime > 0.0;
  if (strictly_increasing && span > 0.0) {
    strictly_increasing =
        !find_monotonicity_violation(steady.g, steady.m, steady.M, InverseMode::kNondecreasing, true, options.probe);
  }

  if (cert.max_gprime < 0.0) cert.labels.push_back(Classification::kArnoldFirst);
  if (cert.min_gprime > 0.0 && cert.max_gprime <= cert.lambda1) cert.labels.push_back(Classification::kArnoldSecond);
  if (nondecreasing && strictly_increasing && cert.mu1 > tol) cert.labels.push_back(Classification::kWolanskyGhil);
  if (nondecreasing) {
    if (gp.values().sum() <= 0.0) {
      cert.evidence["thm1_branch"] = "constant-vorticity";
      cert.labels.push_back(Classification::kThm1Semistable);
    } else {
      const auto cor = coercivity_eigenpair(gp);
      cert.delta = cor.value;
      cert.evidence["delta_residual"] = cor.residual;
      if (cor.value > tol && cert.mu1 >= -tol) {
        cert.evidence["thm1_branch"] = "coercive";
        cert.labels.push_back(Classification::kThm1Semistable);
      }
    }
  }

  cert.classification = Classification::kNone;
  for (auto c : {Classification::kThm1Semistable, Classification::kWolanskyGhil, Classification::kArnoldSecond,
                 Classification::kArnoldFirst}) {
    if (cert.has_label(c)) {
      cert.classification = c;
      break;
    }
  }
  return cert;
}

std::optional<double> sampled_form_minimum(const SteadyState& steady, const std::vector<ScalarField>& samples) {
  const ScalarField gp = steady.psi_bar.map([&](double s) { return steady.gprime(s); });
  const double mass = integral(gp);
  std::optional<double> best;
  for (const auto& omega : samples) {
    const ScalarField phi = omega - steady.omega_bar;
    const ScalarField u = green_apply(phi);
    const double uu = inner(u, u);
    if (!(uu > 0.0)) continue;
    double form = inner(phi, u) - inner(gp, u.map([](double v) { return v * v; }));
    if (mass > 0.0) {
      const double t = inner(gp, u);
      form += t * t / mass;
    }
    const double q = form / uu;
    if (!best || q < *best) best = q;
  }
  return best;
}

}  // namespace eulerstab
