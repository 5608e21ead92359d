#pragma once

// Uniform-grid domains with a Dirichlet 5-point Laplacian, the Green operator
// G = (-Delta)^{-1}, grid fields and cell-sum quadrature.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

namespace eulerstab {

enum class Shape { kRectangle, kDisk };

enum class SolverBackend {
  kDirect,              // sparse Cholesky factorization
  kConjugateGradient,   // incomplete-Cholesky preconditioned CG
};

struct GridSpec {
  Shape shape = Shape::kRectangle;
  double lx = 1.0;
  double ly = 1.0;
  double radius = 0.5;
  /// Cells across the x extent (rectangle) or the diameter (disk).
  int n = 64;
  SolverBackend backend = SolverBackend::kDirect;
};

using SparseMatrix = Eigen::SparseMatrix<double>;

class GreenOperator;

/// Node lattice with interior mask. Box coordinates run over
/// i = 0..nx+1, j = 0..ny+1; the outer frame is never interior.
class Grid {
 public:
  static std::shared_ptr<const Grid> build(const GridSpec& spec);
  ~Grid();

  const GridSpec& spec() const { return spec_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int box_width() const { return nx_ + 2; }
  int box_height() const { return ny_ + 2; }
  double h() const { return h_; }
  double cell_area() const { return h_ * h_; }
  double x0() const { return x0_; }
  double y0() const { return y0_; }
  double x_of(int i) const { return x0_ + h_ * i; }
  double y_of(int j) const { return y0_ + h_ * j; }

  /// Number of interior nodes.
  std::size_t size() const { return node_i_.size(); }
  /// Measure of the discrete domain, size() * h^2.
  double area() const { return static_cast<double>(size()) * cell_area(); }
  /// Characteristic length used for turnover times.
  double length_scale() const;

  int box_index(int i, int j) const { return j * box_width() + i; }
  /// Interior index of box node (i, j), or -1.
  int index(int i, int j) const;
  bool interior(int i, int j) const { return index(i, j) >= 0; }
  int node_i(std::size_t k) const { return node_i_[k]; }
  int node_j(std::size_t k) const { return node_j_[k]; }
  double x(std::size_t k) const { return x_of(node_i_[k]); }
  double y(std::size_t k) const { return y_of(node_j_[k]); }

  /// Non-interior box nodes that touch an interior node (8-neighbourhood).
  const std::vector<int>& halo() const { return halo_; }
  /// Interior nodes within `width` lattice steps (Chebyshev) of a non-interior node.
  std::vector<bool> collar(int width) const;

  /// The 5-point -Delta_h on interior nodes (SPD).
  const SparseMatrix& laplacian() const { return laplacian_; }
  const GreenOperator& green() const { return *green_; }

  bool same_as(const Grid& other) const { return this == &other; }
  nlohmann::json to_json() const;

 private:
  Grid() = default;

  GridSpec spec_;
  int nx_ = 0, ny_ = 0;
  double h_ = 0.0, x0_ = 0.0, y0_ = 0.0;
  std::vector<int> box_to_interior_;
  std::vector<int> node_i_, node_j_;
  std::vector<int> halo_;
  SparseMatrix laplacian_;
  std::unique_ptr<GreenOperator> green_;
};

using GridPtr = std::shared_ptr<const Grid>;

/// Real values on the interior nodes of a grid.
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(GridPtr grid, Eigen::VectorXd values);
  static ScalarField zeros(GridPtr grid);
  static ScalarField constant(GridPtr grid, double value);
  template <class F>
  static ScalarField from_function(GridPtr grid, F&& f) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(grid->size()));
    for (std::size_t k = 0; k < grid->size(); ++k) v[static_cast<Eigen::Index>(k)] = f(grid->x(k), grid->y(k));
    return ScalarField(std::move(grid), std::move(v));
  }

  const GridPtr& grid() const { return grid_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  double operator[](std::size_t k) const { return values_[static_cast<Eigen::Index>(k)]; }
  double& operator[](std::size_t k) { return values_[static_cast<Eigen::Index>(k)]; }
  double min() const { return values_.minCoeff(); }
  double max() const { return values_.maxCoeff(); }

  /// Value at box node (i, j), zero off the interior.
  double at_box(int i, int j) const;

  ScalarField& operator+=(const ScalarField& o);
  ScalarField& operator-=(const ScalarField& o);
  ScalarField& operator*=(double a);
  friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
  friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
  friend ScalarField operator*(ScalarField a, double s) { return a *= s; }
  friend ScalarField operator*(double s, ScalarField a) { return a *= s; }

  /// Pointwise map.
  template <class F>
  ScalarField map(F&& f) const {
    ScalarField out = *this;
    for (Eigen::Index k = 0; k < out.values_.size(); ++k) out.values_[k] = f(values_[k]);
    return out;
  }

 private:
  GridPtr grid_;
  Eigen::VectorXd values_;
};

struct VelocityField {
  GridPtr grid;
  Eigen::VectorXd u;
  Eigen::VectorXd v;

  double max_speed() const;
};

class GreenOperator {
 public:
  GreenOperator(const SparseMatrix& laplacian, SolverBackend backend);
  ~GreenOperator();
  GreenOperator(const GreenOperator&) = delete;
  GreenOperator& operator=(const GreenOperator&) = delete;

  /// Solves -Delta_h u = f; throws SolverFailure above relative residual 1e-10.
  Eigen::VectorXd solve(const Eigen::VectorXd& f) const;
  SolverBackend backend() const { return backend_; }

 private:
  struct Impl;
  SolverBackend backend_;
  const SparseMatrix& laplacian_;
  std::unique_ptr<Impl> impl_;
};

void require_same_grid(const ScalarField& a, const ScalarField& b);

/// u with -Delta_h u = f, u = 0 off the interior.
ScalarField green_apply(const ScalarField& f);
/// -Delta_h u.
ScalarField apply_laplacian(const ScalarField& u);
/// Solve with an explicitly chosen backend (both must agree).
ScalarField green_apply(const ScalarField& f, SolverBackend backend);

/// (u, v) = (d_y psi, -d_x psi); centered differences, one-sided next to the mask boundary.
VelocityField perp_gradient(const ScalarField& psi);
/// Centered divergence of a velocity field (one-sided at the mask boundary).
ScalarField divergence(const VelocityField& vel);

double integral(const ScalarField& f);
double lp_norm(const ScalarField& f, double p);
double inner(const ScalarField& f, const ScalarField& g);
/// integral of f * G g.
double energy_inner(const ScalarField& f, const ScalarField& g);

enum class Outside {
  kZero,         // corners off the interior contribute value 0
  kRenormalize,  // point clamped to the interior hull, weights renormalized over interior corners
};

/// Bilinear interpolation of f at (x, y).
double sample_bilinear(const ScalarField& f, double x, double y, Outside policy);

// Field snapshot: <stem>.bin holds the nx*ny interior box as row-major
// little-endian float64 (zero where the mask is off), <stem>.json the sidecar.
void write_snapshot(const ScalarField& f, const std::filesystem::path& stem,
                    const nlohmann::json& extra = nlohmann::json::object());
ScalarField read_snapshot(const std::filesystem::path& stem, GridPtr grid = nullptr);
std::vector<int> mask_rle(const Grid& grid);

GridSpec grid_spec_from_json(const nlohmann::json& doc);
nlohmann::json grid_spec_to_json(const GridSpec& spec);

}  // namespace eulerstab
