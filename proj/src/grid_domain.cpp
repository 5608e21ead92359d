#include "eulerstab/grid_domain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "eulerstab/errors.hpp"

namespace eulerstab {

namespace {

constexpr double kResidualTol = 1e-10;

bool connected(const std::vector<int>& box_to_interior, int w, int h, std::size_t count) {
  if (count == 0) return false;
  std::vector<char> seen(box_to_interior.size(), 0);
  std::deque<int> queue;
  for (std::size_t b = 0; b < box_to_interior.size(); ++b) {
    if (box_to_interior[b] >= 0) {
      queue.push_back(static_cast<int>(b));
      seen[b] = 1;
      break;
    }
  }
  std::size_t reached = 0;
  while (!queue.empty()) {
    const int b = queue.front();
    queue.pop_front();
    ++reached;
    const int i = b % w, j = b / w;
    const int nb[4][2] = {{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}};
    for (const auto& q : nb) {
      if (q[0] < 0 || q[1] < 0 || q[0] >= w || q[1] >= h) continue;
      const int c = q[1] * w + q[0];
      if (!seen[static_cast<std::size_t>(c)] && box_to_interior[static_cast<std::size_t>(c)] >= 0) {
        seen[static_cast<std::size_t>(c)] = 1;
        queue.push_back(c);
      }
    }
  }
  return reached == count;
}

}  // namespace

struct GreenOperator::Impl {
  Eigen::SimplicialLLT<SparseMatrix> direct;
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>> cg;
};

GreenOperator::GreenOperator(const SparseMatrix& laplacian, SolverBackend backend)
    : backend_(backend), laplacian_(laplacian), impl_(std::make_unique<Impl>()) {
  if (backend_ == SolverBackend::kDirect) {
    impl_->direct.compute(laplacian_);
    if (impl_->direct.info() != Eigen::Success) throw SolverFailure("Cholesky factorization failed");
  } else {
    impl_->cg.setTolerance(1e-14);
    impl_->cg.setMaxIterations(20 * static_cast<Eigen::Index>(std::sqrt(laplacian.rows()) + 10));
    impl_->cg.compute(laplacian_);
    if (impl_->cg.info() != Eigen::Success) throw SolverFailure("CG preconditioner setup failed");
  }
}

GreenOperator::~GreenOperator() = default;

Eigen::VectorXd GreenOperator::solve(const Eigen::VectorXd& f) const {
  const double fnorm = f.norm();
  if (fnorm == 0.0) return Eigen::VectorXd::Zero(f.size());
  Eigen::VectorXd u;
  if (backend_ == SolverBackend::kDirect) {
    u = impl_->direct.solve(f);
  } else {
    u = impl_->cg.solve(f);
  }
  const double rel = (laplacian_ * u - f).norm() / fnorm;
  if (!(rel < kResidualTol)) {
    throw SolverFailure("Poisson solve stalled at relative residual " + std::to_string(rel));
  }
  return u;
}

Grid::~Grid() = default;

std::shared_ptr<const Grid> Grid::build(const GridSpec& spec) {
  if (spec.n < 8) throw InvalidSpec("resolution must be at least 8, got " + std::to_string(spec.n));
  std::shared_ptr<Grid> g(new Grid());
  g->spec_ = spec;
  if (spec.shape == Shape::kRectangle) {
    if (!(spec.lx > 0.0) || !(spec.ly > 0.0) || !std::isfinite(spec.lx) || !std::isfinite(spec.ly)) {
      throw InvalidSpec("rectangle sides must be positive");
    }
    g->h_ = spec.lx / spec.n;
    const long cells_y = std::lround(spec.ly / g->h_);
    if (cells_y < 8) throw InvalidSpec("rectangle too thin for the resolution");
    if (std::abs(static_cast<double>(cells_y) * g->h_ - spec.ly) > 1e-9 * spec.ly) {
      throw InvalidSpec("ly must be an integer multiple of lx / n");
    }
    g->nx_ = spec.n - 1;
    g->ny_ = static_cast<int>(cells_y) - 1;
    g->x0_ = 0.0;
    g->y0_ = 0.0;
  } else {
    if (!(spec.radius > 0.0) || !std::isfinite(spec.radius)) throw InvalidSpec("disk radius must be positive");
    g->h_ = 2.0 * spec.radius / spec.n;
    g->nx_ = g->ny_ = spec.n - 1;
    g->x0_ = g->y0_ = -spec.radius;
  }

  const int w = g->box_width(), hgt = g->box_height();
  g->box_to_interior_.assign(static_cast<std::size_t>(w * hgt), -1);
  const double r2 = spec.radius * spec.radius * (1.0 - 1e-12);
  for (int j = 1; j <= g->ny_; ++j) {
    for (int i = 1; i <= g->nx_; ++i) {
      bool inside = true;
      if (spec.shape == Shape::kDisk) {
        const double x = g->x_of(i), y = g->y_of(j);
        inside = x * x + y * y < r2;
      }
      if (inside) {
        g->box_to_interior_[static_cast<std::size_t>(g->box_index(i, j))] = static_cast<int>(g->node_i_.size());
        g->node_i_.push_back(i);
        g->node_j_.push_back(j);
      }
    }
  }
  if (!connected(g->box_to_interior_, w, hgt, g->node_i_.size())) {
    throw InvalidSpec("interior mask is empty or not connected");
  }

  for (int j = 0; j < hgt; ++j) {
    for (int i = 0; i < w; ++i) {
      if (g->interior(i, j)) continue;
      bool touches = false;
      for (int dj = -1; dj <= 1 && !touches; ++dj) {
        for (int di = -1; di <= 1 && !touches; ++di) touches = g->interior(i + di, j + dj);
      }
      if (touches) g->halo_.push_back(g->box_index(i, j));
    }
  }

  const auto n = static_cast<Eigen::Index>(g->size());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(5 * n));
  const double inv_h2 = 1.0 / (g->h_ * g->h_);
  for (std::size_t k = 0; k < g->size(); ++k) {
    const int i = g->node_i_[k], j = g->node_j_[k];
    const auto row = static_cast<Eigen::Index>(k);
    trips.emplace_back(row, row, 4.0 * inv_h2);
    const int nb[4][2] = {{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}};
    for (const auto& q : nb) {
      const int c = g->index(q[0], q[1]);
      if (c >= 0) trips.emplace_back(row, c, -inv_h2);
    }
  }
  g->laplacian_.resize(n, n);
  g->laplacian_.setFromTriplets(trips.begin(), trips.end());
  g->laplacian_.makeCompressed();
  g->green_ = std::make_unique<GreenOperator>(g->laplacian_, spec.backend);
  return g;
}

int Grid::index(int i, int j) const {
  if (i < 0 || j < 0 || i >= box_width() || j >= box_height()) return -1;
  return box_to_interior_[static_cast<std::size_t>(box_index(i, j))];
}

double Grid::length_scale() const {
  return spec_.shape == Shape::kRectangle ? std::max(spec_.lx, spec_.ly) : 2.0 * spec_.radius;
}

std::vector<bool> Grid::collar(int width) const {
  std::vector<bool> out(size(), false);
  for (std::size_t k = 0; k < size(); ++k) {
    const int i = node_i_[k], j = node_j_[k];
    for (int dj = -width; dj <= width && !out[k]; ++dj) {
      for (int di = -width; di <= width && !out[k]; ++di) {
        if (!interior(i + di, j + dj)) out[k] = true;
      }
    }
  }
  return out;
}

nlohmann::json Grid::to_json() const {
  auto doc = grid_spec_to_json(spec_);
  doc["nx"] = nx_;
  doc["ny"] = ny_;
  doc["h"] = h_;
  doc["interior_nodes"] = size();
  return doc;
}

ScalarField::ScalarField(GridPtr grid, Eigen::VectorXd values) : grid_(std::move(grid)), values_(std::move(values)) {
  if (!grid_) throw GridMismatch("field without a grid");
  if (static_cast<std::size_t>(values_.size()) != grid_->size()) {
    throw GridMismatch("field length " + std::to_string(values_.size()) + " does not match " +
                       std::to_string(grid_->size()) + " interior nodes");
  }
}

ScalarField ScalarField::zeros(GridPtr grid) {
  const auto n = static_cast<Eigen::Index>(grid->size());
  return ScalarField(std::move(grid), Eigen::VectorXd::Zero(n));
}

ScalarField ScalarField::constant(GridPtr grid, double value) {
  const auto n = static_cast<Eigen::Index>(grid->size());
  return ScalarField(std::move(grid), Eigen::VectorXd::Constant(n, value));
}

double ScalarField::at_box(int i, int j) const {
  const int k = grid_->index(i, j);
  return k < 0 ? 0.0 : values_[k];
}

ScalarField& ScalarField::operator+=(const ScalarField& o) {
  require_same_grid(*this, o);
  values_ += o.values_;
  return *this;
}

ScalarField& ScalarField::operator-=(const ScalarField& o) {
  require_same_grid(*this, o);
  values_ -= o.values_;
  return *this;
}

ScalarField& ScalarField::operator*=(double a) {
  values_ *= a;
  return *this;
}

double VelocityField::max_speed() const {
  double best = 0.0;
  for (Eigen::Index k = 0; k < u.size(); ++k) best = std::max(best, std::hypot(u[k], v[k]));
  return best;
}

void require_same_grid(const ScalarField& a, const ScalarField& b) {
  if (!a.grid() || !b.grid() || !a.grid()->same_as(*b.grid())) {
    throw GridMismatch("fields live on different grids");
  }
}

ScalarField green_apply(const ScalarField& f) {
  return ScalarField(f.grid(), f.grid()->green().solve(f.values()));
}

ScalarField green_apply(const ScalarField& f, SolverBackend backend) {
  if (backend == f.grid()->green().backend()) return green_apply(f);
  GreenOperator other(f.grid()->laplacian(), backend);
  return ScalarField(f.grid(), other.solve(f.values()));
}

ScalarField apply_laplacian(const ScalarField& u) {
  return ScalarField(u.grid(), u.grid()->laplacian() * u.values());
}

namespace {

// Derivative along one lattice direction at interior node k, using interior values only.
double lattice_derivative(const ScalarField& f, std::size_t k, int di, int dj) {
  const Grid& g = *f.grid();
  const int i = g.node_i(k), j = g.node_j(k);
  const int fwd = g.index(i + di, j + dj), bwd = g.index(i - di, j - dj);
  const double c = f[k];
  if (fwd >= 0 && bwd >= 0) return (f[static_cast<std::size_t>(fwd)] - f[static_cast<std::size_t>(bwd)]) / (2.0 * g.h());
  if (fwd >= 0) return (f[static_cast<std::size_t>(fwd)] - c) / g.h();
  if (bwd >= 0) return (c - f[static_cast<std::size_t>(bwd)]) / g.h();
  return 0.0;
}

}  // namespace

VelocityField perp_gradient(const ScalarField& psi) {
  VelocityField vel{psi.grid(), Eigen::VectorXd(static_cast<Eigen::Index>(psi.size())),
                    Eigen::VectorXd(static_cast<Eigen::Index>(psi.size()))};
  for (std::size_t k = 0; k < psi.size(); ++k) {
    vel.u[static_cast<Eigen::Index>(k)] = lattice_derivative(psi, k, 0, 1);
    vel.v[static_cast<Eigen::Index>(k)] = -lattice_derivative(psi, k, 1, 0);
  }
  return vel;
}

ScalarField divergence(const VelocityField& vel) {
  const ScalarField u(vel.grid, vel.u), v(vel.grid, vel.v);
  Eigen::VectorXd out(vel.u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] = lattice_derivative(u, k, 1, 0) + lattice_derivative(v, k, 0, 1);
  }
  return ScalarField(vel.grid, std::move(out));
}

double integral(const ScalarField& f) { return f.values().sum() * f.grid()->cell_area(); }

double lp_norm(const ScalarField& f, double p) {
  if (std::isinf(p)) return f.values().cwiseAbs().maxCoeff();
  if (p == 2.0) return std::sqrt(f.values().squaredNorm() * f.grid()->cell_area());
  double acc = 0.0;
  for (Eigen::Index k = 0; k < f.values().size(); ++k) acc += std::pow(std::abs(f.values()[k]), p);
  return std::pow(acc * f.grid()->cell_area(), 1.0 / p);
}

double inner(const ScalarField& f, const ScalarField& g) {
  require_same_grid(f, g);
  return f.values().dot(g.values()) * f.grid()->cell_area();
}

double energy_inner(const ScalarField& f, const ScalarField& g) {
  require_same_grid(f, g);
  return inner(f, green_apply(g));
}

double sample_bilinear(const ScalarField& f, double x, double y, Outside policy) {
  const Grid& g = *f.grid();
  double fx = (x - g.x0()) / g.h();
  double fy = (y - g.y0()) / g.h();
  if (policy == Outside::kRenormalize) {
    fx = std::clamp(fx, 1.0, static_cast<double>(g.nx()));
    fy = std::clamp(fy, 1.0, static_cast<double>(g.ny()));
  }
  int i = static_cast<int>(std::floor(fx));
  int j = static_cast<int>(std::floor(fy));
  i = std::clamp(i, 0, g.box_width() - 2);
  j = std::clamp(j, 0, g.box_height() - 2);
  const double ax = std::clamp(fx - i, 0.0, 1.0), ay = std::clamp(fy - j, 0.0, 1.0);
  const double w[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
  const int ci[4] = {i, i + 1, i, i + 1};
  const int cj[4] = {j, j, j + 1, j + 1};
  double acc = 0.0, wsum = 0.0;
  for (int c = 0; c < 4; ++c) {
    const int k = g.index(ci[c], cj[c]);
    if (k < 0) continue;
    acc += w[c] * f[static_cast<std::size_t>(k)];
    wsum += w[c];
  }
  if (policy == Outside::kZero) return acc;
  if (wsum > 1e-12) return acc / wsum;
  // No interior corner carries weight: fall back to the nearest interior node.
  double best = std::numeric_limits<double>::infinity(), value = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double d = std::hypot(g.x(k) - x, g.y(k) - y);
    if (d < best) {
      best = d;
      value = f[k];
    }
  }
  return value;
}

std::vector<int> mask_rle(const Grid& grid) {
  // Alternating run lengths over the row-major nx*ny box, starting with "off".
  std::vector<int> runs;
  bool state = false;
  int count = 0;
  for (int j = 1; j <= grid.ny(); ++j) {
    for (int i = 1; i <= grid.nx(); ++i) {
      const bool on = grid.interior(i, j);
      if (on != state) {
        runs.push_back(count);
        state = on;
        count = 0;
      }
      ++count;
    }
  }
  runs.push_back(count);
  return runs;
}

nlohmann::json grid_spec_to_json(const GridSpec& spec) {
  nlohmann::json doc;
  if (spec.shape == Shape::kRectangle) {
    doc = {{"shape", "rectangle"}, {"lx", spec.lx}, {"ly", spec.ly}, {"n", spec.n}};
  } else {
    doc = {{"shape", "disk"}, {"radius", spec.radius}, {"n", spec.n}};
  }
  doc["backend"] = spec.backend == SolverBackend::kDirect ? "direct" : "cg";
  return doc;
}

GridSpec grid_spec_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InvalidSpec("grid spec must be an object");
  GridSpec spec;
  const auto shape = doc.value("shape", std::string("rectangle"));
  if (shape == "rectangle") {
    spec.shape = Shape::kRectangle;
    spec.lx = doc.value("lx", 1.0);
    spec.ly = doc.value("ly", 1.0);
  } else if (shape == "disk") {
    spec.shape = Shape::kDisk;
    spec.radius = doc.value("radius", 0.5);
  } else {
    throw InvalidSpec("unknown grid shape '" + shape + "'");
  }
  spec.n = doc.value("n", 64);
  const auto backend = doc.value("backend", std::string("direct"));
  if (backend == "direct") {
    spec.backend = SolverBackend::kDirect;
  } else if (backend == "cg") {
    spec.backend = SolverBackend::kConjugateGradient;
  } else {
    throw InvalidSpec("unknown solver backend '" + backend + "'");
  }
  return spec;
}

void write_snapshot(const ScalarField& f, const std::filesystem::path& stem, const nlohmann::json& extra) {
  static_assert(std::endian::native == std::endian::little, "snapshot writer assumes little-endian hosts");
  const Grid& g = *f.grid();
  std::vector<double> box(static_cast<std::size_t>(g.nx()) * static_cast<std::size_t>(g.ny()), 0.0);
  for (std::size_t k = 0; k < g.size(); ++k) {
    box[static_cast<std::size_t>(g.node_j(k) - 1) * static_cast<std::size_t>(g.nx()) +
        static_cast<std::size_t>(g.node_i(k) - 1)] = f[k];
  }
  auto bin = stem;
  bin += ".bin";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw SnapshotError("cannot open " + bin.string());
  out.write(reinterpret_cast<const char*>(box.data()), static_cast<std::streamsize>(box.size() * sizeof(double)));
  if (!out) throw SnapshotError("short write to " + bin.string());

  nlohmann::json side = grid_spec_to_json(g.spec());
  side["nx"] = g.nx();
  side["ny"] = g.ny();
  side["h"] = g.h();
  side["mask_rle"] = mask_rle(g);
  side["dtype"] = "float64-le";
  side["layout"] = "row-major";
  for (const auto& [key, value] : extra.items()) side[key] = value;
  auto meta = stem;
  meta += ".json";
  std::ofstream js(meta);
  if (!js) throw SnapshotError("cannot open " + meta.string());
  js << side.dump(2) << '\n';
}

ScalarField read_snapshot(const std::filesystem::path& stem, GridPtr grid) {
  auto meta = stem;
  meta += ".json";
  std::ifstream js(meta);
  if (!js) throw SnapshotError("cannot open " + meta.string());
  nlohmann::json side;
  try {
    js >> side;
  } catch (const nlohmann::json::exception& e) {
    throw SnapshotError(std::string("malformed sidecar: ") + e.what());
  }
  if (!grid) {
    nlohmann::json spec_doc = side;
    for (const char* key : {"nx", "ny", "h", "mask_rle", "dtype", "layout"}) spec_doc.erase(key);
    nlohmann::json clean;
    for (const char* key : {"shape", "lx", "ly", "radius", "n", "backend"}) {
      if (spec_doc.contains(key)) clean[key] = spec_doc[key];
    }
    grid = Grid::build(grid_spec_from_json(clean));
  }
  if (side.at("nx").get<int>() != grid->nx() || side.at("ny").get<int>() != grid->ny() ||
      side.at("mask_rle").get<std::vector<int>>() != mask_rle(*grid)) {
    throw SnapshotError("snapshot does not match the grid");
  }
  auto bin = stem;
  bin += ".bin";
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw SnapshotError("cannot open " + bin.string());
  std::vector<double> box(static_cast<std::size_t>(grid->nx()) * static_cast<std::size_t>(grid->ny()));
  in.read(reinterpret_cast<char*>(box.data()), static_cast<std::streamsize>(box.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(box.size() * sizeof(double))) {
    throw SnapshotError("truncated snapshot " + bin.string());
  }
  Eigen::VectorXd values(static_cast<Eigen::Index>(grid->size()));
  for (std::size_t k = 0; k < grid->size(); ++k) {
    values[static_cast<Eigen::Index>(k)] = box[static_cast<std::size_t>(grid->node_j(k) - 1) *
                                                    static_cast<std::size_t>(grid->nx()) +
                                                static_cast<std::size_t>(grid->node_i(k) - 1)];
  }
  return ScalarField(grid, std::move(values));
}

}  // namespace eulerstab
