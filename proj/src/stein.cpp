#include "mdev/stein.hpp"

#include "mdev/linalg.hpp"
#include "mdev/quadrature.hpp"
#include "mdev/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mdev {

// ---------------------------------------------------------------------------
// Observables

Observable make_linear_observable(const Vector& v, std::string id) {
  Observable o;
  o.id = std::move(id);
  o.dim = static_cast<int>(v.size());
  o.h = [v](std::span<const double> x) { return v.dot(view(x)); };
  if (o.dim == 1) {
    const double c = v(0);
    o.h_prime = [c](double) { return c; };
    o.h_second = [](double) { return 0.0; };
  }
  o.linear = v;
  return o;
}

Observable make_quadratic_observable(const Matrix& M, std::string id) {
  if (M.rows() != M.cols() || !M.isApprox(M.transpose(), 1e-14)) {
    throw DomainError("quadratic observable: M must be symmetric");
  }
  Observable o;
  o.id = std::move(id);
  o.dim = static_cast<int>(M.rows());
  o.h = [M](std::span<const double> x) {
    const auto xv = view(x);
    return xv.dot(M * xv);
  };
  if (o.dim == 1) {
    const double c = M(0, 0);
    o.h_prime = [c](double x) { return 2.0 * c * x; };
    o.h_second = [c](double) { return 2.0 * c; };
  }
  o.quadratic = M;
  return o;
}

Observable make_tanh_observable() {
  Observable o;
  o.id = "tanh";
  o.dim = 1;
  o.h = [](std::span<const double> x) { return std::tanh(x[0]); };
  o.h_prime = [](double x) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
  };
  o.h_second = [](double x) {
    const double t = std::tanh(x);
    return -2.0 * t * (1.0 - t * t);
  };
  return o;
}

Observable observable_by_id(const std::string& id, int dim) {
  if (id == "x") {
    Vector v = Vector::Zero(dim);
    v(0) = 1.0;
    return make_linear_observable(v, "x");
  }
  if (id == "x2") {
    return make_quadratic_observable(Matrix::Identity(dim, dim), "x2");
  }
  if (id == "tanh") {
    if (dim != 1) throw DomainError("observable 'tanh' is one-dimensional");
    return make_tanh_observable();
  }
  throw DomainError("unknown observable '" + id + "' (expected x, x2 or tanh)");
}

// ---------------------------------------------------------------------------
// Generator

Vector SteinSolution::gradient(const Vector& x) const {
  Vector g(dim);
  grad({x.data(), static_cast<std::size_t>(dim)}, {g.data(), static_cast<std::size_t>(dim)});
  return g;
}

Matrix SteinSolution::hessian(const Vector& x) const {
  Matrix H(dim, dim);
  hess({x.data(), static_cast<std::size_t>(dim)},
       {H.data(), static_cast<std::size_t>(dim * dim)});
  return H;
}

double apply_generator(const SteinSolution& sol, const Model& model,
                       std::span<const double> x) {
  const int d = model.dim();
  const auto ud = static_cast<std::size_t>(d);
  double g[kMaxDim], gp[kMaxDim], hs[kMaxDim * kMaxDim];
  model.drift(x, {g, ud});
  sol.grad(x, {gp, ud});
  sol.hess(x, {hs, ud * ud});
  const Matrix& a = model.sigma_sigma_t();
  double first = 0.0;
  double second = 0.0;
  for (int i = 0; i < d; ++i) {
    first += g[i] * gp[i];
    for (int j = 0; j < d; ++j) {
      second += a(i, j) * hs[i + d * j];
    }
  }
  return first + 0.5 * second;
}

double apply_generator(const SteinSolution& sol, const Model& model, const Vector& x) {
  return apply_generator(sol, model, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

// ---------------------------------------------------------------------------
// Analytic catalog

namespace {

TensorField zeros_field() {
  return [](std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
}

}  // namespace

SteinSolution stein_linear_h(const Matrix& A, const Matrix& sigma, const Vector& v) {
  const auto d = A.rows();
  if (A.cols() != d || v.size() != d || sigma.rows() != d) {
    throw DomainError("stein_linear_h: shape mismatch");
  }
  Eigen::FullPivLU<Matrix> lu(A.transpose());
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw ModelError("stein_linear_h: A is singular");
  }
  const Vector w = lu.solve(v);  // grad phi = -w
  SteinSolution s;
  s.method = "analytic-linear";
  s.dim = static_cast<int>(d);
  s.phi = [w](std::span<const double> x) { return -w.dot(view(x)); };
  s.grad = [w](std::span<const double>, std::span<double> out) { mut_view(out) = -w; };
  s.hess = zeros_field();
  s.third = zeros_field();
  s.fourth = zeros_field();
  s.polynomial_degree = 1;
  s.pi_h = 0.0;
  s.tolerance = 1e-12;
  return s;
}

SteinSolution stein_quadratic_h(const Matrix& A, const Matrix& sigma, const Matrix& M) {
  const auto d = A.rows();
  if (A.cols() != d || M.rows() != d || M.cols() != d || sigma.rows() != d) {
    throw DomainError("stein_quadratic_h: shape mismatch");
  }
  if (!(min_sym_eigenvalue(A) > 0.0)) {
    throw ModelError("stein_quadratic_h: symmetric part of A must be positive definite");
  }
  Matrix Q = solve_sylvester(A.transpose(), A, -M);
  Q = 0.5 * (Q + Q.transpose());
  const Matrix ssT = sigma * sigma.transpose();
  const Matrix twoQ = 2.0 * Q;

  SteinSolution s;
  s.method = "analytic-quadratic";
  s.dim = static_cast<int>(d);
  s.phi = [Q](std::span<const double> x) {
    const auto xv = view(x);
    return xv.dot(Q * xv);
  };
  s.grad = [twoQ](std::span<const double> x, std::span<double> out) {
    mut_view(out).noalias() = twoQ * view(x);
  };
  s.hess = [twoQ](std::span<const double>, std::span<double> out) {
    std::copy(twoQ.data(), twoQ.data() + twoQ.size(), out.begin());
  };
  s.third = zeros_field();
  s.fourth = zeros_field();
  s.polynomial_degree = 2;
  s.pi_h = -(ssT.cwiseProduct(Q)).sum();
  s.tolerance = 1e-12;
  return s;
}

// ---------------------------------------------------------------------------
// 1D quadrature solver

namespace {

struct Quadrature1D {
  Model model;
  Observable obs;
  double s2 = 1.0;  // sigma^2
  double pi = 0.0;
  double a = 0.0, b = 0.0, dx = 0.0;
  std::vector<double> x, u, phi;
  double phi_offset = 0.0;

  Quadrature1D(Model m, Observable o) : model(std::move(m)), obs(std::move(o)) {}

  double g(double t) const { return model.drift_1d(t); }
  double h(double t) const { return obs.h({&t, 1}); }

  // (2/sigma^2) * int_{x0}^{x1} g, one Simpson panel.
  double ell_increment(double x0, double x1) const {
    const double xm = 0.5 * (x0 + x1);
    return (2.0 / s2) * (x1 - x0) / 6.0 * (g(x0) + 4.0 * g(xm) + g(x1));
  }

  // u(x1) from u(x0): (p u)' = (2/sigma^2)(h - pi) p over one Simpson panel,
  // with the density ratios p(y)/p(x1) computed from half-panel increments.
  double advance(double x0, double u0, double x1) const {
    if (x0 == x1) return u0;
    const double xm = 0.5 * (x0 + x1);
    const double d0m = ell_increment(x0, xm);
    const double dm1 = ell_increment(xm, x1);
    const double w0 = std::exp(-(d0m + dm1));
    const double wm = std::exp(-dm1);
    const double integral =
        (x1 - x0) / 6.0 * ((h(x0) - pi) * w0 + 4.0 * (h(xm) - pi) * wm + (h(x1) - pi));
    return u0 * w0 + (2.0 / s2) * integral;
  }

  std::size_t nearest(double t) const {
    if (!(t >= a && t <= b)) {
      std::ostringstream os;
      os.precision(17);
      os << "quadrature Stein solution evaluated at " << t << " outside its domain [" << a
         << ", " << b << "]";
      throw DomainError(os.str());
    }
    const double r = std::round((t - a) / dx);
    return std::min(static_cast<std::size_t>(std::max(r, 0.0)), x.size() - 1);
  }

  double u_at(double t) const {
    const std::size_t j = nearest(t);
    return advance(x[j], u[j], t);
  }

  double phi_raw(double t) const {
    const std::size_t j = nearest(t);
    const double ut = advance(x[j], u[j], t);
    const double um = advance(x[j], u[j], 0.5 * (x[j] + t));
    return phi[j] + (t - x[j]) / 6.0 * (u[j] + 4.0 * um + ut);
  }

  // Derivatives u, u', u'', u''' at t by the exact ODE recursions.
  std::array<double, 4> derivs(double t, int order) const {
    std::array<double, 4> d{};
    const double gt = g(t);
    const double c = 2.0 / s2;
    d[0] = u_at(t);
    d[1] = c * (h(t) - pi) - c * gt * d[0];
    if (order >= 2) {
      const double gp = model.drift_prime_1d(t);
      d[2] = c * (*obs.h_prime)(t) - c * (gp * d[0] + gt * d[1]);
      if (order >= 3) {
        const double gpp = model.drift_second_1d(t);
        d[3] = c * (*obs.h_second)(t) - c * (gpp * d[0] + 2.0 * gp * d[1] + gt * d[2]);
      }
    }
    return d;
  }

  // Two-term asymptotic value of u where the drift dominates diffusion.
  double edge_value(double t) const {
    const double gt = g(t);
    const double r = h(t) - pi;
    const double u0 = r / gt;
    if (!model.has_jacobian() || !obs.h_prime) return u0;
    const double gp = model.drift_prime_1d(t);
    const double u0p = ((*obs.h_prime)(t) * gt - r * gp) / (gt * gt);
    return (r - 0.5 * s2 * u0p) / gt;
  }
};

double find_mode(const Model& model) {
  double lo = -100.0, hi = 100.0;
  double glo = model.drift_1d(lo), ghi = model.drift_1d(hi);
  if (!(glo > 0.0 && ghi < 0.0)) return 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gm = model.drift_1d(mid);
    if (gm > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SteinSolution stein_1d_quadrature(const Model& model, const Observable& obs,
                                  const QuadratureOptions& opts) {
  if (model.dim() != 1 || obs.dim != 1) {
    throw DomainError("stein_1d_quadrature: model and observable must be one-dimensional");
  }
  if (!obs.h_prime || !model.has_jacobian()) {
    throw DomainError("stein_1d_quadrature: need h' and the drift derivative");
  }
  if (opts.n_nodes < 1000) {
    throw DomainError("stein_1d_quadrature: n_nodes must be >= 1000");
  }
  auto q = std::make_shared<Quadrature1D>(model, obs);
  q->s2 = model.sigma()(0, 0) * model.sigma()(0, 0);

  if (opts.domain) {
    q->a = opts.domain->first;
    q->b = opts.domain->second;
  } else {
    const double mu = find_mode(model);
    const double scale = model.sigma()(0, 0) / std::sqrt(2.0 * model.K1());
    q->a = mu - 10.0 * std::abs(scale);
    q->b = mu + 10.0 * std::abs(scale);
  }
  if (!(q->a < q->b)) throw DomainError("stein_1d_quadrature: empty domain");
  if (!(q->g(q->a) > 0.0 && q->g(q->b) < 0.0)) {
    throw DomainError("stein_1d_quadrature: drift must point inward at both domain edges");
  }

  const int n = opts.n_nodes;
  q->dx = (q->b - q->a) / (n - 1);
  q->x.resize(n);
  for (int j = 0; j < n; ++j) q->x[j] = q->a + j * q->dx;
  q->x[n - 1] = q->b;

  // Log-density ell = 2G/sigma^2 at nodes and panel midpoints.
  std::vector<double> ell(n), ell_mid(n - 1);
  ell[0] = 0.0;
  for (int j = 0; j + 1 < n; ++j) {
    const double xm = 0.5 * (q->x[j] + q->x[j + 1]);
    ell_mid[j] = ell[j] + q->ell_increment(q->x[j], xm);
    ell[j + 1] = ell_mid[j] + q->ell_increment(xm, q->x[j + 1]);
  }
  const auto split =
      static_cast<std::size_t>(std::max_element(ell.begin(), ell.end()) - ell.begin());
  const double ell_max = ell[split];
  if (ell.front() - ell_max < -740.0 || ell.back() - ell_max < -740.0) {
    throw DomainError("stein_1d_quadrature: invariant density underflows at the domain edge; "
                      "shrink the domain");
  }

  CompensatedSum mass, moment;
  for (int j = 0; j + 1 < n; ++j) {
    const double xm = 0.5 * (q->x[j] + q->x[j + 1]);
    const double p0 = std::exp(ell[j] - ell_max);
    const double pm = std::exp(ell_mid[j] - ell_max);
    const double p1 = std::exp(ell[j + 1] - ell_max);
    const double w = q->dx / 6.0;
    mass += w * (p0 + 4.0 * pm + p1);
    moment += w * (q->h(q->x[j]) * p0 + 4.0 * q->h(xm) * pm + q->h(q->x[j + 1]) * p1);
  }
  q->pi = moment.value() / mass.value();

  // Sweep inward from both edges; the homogeneous part decays in each direction.
  q->u.assign(n, 0.0);
  q->u[0] = q->edge_value(q->a);
  for (std::size_t j = 0; j < split; ++j) {
    q->u[j + 1] = q->advance(q->x[j], q->u[j], q->x[j + 1]);
  }
  const double left_at_split = q->u[split];
  std::vector<double> right(n, 0.0);
  right[n - 1] = q->edge_value(q->b);
  for (std::size_t j = n - 1; j > split; --j) {
    right[j - 1] = q->advance(q->x[j], right[j], q->x[j - 1]);
  }
  for (std::size_t j = split + 1; j < static_cast<std::size_t>(n); ++j) q->u[j] = right[j];
  const double sweep_mismatch = std::abs(left_at_split - right[split]);

  q->phi.assign(n, 0.0);
  for (int j = 0; j + 1 < n; ++j) {
    const double xm = 0.5 * (q->x[j] + q->x[j + 1]);
    const double um = q->advance(q->x[j], q->u[j], xm);
    q->phi[j + 1] = q->phi[j] + q->dx / 6.0 * (q->u[j] + 4.0 * um + q->u[j + 1]);
  }
  q->phi_offset = q->phi_raw(0.5 * (q->a + q->b));

  // Residual with u' from a five-point difference on the trusted nodes.
  const double half = 0.5 * opts.trusted_fraction * (q->b - q->a);
  const double centre = 0.5 * (q->a + q->b);
  const std::pair<double, double> trusted{centre - half, centre + half};
  double worst = sweep_mismatch;
  double worst_x = q->x[split];
  for (int j = 2; j + 2 < n; ++j) {
    if (q->x[j] < trusted.first || q->x[j] > trusted.second) continue;
    const double du =
        (-q->u[j + 2] + 8.0 * q->u[j + 1] - 8.0 * q->u[j - 1] + q->u[j - 2]) / (12.0 * q->dx);
    const double r =
        std::abs(0.5 * q->s2 * du + q->g(q->x[j]) * q->u[j] - (q->h(q->x[j]) - q->pi));
    if (r > worst) {
      worst = r;
      worst_x = q->x[j];
    }
  }
  if (!(worst <= opts.tolerance)) {
    std::ostringstream os;
    os << "stein_1d_quadrature: residual " << worst << " exceeds tolerance "
       << opts.tolerance << " at x = " << worst_x;
    throw CertificationError(os.str(), worst_x, worst);
  }

  SteinSolution s;
  s.method = "quadrature-1d";
  s.dim = 1;
  s.phi = [q](std::span<const double> t) { return q->phi_raw(t[0]) - q->phi_offset; };
  s.grad = [q](std::span<const double> t, std::span<double> out) { out[0] = q->u_at(t[0]); };
  s.hess = [q](std::span<const double> t, std::span<double> out) {
    out[0] = q->derivs(t[0], 1)[1];
  };
  s.third = [q](std::span<const double> t, std::span<double> out) {
    out[0] = q->derivs(t[0], 2)[2];
  };
  if (model.has_drift_second_1d() && obs.h_second) {
    s.fourth = [q](std::span<const double> t, std::span<double> out) {
      out[0] = q->derivs(t[0], 3)[3];
    };
  }
  s.pi_h = q->pi;
  s.tolerance = opts.tolerance;
  s.construction_residual = worst;
  s.trusted = trusted;
  return s;
}

// ---------------------------------------------------------------------------
// Certification

namespace {

double fd_generator_1d(const SteinSolution& sol, const Model& model, double x) {
  constexpr double kStep = 1e-3;
  auto u = [&](double t) {
    double out = 0.0;
    sol.grad(std::span<const double>(&t, 1), std::span<double>(&out, 1));
    return out;
  };
  const double d2 = (-u(x + 2 * kStep) + 8 * u(x + kStep) - 8 * u(x - kStep) + u(x - 2 * kStep)) /
                    (12 * kStep);
  const double s = model.sigma()(0, 0);
  return model.drift_1d(x) * u(x) + 0.5 * s * s * d2;
}

}  // namespace

CertReport certify(SteinSolution& sol, const Model& model, const Observable& obs,
                   const std::vector<Vector>& grid, double tol) {
  if (grid.empty()) throw DomainError("certify: empty grid");
  const int d = sol.dim;
  const auto ud = static_cast<std::size_t>(d);
  CertReport rep;
  rep.tolerance = tol;
  rep.derivative_bounds.fill(0.0);
  std::vector<double> buf(ud * ud * ud * ud);
  const bool numeric_1d = d == 1 && sol.polynomial_degree < 0;
  for (const Vector& x : grid) {
    const std::span<const double> xs{x.data(), ud};
    double r = std::abs(apply_generator(sol, model, xs) - (obs.h(xs) - sol.pi_h));
    if (numeric_1d) {
      // phi'' from the recursion satisfies the equation by construction, so
      // also test phi' against it with a difference quotient for phi''.
      const double fd = fd_generator_1d(sol, model, x[0]) - (obs.h(xs) - sol.pi_h);
      rep.fd_residual_sup = std::max(rep.fd_residual_sup, std::abs(fd));
      r = std::max(r, std::abs(fd));
    }
    if (!(r <= rep.residual_sup)) {
      rep.residual_sup = r;
      rep.worst_point.assign(x.data(), x.data() + d);
    }
    auto& db = rep.derivative_bounds;
    db[0] = std::max(db[0], std::abs(sol.phi(xs)));
    const TensorField* fields[4] = {&sol.grad, &sol.hess, &sol.third, &sol.fourth};
    std::size_t len = ud;
    for (int k = 0; k < 4; ++k, len *= ud) {
      if (!*fields[k]) {
        db[k + 1] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      (*fields[k])(xs, {buf.data(), len});
      double sq = 0.0;
      for (std::size_t i = 0; i < len; ++i) sq += buf[i] * buf[i];
      db[k + 1] = std::max(db[k + 1], std::sqrt(sq));
    }
  }
  rep.passed = rep.residual_sup <= tol;
  sol.residual_sup = rep.residual_sup;
  sol.derivative_bounds = rep.derivative_bounds;
  return rep;
}

void require_certified(const CertReport& report) {
  if (report.passed) return;
  std::ostringstream os;
  os << "Stein solution failed certification: residual " << report.residual_sup
     << " > tolerance " << report.tolerance;
  const double wx = report.worst_point.empty() ? 0.0 : report.worst_point.front();
  throw CertificationError(os.str(), wx, report.residual_sup);
}

std::vector<Vector> certification_grid(const SteinSolution& sol, int n, double half_width) {
  if (n < 1) throw DomainError("certification_grid: need n >= 1");
  std::vector<Vector> grid;
  if (sol.dim == 1) {
    double lo = -half_width, hi = half_width;
    if (sol.trusted) {
      lo = std::max(lo, sol.trusted->first);
      hi = std::min(hi, sol.trusted->second);
    }
    for (int i = 0; i < n; ++i) {
      const double t = n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n - 1);
      grid.push_back(Vector::Constant(1, t));
    }
    return grid;
  }
  const CounterRng rng(0x5EED, static_cast<std::uint32_t>(Stream::kDiagnostics));
  grid.push_back(Vector::Zero(sol.dim));
  for (int i = 1; i < n; ++i) {
    Vector p(sol.dim);
    for (int k = 0; k < sol.dim; ++k) {
      p(k) = half_width * (2.0 * rng.uniform(static_cast<std::uint64_t>(i), 7u,
                                             static_cast<std::uint32_t>(k)) -
                           1.0);
    }
    grid.push_back(std::move(p));
  }
  return grid;
}

SteinSolution solve_stein(const Model& model, const Observable& obs,
                          const QuadratureOptions& opts) {
  if (obs.dim != model.dim()) {
    throw DomainError("solve_stein: observable dimension does not match the model");
  }
  const auto& facts = model.analytic();
  if (facts && facts->linear_drift_matrix) {
    if (obs.linear) return stein_linear_h(*facts->linear_drift_matrix, model.sigma(), *obs.linear);
    if (obs.quadratic) {
      return stein_quadratic_h(*facts->linear_drift_matrix, model.sigma(), *obs.quadratic);
    }
  }
  if (model.dim() == 1) return stein_1d_quadrature(model, obs, opts);
  throw DomainError("solve_stein: no solver for observable '" + obs.id + "' on model '" +
                    model.id() + "' (d > 1 needs a linear drift and polynomial h)");
}

}  // namespace mdev
