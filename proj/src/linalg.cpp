#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "error.hpp"
#include "log.hpp"

namespace hcm {

double CsrMatrix::at(std::size_t i, std::size_t j) const {
  const auto first = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
  const auto last = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
  const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(j));
  return (it != last && *it == j) ? val[static_cast<std::size_t>(it - col.begin())] : 0.0;
}

RealVector CsrMatrix::diagonal() const {
  RealVector d(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) d[i] = at(i, i);
  return d;
}

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[col[k]];
    y[i] = s;
  }
}

RealVector CsrMatrix::operator*(std::span<const double> x) const {
  RealVector y(n);
  multiply(x, y);
  return y;
}

void TripletBuilder::add(std::size_t i, std::size_t j, double v) {
  entries_.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), v});
}

CsrMatrix TripletBuilder::build() const {
  std::vector<std::size_t> order(entries_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = entries_[a];
    const auto& eb = entries_[b];
    return ea.i != eb.i ? ea.i < eb.i : ea.j < eb.j;
  });
  CsrMatrix m;
  m.n = n_;
  m.row_ptr.assign(n_ + 1, 0);
  for (std::size_t k = 0; k < order.size();) {
    const auto& e = entries_[order[k]];
    double sum = 0.0;
    std::size_t l = k;
    for (; l < order.size() && entries_[order[l]].i == e.i && entries_[order[l]].j == e.j; ++l)
      sum += entries_[order[l]].v;
    m.col.push_back(e.j);
    m.val.push_back(sum);
    ++m.row_ptr[e.i + 1];
    k = l;
  }
  for (std::size_t i = 0; i < n_; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(ErrorCode::Internal, std::string("non-finite value encountered in ") + what);
}

}  // namespace

CgResult cg_solve(const CsrMatrix& a, std::span<const double> b, const CgOptions& opts, std::span<const double> x0) {
  const std::size_t n = a.n;
  if (b.size() != n) throw Error(ErrorCode::InvalidArgument, "cg_solve: right-hand side has wrong length");
  if (!(opts.tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "cg_solve: tolerance must be positive");
  check_finite(b, "cg_solve right-hand side");

  const std::size_t maxit = opts.max_iterations != 0
                                ? opts.max_iterations
                                : std::max<std::size_t>(100, static_cast<std::size_t>(20.0 * std::sqrt(static_cast<double>(n))));
  CgResult res;
  res.x.assign(n, 0.0);
  if (!x0.empty()) std::copy(x0.begin(), x0.end(), res.x.begin());
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    std::fill(res.x.begin(), res.x.end(), 0.0);
    return res;
  }

  RealVector inv_diag(n, 1.0);
  if (opts.precond == Preconditioner::Jacobi) {
    const RealVector d = a.diagonal();
    for (std::size_t i = 0; i < n; ++i) {
      if (!(d[i] > 0.0))
        throw SolverError(ErrorCode::NotSpd, "cg_solve: non-positive diagonal entry at row " + std::to_string(i), {});
      inv_diag[i] = 1.0 / d[i];
    }
  }

  RealVector r(n), z(n), p(n), ap(n);
  // A few restarts guard against drift between the recursive and true residuals.
  for (int restart = 0; restart < 4; ++restart) {
    a.multiply(res.x, ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
    double rel = norm2(r) / bnorm;
    if (rel <= opts.tol) {
      res.residual = rel;
      return res;
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    p = z;
    double rz = dot(r, z);
    while (res.iterations < maxit) {
      a.multiply(p, ap);
      const double pap = dot(p, ap);
      if (!std::isfinite(pap)) throw Error(ErrorCode::Internal, "non-finite value encountered in cg_solve");
      if (pap <= 0.0)
        throw SolverError(ErrorCode::NotSpd, "cg_solve: matrix is not positive definite (p^T A p = " +
                                                 std::to_string(pap) + ")", res.history);
      const double alpha = rz / pap;
      for (std::size_t i = 0; i < n; ++i) {
        res.x[i] += alpha * p[i];
        r[i] -= alpha * ap[i];
      }
      ++res.iterations;
      rel = norm2(r) / bnorm;
      res.history.push_back(rel);
      if (!std::isfinite(rel)) throw Error(ErrorCode::Internal, "non-finite residual in cg_solve");
      if (rel <= opts.tol) break;
      for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
      const double rz_new = dot(r, z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    a.multiply(res.x, ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
    res.residual = norm2(r) / bnorm;
    if (res.residual <= opts.tol) return res;
    if (res.iterations >= maxit) break;
  }
  // High-contrast rows put a rounding floor under the unscaled residual; a
  // solve that stalls at that floor is as accurate as double precision allows.
  double floor = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = std::abs(b[i]);
    for (std::size_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) s += std::abs(a.val[k] * res.x[a.col[k]]);
    floor += s * s;
  }
  floor = 64.0 * std::numeric_limits<double>::epsilon() * std::sqrt(floor) / bnorm;
  if (res.residual <= std::max(floor, opts.tol) && res.iterations < maxit) {
    res.rounding_limited = true;
    char note[160];
    std::snprintf(note, sizeof note, "cg_solve: residual %.3e limited by rounding (floor %.3e, tol %.1e)", res.residual,
                  floor, opts.tol);
    log::warn(note);
    return res;
  }
  char msg[160];
  std::snprintf(msg, sizeof msg, "cg_solve: no convergence after %zu iterations (relative residual %.3e, tol %.1e)",
                res.iterations, res.residual, opts.tol);
  throw SolverError(ErrorCode::NonConvergence, msg, res.history);
}

MeanZeroResult solve_mean_zero(const CsrMatrix& a, std::span<const double> b, std::span<const double> w,
                               const CgOptions& opts, double warn_threshold) {
  const std::size_t n = a.n;
  if (b.size() != n || w.size() != n) throw Error(ErrorCode::InvalidArgument, "solve_mean_zero: size mismatch");
  double wsum = 0.0;
  for (double wi : w) {
    if (!(wi > 0.0)) throw Error(ErrorCode::InvalidArgument, "solve_mean_zero: weights must be strictly positive");
    wsum += wi;
  }
  MeanZeroResult out;
  RealVector pb(b.begin(), b.end());
  double bsum = 0.0;
  for (double v : pb) bsum += v;
  const double mean = bsum / static_cast<double>(n);
  for (double& v : pb) v -= mean;
  out.defect = std::abs(bsum) / std::sqrt(static_cast<double>(n));
  const double bnorm = norm2(b);
  if (out.defect > warn_threshold * bnorm) {
    char msg[160];
    std::snprintf(msg, sizeof msg, "Neumann compatibility defect %.3e (%.3e relative) projected out", out.defect,
                  bnorm > 0.0 ? out.defect / bnorm : 0.0);
    log::warn(msg);
  }

  // The projected right-hand side can be pure round-off; treat it as zero then.
  if (norm2(pb) <= 1e-14 * std::max(bnorm, 1e-300)) {
    out.x.assign(n, 0.0);
    return out;
  }
  auto cg = cg_solve(a, pb, opts);
  out.iterations = cg.iterations;
  out.x = std::move(cg.x);
  const double shift = dot(w, out.x) / wsum;
  for (double& v : out.x) v -= shift;
  return out;
}

SpdReport spd_check(const CsrMatrix& a, bool estimate_eigenvalue, double symmetry_tol) {
  SpdReport rep;
  double maxabs = 0.0, maxdiff = 0.0;
  rep.min_diagonal = INFINITY;
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
      maxabs = std::max(maxabs, std::abs(a.val[k]));
      maxdiff = std::max(maxdiff, std::abs(a.val[k] - a.at(a.col[k], i)));
      if (a.col[k] == i) rep.min_diagonal = std::min(rep.min_diagonal, a.val[k]);
    }
  for (std::size_t i = 0; i < a.n; ++i)
    if (a.at(i, i) == 0.0) rep.min_diagonal = std::min(rep.min_diagonal, 0.0);
  rep.asymmetry = maxabs > 0.0 ? maxdiff / maxabs : 0.0;
  rep.symmetric = rep.asymmetry <= symmetry_tol;
  if (!estimate_eigenvalue || a.n == 0 || !rep.symmetric || !(rep.min_diagonal > 0.0)) return rep;

  // Inverse power iteration; the Rayleigh quotient converges to the smallest eigenvalue.
  RealVector x(a.n);
  for (std::size_t i = 0; i < a.n; ++i) x[i] = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(i));
  double lambda = 0.0;
  try {
    for (int it = 0; it < 200; ++it) {
      const double xn = norm2(x);
      for (double& v : x) v /= xn;
      CgOptions o;
      o.tol = 1e-12;
      o.max_iterations = 10 * a.n + 100;
      auto y = cg_solve(a, x, o).x;
      const RealVector ay = a * y;
      const double next = dot(y, ay) / dot(y, y);
      x = std::move(y);
      if (it > 0 && std::abs(next - lambda) <= 1e-12 * std::abs(next)) {
        lambda = next;
        break;
      }
      lambda = next;
    }
    rep.min_eigenvalue = lambda;
  } catch (const Error&) {
    rep.min_eigenvalue = std::nullopt;
  }
  return rep;
}

DenseSpdSystem::DenseSpdSystem(Eigen::MatrixXd a) : a_(std::move(a)) {
  if (a_.rows() != a_.cols()) throw Error(ErrorCode::InvalidArgument, "dense system must be square");
  if (a_.rows() == 0) return;
  llt_.compute(a_);
  if (llt_.info() != Eigen::Success)
    throw Error(ErrorCode::Singular, "coupling matrix is not positive definite (degenerate geometry or basis)");
  // LLT only reads the lower triangle; reject matrices it silently accepts but
  // which are numerically singular.
  const auto& l = llt_.matrixLLT();
  const double dmax = l.diagonal().cwiseAbs().maxCoeff();
  const double dmin = l.diagonal().cwiseAbs().minCoeff();
  if (!(dmin > 1e-8 * dmax))
    throw Error(ErrorCode::Singular, "coupling matrix is numerically singular (degenerate geometry or basis)");
}

RealVector DenseSpdSystem::solve(std::span<const double> b) const {
  if (b.size() != size()) throw Error(ErrorCode::InvalidArgument, "dense solve: size mismatch");
  if (size() == 0) return {};
  Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  Eigen::VectorXd x = llt_.solve(rhs);
  return RealVector(x.data(), x.data() + x.size());
}

double DenseSpdSystem::asymmetry() const {
  if (size() == 0) return 0.0;
  const double scale = a_.cwiseAbs().maxCoeff();
  return scale > 0.0 ? (a_ - a_.transpose()).cwiseAbs().maxCoeff() / scale : 0.0;
}

double DenseSpdSystem::min_eigenvalue() const {
  if (size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a_, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void write_matrix_market(const CsrMatrix& a, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  std::fprintf(f, "%%%%MatrixMarket matrix coordinate real general\n%zu %zu %zu\n", a.n, a.n, a.nnz());
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
      std::fprintf(f, "%zu %u %.17g\n", i + 1, a.col[k] + 1, a.val[k]);
  if (std::fclose(f) != 0) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

}  // namespace hcm
