#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hcm {

using RealVector = std::vector<double>;

// Square sparse matrix in compressed-row layout with sorted column indices.
struct CsrMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col;
  std::vector<double> val;

  std::size_t nnz() const noexcept { return val.size(); }
  double at(std::size_t i, std::size_t j) const;  // 0 when not stored
  RealVector diagonal() const;
  void multiply(std::span<const double> x, std::span<double> y) const;
  RealVector operator*(std::span<const double> x) const;
};

// Accumulates (i, j, v) entries; duplicates are summed in insertion order.
class TripletBuilder {
public:
  explicit TripletBuilder(std::size_t n) : n_(n) {}
  void add(std::size_t i, std::size_t j, double v);
  CsrMatrix build() const;

private:
  struct Entry {
    std::uint32_t i, j;
    double v;
  };
  std::size_t n_;
  std::vector<Entry> entries_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

enum class Preconditioner { None, Jacobi };

struct CgOptions {
  double tol = 1e-10;            // relative residual ||b - Ax|| / ||b||
  std::size_t max_iterations = 0;  // 0 -> 20 * sqrt(n), at least 100
  Preconditioner precond = Preconditioner::Jacobi;
};

struct CgResult {
  RealVector x;
  std::size_t iterations = 0;
  double residual = 0.0;  // achieved relative residual (true residual)
  std::vector<double> history;  // relative recursive residual per iteration
  // True residual stalled above tol at the double-precision floor
  // 64 eps || |A||x| + |b| || / ||b||; accepted with a warning.
  bool rounding_limited = false;
};

// Throws SolverError(NonConvergence) with the residual history when maxit is
// reached, SolverError(NotSpd) on a non-positive curvature p^T A p.
CgResult cg_solve(const CsrMatrix& a, std::span<const double> b, const CgOptions& opts = {},
                  std::span<const double> x0 = {});

struct MeanZeroResult {
  RealVector x;
  double defect = 0.0;  // norm of the constant-mode component removed from b
  std::size_t iterations = 0;
};

// Solves A x = P b with w^T x = 0 for a positive semidefinite A whose null
// space is spanned by the constant vector. P removes the constant component
// of b. A warning is logged when defect > warn_threshold * ||b||.
MeanZeroResult solve_mean_zero(const CsrMatrix& a, std::span<const double> b, std::span<const double> w,
                               const CgOptions& opts = {}, double warn_threshold = 1e-6);

struct SpdReport {
  bool symmetric = false;
  double asymmetry = 0.0;  // max |A_ij - A_ji| / max |A_ij|
  double min_diagonal = 0.0;
  std::optional<double> min_eigenvalue;  // inverse power iteration estimate
};

SpdReport spd_check(const CsrMatrix& a, bool estimate_eigenvalue = true, double symmetry_tol = 1e-12);

// Dense symmetric positive definite system with a cached Cholesky factor.
class DenseSpdSystem {
public:
  explicit DenseSpdSystem(Eigen::MatrixXd a);
  const Eigen::MatrixXd& matrix() const noexcept { return a_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(a_.rows()); }
  RealVector solve(std::span<const double> b) const;
  double asymmetry() const;
  double min_eigenvalue() const;

private:
  Eigen::MatrixXd a_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

void write_matrix_market(const CsrMatrix& a, const std::string& path);

}  // namespace hcm
