#pragma once

// Block LOBPCG for the lowest eigenpairs of A x = lambda M x, A and M sparse
// symmetric, M positive definite. The basis [X, W, P] is M-orthonormalized by
// SVQB so near-dependent directions are dropped instead of breaking Cholesky.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>

#include "errors.hpp"
#include "numerics.hpp"

namespace qlayer {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Y = S X, rows split over threads.
inline Eigen::MatrixXd spmm(const SparseMatrix& S, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Y(S.rows(), X.cols());
  const std::size_t rows = static_cast<std::size_t>(S.rows());
  const std::size_t chunk = 2048;
  parallel_for((rows + chunk - 1) / chunk, [&](std::size_t c) {
    const Eigen::Index lo = static_cast<Eigen::Index>(c * chunk);
    const Eigen::Index hi = std::min<Eigen::Index>(S.rows(), lo + chunk);
    for (Eigen::Index i = lo; i < hi; ++i) {
      Y.row(i).setZero();
      for (SparseMatrix::InnerIterator it(S, i); it; ++it) Y.row(i) += it.value() * X.row(it.col());
    }
  });
  return Y;
}

enum class Preconditioner { none, diagonal, shifted_factorization };

inline const char* to_string(Preconditioner p) {
  switch (p) {
    case Preconditioner::none: return "none";
    case Preconditioner::diagonal: return "diagonal";
    case Preconditioner::shifted_factorization: return "shifted_factorization";
  }
  return "?";
}

struct EigenOptions {
  int count = 1;   // eigenpairs wanted
  int block = 4;   // block size, >= count
  double tol = 1e-8;
  int max_iter = 2000;
  Preconditioner preconditioner = Preconditioner::shifted_factorization;
  std::uint64_t seed = 20240611;
};

struct EigenResult {
  Eigen::VectorXd values;   // ascending, `count` entries
  Eigen::MatrixXd vectors;  // M-orthonormal columns
  Eigen::VectorXd residuals;
  int iterations = 0;
  double shift = 0.0;       // shift of the factorized preconditioner
};

namespace detail {

/// M-orthonormal basis of span(S) via the eigen-decomposition of S' M S.
/// Directions with relative Gram eigenvalue below `drop` are discarded.
inline Eigen::MatrixXd svqb(const Eigen::MatrixXd& S, const Eigen::MatrixXd& MS, double drop = 1e-12) {
  Eigen::MatrixXd G = S.transpose() * MS;
  G = 0.5 * (G + G.transpose());
  Eigen::VectorXd d = G.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd Gs = d.asDiagonal() * G * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Gs);
  const double top = es.eigenvalues().maxCoeff();
  std::vector<int> keep;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) > drop * top) keep.push_back(i);
  Eigen::MatrixXd C(S.cols(), keep.size());
  for (std::size_t j = 0; j < keep.size(); ++j)
    C.col(j) = d.asDiagonal() * es.eigenvectors().col(keep[j]) / std::sqrt(es.eigenvalues()(keep[j]));
  return C;
}

using Factorization = Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>;

/// Number of eigenvalues of A x = lambda M x below sigma (Sylvester inertia
/// of A - sigma M). `f` must have analyzed the pattern of A - sigma M.
inline int count_below(const Eigen::SparseMatrix<double>& A, const Eigen::SparseMatrix<double>& M, double sigma,
                       Factorization& f) {
  f.factorize(A - sigma * M);
  if (f.info() != Eigen::Success) return -1;
  return static_cast<int>((f.vectorD().array() < 0).count());
}

}  // namespace detail

/// Lowest eigenpairs. With the shifted factorization the preconditioner is
/// (A - sigma M)^{-1}; sigma is found by an inertia ladder below a Ritz
/// estimate so the factored matrix stays positive definite.
inline EigenResult smallest_eigenpairs(const SparseMatrix& A, const SparseMatrix& M, const EigenOptions& opt = {}) {
  const Eigen::Index n = A.rows();
  if (opt.count < 1 || !(opt.tol > 0)) throw std::invalid_argument("smallest_eigenpairs: need count >= 1, tol > 0");
  const int k = std::min<Eigen::Index>(std::max(opt.block, opt.count), n);
  Eigen::MatrixXd X(n, k);
  {
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) X(i, j) = U(rng);
    X.col(0).setConstant(1.0);
  }

  Eigen::VectorXd diag_inv = A.diagonal().cwiseMax(1e-300).cwiseInverse();
  std::unique_ptr<detail::Factorization> factor;
  Eigen::SparseMatrix<double> Ac, Mc;
  double shift = 0.0;
  if (opt.preconditioner == Preconditioner::shifted_factorization) {
    Ac = A;
    Mc = M;
    factor = std::make_unique<detail::Factorization>();
    factor->analyzePattern(Ac - 0.0 * Mc);
    factor->factorize(Ac - 0.0 * Mc);
    if (factor->info() != Eigen::Success) throw ConsistencyError("stiffness matrix factorization failed");
  }
  auto precondition = [&](const Eigen::MatrixXd& R) -> Eigen::MatrixXd {
    switch (opt.preconditioner) {
      case Preconditioner::none: return R;
      case Preconditioner::diagonal: return diag_inv.asDiagonal() * R;
      case Preconditioner::shifted_factorization: {
        Eigen::MatrixXd W(R.rows(), R.cols());
        for (Eigen::Index j = 0; j < R.cols(); ++j) W.col(j) = factor->solve(R.col(j));
        return W;
      }
    }
    return R;
  };

  Eigen::MatrixXd AX, MX, P, AP, MP;
  {
    const Eigen::MatrixXd MX0 = spmm(M, X);
    const Eigen::MatrixXd C = detail::svqb(X, MX0);
    X = X * C;
  }
  AX = spmm(A, X);
  MX = spmm(M, X);
  Eigen::VectorXd theta;
  {
    Eigen::MatrixXd H = X.transpose() * AX;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
    theta = es.eigenvalues();
    X = X * es.eigenvectors();
    AX = AX * es.eigenvectors();
    MX = MX * es.eigenvectors();
  }

  EigenResult out;
  double best = std::numeric_limits<double>::infinity();
  bool reshifted = opt.preconditioner != Preconditioner::shifted_factorization;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const Eigen::MatrixXd R = AX - MX * theta.asDiagonal();
    Eigen::VectorXd res(k);
    for (int j = 0; j < k; ++j) {
      const double scale = AX.col(j).norm() + std::abs(theta(j)) * MX.col(j).norm();
      res(j) = R.col(j).norm() / std::max(scale, 1e-300);
    }
    const double worst = res.head(opt.count).maxCoeff();
    best = std::min(best, worst);
    out.iterations = it;
    if (worst < opt.tol) {
      out.values = theta.head(opt.count);
      out.vectors = X.leftCols(opt.count);
      out.residuals = res.head(opt.count);
      out.shift = shift;
      return out;
    }
    // Once the lowest Ritz value has settled, walk the shift up toward it;
    // the inertia count keeps the factored matrix positive definite.
    if (!reshifted && res(0) < 1e-3 && theta(0) > 0) {
      reshifted = true;
      // Closest rung first: usually one factorization settles it.
      for (double rel : {1e-4, 1e-3, 1e-2, 0.1, 0.3}) {
        const double s = theta(0) * (1 - rel);
        if (detail::count_below(Ac, Mc, s, *factor) == 0) {
          shift = s;
          break;
        }
      }
      if (shift == 0.0) factor->factorize(Ac - 0.0 * Mc);
    }

    Eigen::MatrixXd W = precondition(R);
    Eigen::MatrixXd AW = spmm(A, W), MW = spmm(M, W);
    const bool hasP = P.cols() > 0;
    const Eigen::Index cols = k + W.cols() + (hasP ? P.cols() : 0);
    Eigen::MatrixXd S(n, cols), AS(n, cols), MS(n, cols);
    S << X, W, (hasP ? P : Eigen::MatrixXd(n, 0));
    AS << AX, AW, (hasP ? AP : Eigen::MatrixXd(n, 0));
    MS << MX, MW, (hasP ? MP : Eigen::MatrixXd(n, 0));
    const Eigen::MatrixXd C = detail::svqb(S, MS);
    if (C.cols() < k) throw ConvergenceError("LOBPCG basis collapsed", best);
    Eigen::MatrixXd H = C.transpose() * (S.transpose() * AS) * C;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
    const Eigen::MatrixXd Y = C * es.eigenvectors().leftCols(k);
    theta = es.eigenvalues().head(k);
    // P: the new iterate's component outside the old X block.
    Eigen::MatrixXd Yp = Y;
    Yp.topRows(k).setZero();
    P = S * Yp;
    AP = AS * Yp;
    MP = MS * Yp;
    X = S * Y;
    AX = AS * Y;
    MX = MS * Y;
  }
  throw ConvergenceError("LOBPCG did not reach tol " + std::to_string(opt.tol) + " in " +
                             std::to_string(opt.max_iter) + " iterations",
                         best);
}

}  // namespace qlayer
