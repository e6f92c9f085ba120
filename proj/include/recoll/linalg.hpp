#ifndef RECOLL_LINALG_HPP
#define RECOLL_LINALG_HPP

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace recoll {

struct OverdeterminedSolution {
    Eigen::VectorXd x;
    /// Right-hand side left in the rows that elimination reduced to "0 = 0".
    Eigen::VectorXd redundant;
    /// Smallest pivot used, as a conditioning indicator.
    double min_pivot = 0.0;
};

/// Solves A x = b for an m x n system with m >= n whose rank is n, by
/// Gaussian elimination with complete (row and column) pivoting. The m - n
/// rows eliminated last are the redundant equations; their reduced right-hand
/// sides are returned so the caller can check consistency.
inline OverdeterminedSolution solve_full_pivot(Eigen::MatrixXd A, Eigen::VectorXd b) {
    const Eigen::Index m = A.rows(), n = A.cols();
    if (m < n) throw std::invalid_argument("solve_full_pivot needs at least as many rows as columns");
    if (b.size() != m) throw std::invalid_argument("right-hand side size mismatch");
    std::vector<Eigen::Index> colperm(static_cast<std::size_t>(n));
    std::iota(colperm.begin(), colperm.end(), Eigen::Index{0});

    double min_pivot = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::Index pr = 0, pc = 0;
        const double piv = A.bottomRightCorner(m - k, n - k).cwiseAbs().maxCoeff(&pr, &pc);
        pr += k;
        pc += k;
        if (!(piv > 0.0)) throw std::runtime_error("singular system in full-pivot elimination");
        min_pivot = std::min(min_pivot, piv);
        if (pr != k) {
            A.row(k).swap(A.row(pr));
            std::swap(b[k], b[pr]);
        }
        if (pc != k) {
            A.col(k).swap(A.col(pc));
            std::swap(colperm[static_cast<std::size_t>(k)], colperm[static_cast<std::size_t>(pc)]);
        }
        const double inv = 1.0 / A(k, k);
        if (k + 1 < m) {
            Eigen::VectorXd factors = A.col(k).tail(m - k - 1) * inv;
            A.bottomRightCorner(m - k - 1, n - k - 1).noalias() -=
                factors * A.row(k).tail(n - k - 1);
            A.col(k).tail(m - k - 1).setZero();
            b.tail(m - k - 1) -= factors * b[k];
        }
    }
    Eigen::VectorXd y(n);
    for (Eigen::Index k = n - 1; k >= 0; --k) {
        double s = b[k];
        if (k + 1 < n) s -= A.row(k).tail(n - k - 1).dot(y.tail(n - k - 1));
        y[k] = s / A(k, k);
    }
    OverdeterminedSolution out;
    out.x.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) out.x[colperm[static_cast<std::size_t>(k)]] = y[k];
    out.redundant = b.tail(m - n);
    out.min_pivot = min_pivot;
    return out;
}

}  // namespace recoll

#endif  // RECOLL_LINALG_HPP
