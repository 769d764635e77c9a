#pragma once

// Symmetric positive-definite Toeplitz systems: Levinson recursion with
// iterative refinement, falling back to a dense Cholesky factorization.

#include <cmath>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "common.hpp"

namespace mightloc::linalg {

/// Levinson recursion for T x = b, T = toeplitz(r). Returns false if a
/// reflection step breaks down (matrix not numerically positive definite).
inline bool levinson(std::span<const double> r, std::span<const double> b, std::vector<double>& x) {
    const std::size_t n = r.size();
    x.assign(n, 0.0);
    if (n == 0) return true;
    if (!(r[0] > 0.0)) return false;
    // Work with the unit-diagonal matrix r / r0.
    const double r0 = r[0];
    std::vector<double> y(n, 0.0), z(n, 0.0), v(n, 0.0);
    x[0] = b[0] / r0;
    if (n == 1) return true;
    double beta = 1.0;
    double alpha = -r[1] / r0;
    y[0] = alpha;
    for (std::size_t k = 1; k < n; ++k) {
        beta *= (1.0 - alpha * alpha);
        if (!(beta > 0.0) || !std::isfinite(beta)) return false;
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) acc += r[i + 1] * x[k - 1 - i];
        const double mu = (b[k] / r0 - acc / r0) / beta;
        for (std::size_t i = 0; i < k; ++i) v[i] = x[i] + mu * y[k - 1 - i];
        for (std::size_t i = 0; i < k; ++i) x[i] = v[i];
        x[k] = mu;
        if (k < n - 1) {
            acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += r[i + 1] * y[k - 1 - i];
            alpha = (-r[k + 1] / r0 - acc / r0) / beta;
            for (std::size_t i = 0; i < k; ++i) z[i] = y[i] + alpha * y[k - 1 - i];
            for (std::size_t i = 0; i < k; ++i) y[i] = z[i];
            y[k] = alpha;
        }
    }
    for (double xi : x)
        if (!std::isfinite(xi)) return false;
    return true;
}

struct SolveReport {
    double relative_residual = 0.0;
    int refinements = 0;
    bool dense_fallback = false;
};

class SymmetricToeplitz {
public:
    SymmetricToeplitz() = default;

    /// `column` holds the first column; trailing zeros are exploited in products.
    explicit SymmetricToeplitz(std::vector<double> column) : col_(std::move(column)) {
        band_ = col_.size();
        while (band_ > 1 && col_[band_ - 1] == 0.0) --band_;
    }

    std::size_t size() const noexcept { return col_.size(); }
    const std::vector<double>& column() const noexcept { return col_; }

    std::vector<double> multiply(std::span<const double> x) const {
        const std::size_t n = col_.size();
        std::vector<double> out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t lo = i + 1 > band_ ? i + 1 - band_ : 0;
            const std::size_t hi = std::min(n - 1, i + band_ - 1);
            double acc = 0.0;
            for (std::size_t j = lo; j <= hi; ++j) acc += col_[i > j ? i - j : j - i] * x[j];
            out[i] = acc;
        }
        return out;
    }

    double relative_residual(std::span<const double> x, std::span<const double> b) const {
        const auto tx = multiply(x);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < b.size(); ++i) {
            num += (tx[i] - b[i]) * (tx[i] - b[i]);
            den += b[i] * b[i];
        }
        return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    }

    /// Solves T x = b. Levinson plus up to `max_refine` refinement sweeps; if the
    /// relative residual still exceeds `tol`, a dense Cholesky solve is used.
    std::vector<double> solve(std::span<const double> b, SolveReport* report = nullptr, double tol = 1e-11,
                              int max_refine = 4) const {
        if (b.size() != col_.size()) throw SolverError("Toeplitz solve: size mismatch");
        SolveReport rep;
        std::vector<double> x;
        bool ok = levinson(col_, b, x);
        if (ok) {
            rep.relative_residual = relative_residual(x, b);
            std::vector<double> resid(b.size()), dx;
            while (rep.relative_residual > tol && rep.refinements < max_refine) {
                const auto tx = multiply(x);
                for (std::size_t i = 0; i < b.size(); ++i) resid[i] = b[i] - tx[i];
                if (!levinson(col_, resid, dx)) break;
                std::vector<double> candidate = x;
                for (std::size_t i = 0; i < x.size(); ++i) candidate[i] += dx[i];
                const double r = relative_residual(candidate, b);
                ++rep.refinements;
                if (!(r < rep.relative_residual)) break;
                x = std::move(candidate);
                rep.relative_residual = r;
            }
            ok = rep.relative_residual <= tol;
        }
        if (!ok) {
            x = dense_solve(b);
            rep.dense_fallback = true;
            rep.relative_residual = relative_residual(x, b);
        }
        if (report) *report = rep;
        return x;
    }

private:
    std::vector<double> dense_solve(std::span<const double> b) const {
        std::call_once(*chol_once_, [this] {
            const auto n = static_cast<Eigen::Index>(col_.size());
            Eigen::MatrixXd m(n, n);
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < n; ++j) m(i, j) = col_[static_cast<std::size_t>(std::abs(i - j))];
            chol_ = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(m);
        });
        if (chol_->info() != Eigen::Success) throw SolverError("Toeplitz matrix is not positive definite");
        Eigen::Map<const Eigen::VectorXd> rhs(b.data(), static_cast<Eigen::Index>(b.size()));
        const Eigen::VectorXd sol = chol_->solve(rhs);
        return {sol.data(), sol.data() + sol.size()};
    }

    std::vector<double> col_;
    std::size_t band_ = 0;
    std::shared_ptr<std::once_flag> chol_once_ = std::make_shared<std::once_flag>();
    mutable std::shared_ptr<Eigen::LLT<Eigen::MatrixXd>> chol_;
};

}  // namespace mightloc::linalg
