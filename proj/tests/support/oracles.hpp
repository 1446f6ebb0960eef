#pragma once

// Reference computations used by the tests. They deliberately avoid the
// library's SVD-based kernels.

#include <cmath>
#include <random>

#include <Eigen/Dense>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Random orthogonal matrix from Householder QR of a Gaussian matrix.
inline Matrix random_orthogonal(Eigen::Index n, std::mt19937_64& rng)
{
    std::normal_distribution<double> nd;
    Matrix g(n, n);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = nd(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    return qr.householderQ() * Matrix::Identity(n, n);
}

inline Matrix gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0)
{
    std::normal_distribution<double> nd(0.0, sd);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
    return m;
}

/// Singular values from the eigenvalues of M^T M (or M M^T), nonincreasing.
inline Vector singular_values_eig(const Matrix& m)
{
    const Matrix gram = m.rows() >= m.cols() ? Matrix(m.transpose() * m) : Matrix(m * m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    Vector ev = es.eigenvalues().reverse();
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = std::sqrt(std::max(ev(i), 0.0));
    return ev;
}

/// Singular values by one-sided Jacobi rotations (Eigen's JacobiSVD).
inline Vector singular_values_jacobi(const Matrix& m)
{
    return Eigen::JacobiSVD<Matrix>(m).singularValues();
}

/// Top singular triple by power iteration on M^T M.
struct Triple {
    double sigma;
    Vector u;
    Vector v;
};

inline Triple power_iteration(const Matrix& m, int iterations = 5000)
{
    Vector v = Vector::Ones(m.cols()) / std::sqrt(static_cast<double>(m.cols()));
    for (int k = 0; k < iterations; ++k) {
        Vector next = m.transpose() * (m * v);
        const double n = next.norm();
        if (n == 0.0) return {0.0, Vector::Zero(m.rows()), v};
        next /= n;
        if ((next - v).norm() < 1e-15) {
            v = next;
            break;
        }
        v = next;
    }
    const Vector mv = m * v;
    const double sigma = mv.norm();
    return {sigma, sigma > 0 ? Vector(mv / sigma) : Vector(Vector::Zero(m.rows())), v};
}

}  // namespace oracle
