#pragma once

#include <cmath>
#include <limits>

#include "plvm/types.hpp"

namespace plvm {

/// log(sum(exp(x))) with max-subtraction.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived> &x)
{
    using Scalar = typename Derived::Scalar;
    using std::exp;
    using std::log;
    if (x.size() == 0) return -std::numeric_limits<Scalar>::infinity();
    const Scalar m = x.maxCoeff();
    if (!std::isfinite(static_cast<double>(m))) return m;
    return m + log((x.array() - m).exp().sum());
}

/// Multilogit link. Throws DomainError on non-finite input.
template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived> &mu)
{
    using Scalar = typename Derived::Scalar;
    if (!mu.allFinite()) throw DomainError("softmax: non-finite input");
    if (mu.size() == 0) return Vector<Scalar>();
    Vector<Scalar> out = (mu.array() - mu.maxCoeff()).exp().matrix();
    out /= out.sum();
    return out;
}

/// Centered log transform, g(p)_i = log p_i - mean_j log p_j.
/// Requires every entry strictly positive.
template <typename Derived>
Vector<typename Derived::Scalar> g_transform(const Eigen::MatrixBase<Derived> &p)
{
    using Scalar = typename Derived::Scalar;
    if (p.size() == 0) return Vector<Scalar>();
    if (!p.allFinite() || (p.array() <= Scalar(0)).any())
        throw DomainError("g_transform: entries must be finite and > 0");
    Vector<Scalar> logs = p.array().log().matrix();
    logs.array() -= logs.mean();
    return logs;
}

/// log(x + sqrt(1 + x^2)); variance stabilizer for counts.
template <typename Scalar>
Scalar asinh_transform(Scalar x)
{
    using std::asinh;
    return asinh(x);
}

template <typename Derived>
Matrix<double> asinh_transform_matrix(const Eigen::MatrixBase<Derived> &x)
{
    return x.template cast<double>().array().asinh().matrix();
}

/// True when v has nonnegative entries summing to one within `tol` (relative).
template <typename Derived>
bool is_prob_vector(const Eigen::MatrixBase<Derived> &v, double tol = 1e-12)
{
    if (v.size() == 0 || !v.allFinite()) return false;
    if ((v.array() < 0).any()) return false;
    return std::abs(static_cast<double>(v.sum()) - 1.0) <= tol;
}

/// Validated point on the probability simplex.
class ProbVector {
public:
    explicit ProbVector(VectorXd values, double tol = 1e-12) : values_(std::move(values))
    {
        if (!is_prob_vector(values_, tol))
            throw DomainError("ProbVector: entries must be >= 0 and sum to 1");
    }

    const VectorXd &values() const { return values_; }
    Index size() const { return values_.size(); }
    double operator[](Index i) const { return values_[i]; }

private:
    VectorXd values_;
};

}  // namespace plvm
