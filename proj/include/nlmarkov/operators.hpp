#pragma once

#include <memory>

#include "nlmarkov/grid.hpp"

namespace nlmarkov {

/// Bounded operator on node-value vectors, with its transpose.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;
    virtual Eigen::Index size() const = 0;
    virtual Vector apply(const Vector& g) const = 0;
    virtual Vector apply_adjoint(const Vector& xi) const = 0;
    /// Upper bound of the sup-norm operator norm.
    virtual double norm_bound() const = 0;
};

using OperatorPtr = std::shared_ptr<const LinearOperator>;

/// g -> sum_j left_j * (right_j . g).
class FiniteRankOperator final : public LinearOperator {
public:
    FiniteRankOperator(Matrix left, Matrix right);
    /// The zero operator on vectors of length n.
    static OperatorPtr zero(Eigen::Index n);

    Eigen::Index size() const override { return left_.rows(); }
    Eigen::Index rank() const { return left_.cols(); }
    Vector apply(const Vector& g) const override { return left_ * (right_.transpose() * g); }
    Vector apply_adjoint(const Vector& xi) const override { return right_ * (left_.transpose() * xi); }
    double norm_bound() const override;

    const Matrix& left() const noexcept { return left_; }
    const Matrix& right() const noexcept { return right_; }

private:
    Matrix left_;
    Matrix right_;
};

class DenseOperator final : public LinearOperator {
public:
    explicit DenseOperator(Matrix a);

    Eigen::Index size() const override { return a_.rows(); }
    Vector apply(const Vector& g) const override { return a_ * g; }
    Vector apply_adjoint(const Vector& xi) const override { return a_.transpose() * xi; }
    double norm_bound() const override { return a_.cwiseAbs().rowwise().sum().maxCoeff(); }

    const Matrix& matrix() const noexcept { return a_; }

private:
    Matrix a_;
};

}  // namespace nlmarkov
