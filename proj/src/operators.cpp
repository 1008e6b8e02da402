#include "nlmarkov/operators.hpp"

#include "nlmarkov/error.hpp"

namespace nlmarkov {

FiniteRankOperator::FiniteRankOperator(Matrix left, Matrix right) : left_(std::move(left)), right_(std::move(right)) {
    if (left_.rows() != right_.rows() || left_.cols() != right_.cols()) {
        throw DimensionError("FiniteRankOperator: factor shapes differ");
    }
}

OperatorPtr FiniteRankOperator::zero(Eigen::Index n) {
    return std::make_shared<FiniteRankOperator>(Matrix(n, 0), Matrix(n, 0));
}

double FiniteRankOperator::norm_bound() const {
    double total = 0.0;
    for (Eigen::Index j = 0; j < left_.cols(); ++j) {
        total += left_.col(j).cwiseAbs().maxCoeff() * right_.col(j).lpNorm<1>();
    }
    return total;
}

DenseOperator::DenseOperator(Matrix a) : a_(std::move(a)) {
    if (a_.rows() != a_.cols()) throw DimensionError("DenseOperator: matrix must be square");
}

}  // namespace nlmarkov
