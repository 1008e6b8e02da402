#include "nlmarkov/expm.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "nlmarkov/error.hpp"

namespace nlmarkov {

namespace {

constexpr std::array<double, 4> kPade3 = {120.0, 60.0, 12.0, 1.0};
constexpr std::array<double, 6> kPade5 = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
constexpr std::array<double, 8> kPade7 = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                          25200.0,    1512.0,    56.0,      1.0};
constexpr std::array<double, 10> kPade9 = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
                                           2162160.0,     110880.0,     3960.0,       90.0,        1.0};
constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0, 129060195264000.0,
    10559470521600.0,    670442572800.0,      33522128640.0,      1323241920.0,       40840800.0,
    960960.0,            16380.0,             182.0,              1.0};

// Largest 1-norms for which each degree meets unit roundoff without scaling.
constexpr double kTheta3 = 1.495585217958292e-2;
constexpr double kTheta5 = 2.539398330063230e-1;
constexpr double kTheta7 = 9.504178996162932e-1;
constexpr double kTheta9 = 2.097847961257068e0;
constexpr double kTheta13 = 5.371920351148152e0;

double one_norm(const Matrix& a) { return a.cwiseAbs().colwise().sum().maxCoeff(); }

template <std::size_t N>
Matrix pade(const Matrix& a, const std::array<double, N>& b) {
    const Eigen::Index n = a.rows();
    const Matrix id = Matrix::Identity(n, n);
    const Matrix a2 = a * a;
    Matrix u = b[1] * id;
    Matrix v = b[0] * id;
    Matrix power = id;
    for (std::size_t k = 2; k + 1 < N; k += 2) {
        power = power * a2;
        v += b[k] * power;
        u += b[k + 1] * power;
    }
    u = a * u;
    return (v - u).partialPivLu().solve(v + u);
}

Matrix pade13(const Matrix& a) {
    const auto& b = kPade13;
    const Eigen::Index n = a.rows();
    const Matrix id = Matrix::Identity(n, n);
    const Matrix a2 = a * a;
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a4 * a2;
    Matrix u = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2);
    u += b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id;
    u = a * u;
    Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2);
    v += b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
    return (v - u).partialPivLu().solve(v + u);
}

}  // namespace

Matrix expm(const Matrix& a) {
    if (a.rows() != a.cols()) throw DimensionError("expm: matrix must be square");
    if (a.size() == 0) return a;
    if (!a.allFinite()) throw NumericalError("expm: non-finite input");
    const double norm = one_norm(a);
    Matrix result;
    if (norm <= kTheta3) {
        result = pade(a, kPade3);
    } else if (norm <= kTheta5) {
        result = pade(a, kPade5);
    } else if (norm <= kTheta7) {
        result = pade(a, kPade7);
    } else if (norm <= kTheta9) {
        result = pade(a, kPade9);
    } else {
        const int s = std::max(0, static_cast<int>(std::ceil(std::log2(norm / kTheta13))));
        result = pade13(a / std::ldexp(1.0, s));
        for (int k = 0; k < s; ++k) result = result * result;
    }
    if (!result.allFinite()) {
        std::ostringstream os;
        os << "1-norm " << norm;
        throw NumericalError("expm: overflow", os.str());
    }
    return result;
}

Matrix expm_frechet(const Matrix& a, const Matrix& e) {
    if (a.rows() != a.cols() || e.rows() != a.rows() || e.cols() != a.cols()) {
        throw DimensionError("expm_frechet: A and E must be square and of equal size");
    }
    const Eigen::Index n = a.rows();
    Matrix block = Matrix::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = a;
    block.topRightCorner(n, n) = e;
    block.bottomRightCorner(n, n) = a;
    return expm(block).topRightCorner(n, n);
}

}  // namespace nlmarkov
