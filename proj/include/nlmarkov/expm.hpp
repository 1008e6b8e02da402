#pragma once

#include "nlmarkov/grid.hpp"

namespace nlmarkov {

/// exp(A) by scaling and squaring with diagonal Padé approximants of degree
/// 3, 5, 7, 9 or 13, picked from the 1-norm of A.
///
/// Throws NumericalError if the result is not finite.
Matrix expm(const Matrix& a);

/// Fréchet derivative L(A, E) = d/ds exp(A + sE) at s = 0, read off the
/// upper-right block of exp([[A, E], [0, A]]).
Matrix expm_frechet(const Matrix& a, const Matrix& e);

}  // namespace nlmarkov
