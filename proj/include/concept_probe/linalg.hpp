#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cprobe::linalg {

using Vector = std::vector<double>;

// Thrown when operand lengths disagree.
class DimensionError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

// Thrown for near-zero vectors and bases that collapse to nothing.
class DegenerateError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// Orthonormal set of vectors sharing one ambient dimension.
struct OrthoBasis {
    std::vector<Vector> vectors;
    std::size_t ambient = 0;

    std::size_t dim() const { return vectors.size(); }
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

/// v / ||v||. Throws DegenerateError when ||v|| <= 1e-12.
Vector unit(std::span<const double> v);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
Vector scaled(std::span<const double> v, double alpha);
Vector subtract(std::span<const double> a, std::span<const double> b);

/// Entrywise mean of equal-length vectors.
Vector mean(const std::vector<Vector>& vs);

/// Modified Gram-Schmidt with one re-orthogonalization pass. A vector whose
/// residual norm falls below `tol * ||v||` is dropped. Throws DegenerateError
/// on empty input or when every vector is dropped.
OrthoBasis gram_schmidt(const std::vector<Vector>& vs, double tol = 1e-8);

/// Component of q orthogonal to an orthonormal basis (two projection sweeps).
Vector project_out(const OrthoBasis& basis, std::span<const double> q);

/// Component of q orthogonal to span(basis_vectors). The basis vectors need
/// not be orthonormal; they are orthonormalized first.
Vector step_gram_schmidt(const std::vector<Vector>& basis_vectors,
                         std::span<const double> q);

bool all_finite(std::span<const double> v);

}  // namespace cprobe::linalg
