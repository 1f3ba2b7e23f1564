#include "concept_probe/linalg.hpp"

#include <cmath>

namespace cprobe::linalg {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* op) {
    if (a != b) {
        throw DimensionError(std::string(op) + ": length mismatch (" + std::to_string(a) +
                             " vs " + std::to_string(b) + ")");
    }
}

// One modified Gram-Schmidt sweep of r against the basis, in place.
void sweep(const std::vector<Vector>& basis, Vector& r) {
    for (const auto& q : basis) {
        const double c = dot(q, r);
        axpy(-c, q, r);
    }
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
    require_same_length(a.size(), b.size(), "dot");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum += a[i] * b[i];
    }
    return sum;
}

double norm(std::span<const double> v) {
    return std::sqrt(dot(v, v));
}

Vector unit(std::span<const double> v) {
    const double n = norm(v);
    if (!(n > 1e-12) || !std::isfinite(n)) {
        throw DegenerateError("unit: vector norm is zero or not finite");
    }
    Vector out(v.begin(), v.end());
    for (auto& x : out) {
        x /= n;
    }
    return out;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    require_same_length(x.size(), y.size(), "axpy");
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] += alpha * x[i];
    }
}

Vector scaled(std::span<const double> v, double alpha) {
    Vector out(v.begin(), v.end());
    for (auto& x : out) {
        x *= alpha;
    }
    return out;
}

Vector subtract(std::span<const double> a, std::span<const double> b) {
    require_same_length(a.size(), b.size(), "subtract");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return out;
}

Vector mean(const std::vector<Vector>& vs) {
    if (vs.empty()) {
        throw DegenerateError("mean: no vectors");
    }
    Vector out(vs.front().size(), 0.0);
    for (const auto& v : vs) {
        axpy(1.0, v, out);
    }
    for (auto& x : out) {
        x /= static_cast<double>(vs.size());
    }
    return out;
}

OrthoBasis gram_schmidt(const std::vector<Vector>& vs, double tol) {
    if (vs.empty()) {
        throw DegenerateError("gram_schmidt: empty input");
    }
    if (!(tol > 0.0)) {
        throw std::invalid_argument("gram_schmidt: tol must be positive");
    }
    OrthoBasis basis;
    basis.ambient = vs.front().size();
    for (const auto& v : vs) {
        require_same_length(v.size(), basis.ambient, "gram_schmidt");
        const double original = norm(v);
        if (original == 0.0) {
            continue;
        }
        Vector r = v;
        sweep(basis.vectors, r);
        sweep(basis.vectors, r);
        const double residual = norm(r);
        if (residual < tol * original) {
            continue;
        }
        for (auto& x : r) {
            x /= residual;
        }
        basis.vectors.push_back(std::move(r));
    }
    if (basis.vectors.empty()) {
        throw DegenerateError("gram_schmidt: every input vector was dropped");
    }
    return basis;
}

Vector project_out(const OrthoBasis& basis, std::span<const double> q) {
    Vector r(q.begin(), q.end());
    if (basis.dim() > 0) {
        require_same_length(q.size(), basis.ambient, "project_out");
    }
    sweep(basis.vectors, r);
    sweep(basis.vectors, r);
    return r;
}

Vector step_gram_schmidt(const std::vector<Vector>& basis_vectors, std::span<const double> q) {
    for (const auto& b : basis_vectors) {
        require_same_length(b.size(), q.size(), "step_gram_schmidt");
    }
    if (basis_vectors.empty()) {
        return Vector(q.begin(), q.end());
    }
    OrthoBasis basis;
    try {
        basis = gram_schmidt(basis_vectors);
    } catch (const DegenerateError&) {
        return Vector(q.begin(), q.end());  // all-zero basis spans nothing
    }
    return project_out(basis, q);
}

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

}  // namespace cprobe::linalg
