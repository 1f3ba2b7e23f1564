#include <gtest/gtest.h>

#include <cmath>

#include "concept_probe/linalg.hpp"
#include "concept_probe/rng.hpp"

using namespace cprobe;
using namespace cprobe::linalg;

namespace {

std::vector<Vector> random_vectors(std::size_t count, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vector> vs(count, Vector(dim));
    for (auto& v : vs) {
        for (auto& x : v) x = rng.normal();
    }
    return vs;
}

double max_offdiag(const OrthoBasis& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < b.dim(); ++i) {
        for (std::size_t j = i + 1; j < b.dim(); ++j) {
            worst = std::max(worst, std::abs(dot(b.vectors[i], b.vectors[j])));
        }
    }
    return worst;
}

// Norm of v minus its projection onto the basis, computed classically.
double projection_residual(const OrthoBasis& b, const Vector& v) {
    Vector r = v;
    for (const auto& q : b.vectors) {
        axpy(-dot(q, v), q, r);
    }
    return norm(r);
}

}  // namespace

TEST(Dot, OrthogonalAxes) { EXPECT_EQ(dot(Vector{1, 0}, Vector{0, 1}), 0.0); }

TEST(Dot, SquaredNorm) { EXPECT_EQ(dot(Vector{2, 3}, Vector{2, 3}), 13.0); }

TEST(Dot, HandExpansion) { EXPECT_DOUBLE_EQ(dot(Vector{0.5, -1, 2}, Vector{4, 1, 0.25}), 1.5); }

TEST(Dot, LengthMismatchThrows) { EXPECT_THROW(dot(Vector{1, 2}, Vector{1}), DimensionError); }

TEST(Unit, ThreeFourFive) {
    const auto u = unit(Vector{3, 4});
    EXPECT_DOUBLE_EQ(u[0], 0.6);
    EXPECT_DOUBLE_EQ(u[1], 0.8);
}

TEST(Unit, AxisVector) { EXPECT_EQ(unit(Vector{0, 0, 5}), (Vector{0, 0, 1})); }

TEST(Unit, RandomHasUnitNorm) {
    const auto v = random_vectors(1, 17, 3).front();
    EXPECT_NEAR(norm(unit(v)), 1.0, 1e-12);
}

TEST(Unit, NearZeroThrows) {
    EXPECT_THROW(unit(Vector{0, 0}), DegenerateError);
    EXPECT_THROW(unit(Vector{1e-13, 0}), DegenerateError);
}

TEST(GramSchmidt, AlreadyOrthogonalIsNormalized) {
    const auto b = gram_schmidt({{1, 0, 0}, {0, 2, 0}});
    ASSERT_EQ(b.dim(), 2u);
    EXPECT_EQ(b.ambient, 3u);
    EXPECT_EQ(b.vectors[0], (Vector{1, 0, 0}));
    EXPECT_EQ(b.vectors[1], (Vector{0, 1, 0}));
}

TEST(GramSchmidt, DuplicateDirectionDropped) {
    const auto b = gram_schmidt({{1, 1}, {2, 2}}, 1e-10);
    EXPECT_EQ(b.dim(), 1u);
}

TEST(GramSchmidt, RandomR5MatchesProjectionOracle) {
    const auto vs = random_vectors(3, 5, 7);
    const auto b = gram_schmidt(vs);
    ASSERT_EQ(b.dim(), 3u);
    EXPECT_LT(max_offdiag(b), 1e-8);
    for (const auto& v : vs) {
        EXPECT_LT(projection_residual(b, v), 1e-6);
    }
}

TEST(GramSchmidt, EmptyInputThrows) { EXPECT_THROW(gram_schmidt({}), DegenerateError); }

TEST(GramSchmidt, AllDroppedThrows) { EXPECT_THROW(gram_schmidt({{0, 0, 0}, {0, 0, 0}}), DegenerateError); }

TEST(GramSchmidt, MixedLengthsThrow) { EXPECT_THROW(gram_schmidt({{1, 0}, {1, 0, 0}}), DimensionError); }

TEST(GramSchmidt, RankDeficientKeepsRank) {
    auto vs = random_vectors(4, 30, 21);
    Vector combo(30, 0.0);
    axpy(2.0, vs[0], combo);
    axpy(-0.5, vs[2], combo);
    vs.push_back(combo);
    vs.push_back(vs[1]);
    const auto b = gram_schmidt(vs);
    EXPECT_EQ(b.dim(), 4u);
    for (const auto& v : vs) {
        EXPECT_LT(projection_residual(b, v), 1e-6 * norm(v));
    }
}

TEST(GramSchmidt, UnitNormsAndIdempotence) {
    for (auto [count, dim] : {std::pair<std::size_t, std::size_t>{10, 10}, {20, 64}, {60, 300}}) {
        const auto b = gram_schmidt(random_vectors(count, dim, 100 + dim));
        for (const auto& q : b.vectors) {
            EXPECT_NEAR(norm(q), 1.0, 1e-10);
        }
        const auto again = gram_schmidt(b.vectors);
        ASSERT_EQ(again.dim(), b.dim());
        for (std::size_t i = 0; i < b.dim(); ++i) {
            for (std::size_t j = 0; j < dim; ++j) {
                EXPECT_NEAR(again.vectors[i][j], b.vectors[i][j], 1e-10);
            }
        }
    }
}

TEST(GramSchmidt, IllConditionedInputStaysOrthogonal) {
    // Nearly parallel columns defeat classical Gram-Schmidt.
    auto vs = random_vectors(1, 200, 5);
    Rng rng(6);
    for (int i = 0; i < 40; ++i) {
        Vector v = vs.front();
        for (auto& x : v) x += 1e-7 * rng.normal();
        vs.push_back(v);
    }
    const auto b = gram_schmidt(vs);
    EXPECT_LT(max_offdiag(b), 1e-8);
}

TEST(StepGramSchmidt, RemovesXComponent) {
    const auto r = step_gram_schmidt({{1, 0}}, Vector{3, 4});
    EXPECT_NEAR(r[0], 0.0, 1e-15);
    EXPECT_NEAR(r[1], 4.0, 1e-15);
}

TEST(StepGramSchmidt, InsideSpanGivesZero) {
    const auto r = step_gram_schmidt({{1, 0}, {0, 1}}, Vector{5, -2});
    EXPECT_NEAR(norm(r), 0.0, 1e-15);
}

TEST(StepGramSchmidt, RandomR4OrthogonalToBasis) {
    const auto basis = gram_schmidt(random_vectors(2, 4, 11));
    const auto q = random_vectors(1, 4, 12).front();
    const auto r = step_gram_schmidt(basis.vectors, q);
    for (const auto& b : basis.vectors) {
        EXPECT_LT(std::abs(dot(r, b)), 1e-8);
    }
}

TEST(StepGramSchmidt, NonOrthonormalBasisAccepted) {
    const auto raw = random_vectors(5, 40, 13);
    const auto q = random_vectors(1, 40, 14).front();
    const auto r = step_gram_schmidt(raw, q);
    for (const auto& b : raw) {
        EXPECT_LT(std::abs(dot(r, b)) / norm(b), 1e-8);
    }
}

TEST(StepGramSchmidt, LengthMismatchThrows) {
    EXPECT_THROW(step_gram_schmidt({{1, 0}}, Vector{1, 2, 3}), DimensionError);
}

TEST(ProjectOut, OrthogonalToEveryBasisVector) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto basis = gram_schmidt(random_vectors(15, 50, seed));
        const auto q = random_vectors(1, 50, seed + 1000).front();
        const auto r = project_out(basis, q);
        for (const auto& b : basis.vectors) {
            EXPECT_LT(std::abs(dot(r, b)), 1e-8);
        }
        // q = r + its projection: the removed part lies in the span.
        EXPECT_LT(projection_residual(basis, subtract(q, r)), 1e-9 * norm(q));
    }
}

TEST(Helpers, AxpyScaledSubtractMean) {
    Vector y{1, 1};
    axpy(2.0, Vector{1, -1}, y);
    EXPECT_EQ(y, (Vector{3, -1}));
    EXPECT_EQ(scaled(Vector{1, -2}, -3.0), (Vector{-3, 6}));
    EXPECT_EQ(subtract(Vector{1, 2}, Vector{3, 5}), (Vector{-2, -3}));
    EXPECT_EQ(mean({{1, 2}, {3, 6}}), (Vector{2, 4}));
    EXPECT_THROW(mean({}), std::exception);
    EXPECT_TRUE(all_finite(Vector{1, 2}));
    EXPECT_FALSE(all_finite(Vector{1, NAN}));
    EXPECT_FALSE(all_finite(Vector{INFINITY}));
}
