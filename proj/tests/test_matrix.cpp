#include <catch2/catch.hpp>

#include "clbench/matrix.hpp"
#include "clbench/random.hpp"

using namespace clbench;

TEST_CASE("matmul multiplies small matrices") {
    Matrix a(2, 3);
    a(0, 0) = 1; a(0, 1) = 2; a(0, 2) = 3;
    a(1, 0) = 4; a(1, 1) = 5; a(1, 2) = 6;
    Matrix b(3, 2);
    b(0, 0) = 7; b(0, 1) = 8;
    b(1, 0) = 9; b(1, 1) = 10;
    b(2, 0) = 11; b(2, 1) = 12;

    Matrix c = matmul(a, b);
    CHECK(c(0, 0) == Approx(58.0));
    CHECK(c(0, 1) == Approx(64.0));
    CHECK(c(1, 0) == Approx(139.0));
    CHECK(c(1, 1) == Approx(154.0));
}

TEST_CASE("matmul rejects incompatible shapes") {
    Matrix a(2, 3), b(4, 1);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("transposed variants agree with explicit transpose") {
    Rng rng(11);
    Matrix a(4, 3), b(4, 5);
    for (double& v : a.data) v = rng.normal();
    for (double& v : b.data) v = rng.normal();

    Matrix ref = matmul(transpose(a), b);
    Matrix got = transposed_matmul(a, b);
    REQUIRE(got.same_shape(ref));
    for (std::size_t i = 0; i < ref.data.size(); ++i)
        CHECK(got.data[i] == Approx(ref.data[i]).margin(1e-12));

    Matrix c(5, 3);
    for (double& v : c.data) v = rng.normal();
    Matrix ref2 = matmul(a, transpose(c));
    Matrix got2 = matmul_transposed(a, c);
    REQUIRE(got2.same_shape(ref2));
    for (std::size_t i = 0; i < ref2.data.size(); ++i)
        CHECK(got2.data[i] == Approx(ref2.data[i]).margin(1e-12));
}

TEST_CASE("l2_normalize basic cases") {
    UnitVector u = l2_normalize(std::vector<double>{3.0, 4.0});
    CHECK(u.values[0] == Approx(0.6));
    CHECK(u.values[1] == Approx(0.8));
    CHECK(u.norm == Approx(5.0));
    CHECK_FALSE(u.degenerate);

    UnitVector unit = l2_normalize(std::vector<double>{0.0, 1.0});
    CHECK(unit.values[0] == Approx(0.0).margin(1e-15));
    CHECK(unit.values[1] == Approx(1.0));

    UnitVector zero = l2_normalize(std::vector<double>{0.0, 0.0, 0.0});
    CHECK(zero.degenerate);
    for (double v : zero.values) CHECK(v == 0.0);
}

TEST_CASE("l2_normalize yields unit norm on random vectors") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(7);
        for (double& x : v) x = rng.uniform(-10.0, 10.0);
        UnitVector u = l2_normalize(v);
        if (u.degenerate) continue;
        CHECK(norm2(u.values) == Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("jacobi_eigen leaves a diagonal matrix's basis as identity") {
    Matrix d(3, 3);
    d(0, 0) = 2.0; d(1, 1) = -1.0; d(2, 2) = 5.0;
    SymmetricEigen e = jacobi_eigen(d);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(e.vectors(i, j) == Approx(i == j ? 1.0 : 0.0).margin(1e-14));
    CHECK(e.values[0] == Approx(2.0));
    CHECK(e.values[1] == Approx(-1.0));
    CHECK(e.values[2] == Approx(5.0));
}

TEST_CASE("jacobi_eigen reconstructs random symmetric matrices") {
    Rng rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 2 + rng.index(6);
        Matrix a(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) {
                const double v = rng.normal();
                a(i, j) = v;
                a(j, i) = v;
            }
        SymmetricEigen e = jacobi_eigen(a);

        // orthogonality: V^T V = I
        Matrix vtv = transposed_matmul(e.vectors, e.vectors);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                CHECK(vtv(i, j) == Approx(i == j ? 1.0 : 0.0).margin(1e-10));

        // reconstruction: V diag(w) V^T = A
        Matrix vd = e.vectors;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) vd(i, j) *= e.values[j];
        Matrix rec = matmul_transposed(vd, e.vectors);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                CHECK(rec(i, j) == Approx(a(i, j)).margin(1e-9));
    }
}

TEST_CASE("rng index is within bounds and shuffle permutes") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) CHECK(rng.index(7) < 7);
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> orig = v;
    rng.shuffle(v);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == orig);
}

TEST_CASE("derive_seed separates streams") {
    CHECK(derive_seed(1, {2}) != derive_seed(1, {3}));
    CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    CHECK(derive_seed(9, {7}) == derive_seed(9, {7}));
}
