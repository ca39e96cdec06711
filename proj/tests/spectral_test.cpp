#include <doctest.h>

#include "test_support.hpp"
#include "tvrec/error.hpp"
#include "tvrec/spectral.hpp"

using namespace tvrec;
using namespace tvrec::spectral;
using tvrec::testing::random_cmatrix;
using tvrec::testing::random_cvector;
using tvrec::testing::random_tensor;
using tvrec::testing::Rng;

namespace {

double rel(const CVector& a, const CVector& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

TapMatrix identity_taps(Eigen::Index rows, Eigen::Index cols) {
    CMatrix h = CMatrix::Zero(rows, cols);
    h.col(0).setOnes();
    return TapMatrix(h);
}

} // namespace

TEST_CASE("shift operator") {
    CHECK_THROWS_AS(make_shift(0), ShapeError);

    SUBCASE("single node is the identity") {
        const auto s = make_shift(1);
        CHECK(s.dense()(0, 0) == 1.0);
        CVector x(1);
        x << Complex(2.5, -1.0);
        CHECK(s.apply(x)(0) == x(0));
    }
    SUBCASE("delays by one") {
        CVector x(3);
        x << 1, 0, 0;
        const CVector y = make_shift(3).apply(x);
        CHECK(y(0) == Complex(0));
        CHECK(y(1) == Complex(1));
        CHECK(y(2) == Complex(0));
    }
    SUBCASE("dense form is the cyclic permutation") {
        const Eigen::MatrixXd s = make_shift(4).dense();
        for (int i = 0; i < 4; ++i) {
            CHECK(s.row(i).sum() == 1.0);
            CHECK(s.col(i).sum() == 1.0);
            CHECK(s(i, (i + 3) % 4) == 1.0);
        }
    }
    SUBCASE("one-hot j maps to one-hot j+1") {
        for (int m = 1; m <= 9; ++m) {
            for (int j = 0; j < m; ++j) {
                CVector e = CVector::Zero(m);
                e(j) = 1.0;
                const CVector y = make_shift(static_cast<std::size_t>(m)).apply(e);
                CHECK(y((j + 1) % m) == Complex(1.0));
                CHECK(y.cwiseAbs().sum() == doctest::Approx(1.0));
            }
        }
    }
    CHECK_THROWS_AS(make_shift(3).apply(CVector::Zero(4)), ShapeError);
}

TEST_CASE("spectral basis closed forms") {
    CHECK_THROWS_AS(make_basis(0, 1), ShapeError);

    SUBCASE("M = 2") {
        const auto b = make_basis(2, 2);
        const double r = 1.0 / std::sqrt(2.0);
        CHECK(std::abs(b.forward(0, 0) - r) < 1e-15);
        CHECK(std::abs(b.forward(0, 1) - r) < 1e-15);
        CHECK(std::abs(b.forward(1, 0) - r) < 1e-15);
        CHECK(std::abs(b.forward(1, 1) + r) < 1e-15);
        CHECK(std::abs(b.eigenvalues(0) - 1.0) < 1e-15);
        CHECK(std::abs(b.eigenvalues(1) + 1.0) < 1e-15);
        const double expected[2][3] = {{1, 1, 1}, {1, -1, 1}};
        for (int i = 0; i < 2; ++i) {
            for (int k = 0; k < 3; ++k) {
                CHECK(std::abs(b.vandermonde(i, k) - expected[i][k]) < 1e-15);
            }
        }
    }
    SUBCASE("M = 4 eigenvalues in frequency order") {
        const auto b = make_basis(4, 0);
        const Complex expected[] = {{1, 0}, {0, -1}, {-1, 0}, {0, 1}};
        for (int n = 0; n < 4; ++n) {
            CHECK(std::abs(b.eigenvalues(n) - expected[n]) < 1e-15);
        }
    }
}

TEST_CASE("spectral basis invariants") {
    for (std::size_t m : {1, 2, 3, 5, 8, 13, 32, 64}) {
        const auto b = make_basis(m, m);
        const auto mi = static_cast<Eigen::Index>(m);
        const CMatrix gram = b.eigenvectors.adjoint() * b.eigenvectors;
        CHECK((gram - CMatrix::Identity(mi, mi)).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((b.eigenvalues.cwiseAbs().array() - 1.0).abs().maxCoeff() <= 1e-12);

        const CMatrix s = make_shift(m).dense().cast<Complex>();
        for (Eigen::Index i = 0; i < mi; ++i) {
            const CVector lhs = s * b.eigenvectors.col(i);
            const CVector rhs = b.eigenvalues(i) * b.eigenvectors.col(i);
            CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
            CHECK(b.vandermonde(i, 0) == Complex(1.0, 0.0));
        }
    }
}

TEST_CASE("fixed filter, time domain") {
    Rng rng(1);
    const CVector x = random_cvector(5, rng);
    CVector identity(1);
    identity << 1.0;
    CHECK(rel(apply_fixed_filter_time(5, identity, x), x) == 0.0);

    CVector delay(2);
    delay << 0.0, 1.0;
    CVector abc(3);
    abc << 1.0, 2.0, 3.0;
    const CVector y = apply_fixed_filter_time(3, delay, abc);
    CHECK(y(0) == Complex(3.0));
    CHECK(y(1) == Complex(1.0));
    CHECK(y(2) == Complex(2.0));

    CHECK_THROWS_AS(apply_fixed_filter_time(4, identity, x), ShapeError);
}

TEST_CASE("fixed filter, frequency domain agrees with repeated shifting") {
    Rng rng(2);
    CVector one(1);
    one << 1.0;
    const auto b8 = make_basis(8, 4);
    const CVector x = random_cvector(8, rng);
    CHECK((apply_fixed_filter_freq(b8, one, x) - x).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(apply_fixed_filter_freq(b8, CVector::Zero(3), x).cwiseAbs().maxCoeff() == 0.0);

    for (auto [m, k] : {std::pair{6, 3}, std::pair{8, 4}, std::pair{5, 7}}) {
        const auto basis = make_basis(static_cast<std::size_t>(m), static_cast<std::size_t>(k));
        const CVector taps = random_cvector(k + 1, rng);
        const CVector sig = random_cvector(m, rng);
        const CVector t = apply_fixed_filter_time(static_cast<std::size_t>(m), taps, sig);
        const CVector f = apply_fixed_filter_freq(basis, taps, sig);
        CHECK((t - f).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("node-variant filter, time domain") {
    Rng rng(3);
    const CVector x = random_cvector(6, rng);
    SUBCASE("identical rows reduce to the fixed filter") {
        const CVector row = random_cvector(4, rng);
        CMatrix h(6, 4);
        for (int i = 0; i < 6; ++i) {
            h.row(i) = row.transpose();
        }
        const CVector nv = apply_nv_filter_time(6, TapMatrix(h), x);
        CHECK((nv - apply_fixed_filter_time(6, row, x)).cwiseAbs().maxCoeff() <= 1e-14);
    }
    SUBCASE("e_0 rows are the identity") {
        CHECK(rel(apply_nv_filter_time(6, identity_taps(6, 4), x), x) == 0.0);
    }
    SUBCASE("each node uses its own taps") {
        // y_i = sum_k h_k^{(i)} x_{(i-k) mod M}, written out by hand.
        const CMatrix h = random_cmatrix(6, 4, rng);
        const CVector y = apply_nv_filter_time(6, TapMatrix(h), x);
        for (int i = 0; i < 6; ++i) {
            Complex expect = 0.0;
            for (int k = 0; k < 4; ++k) {
                expect += h(i, k) * x(((i - k) % 6 + 6) % 6);
            }
            CHECK(std::abs(y(i) - expect) <= 1e-14);
        }
    }
    CHECK_THROWS_AS(apply_nv_filter_time(5, identity_taps(6, 2), random_cvector(5, rng)), ShapeError);
}

TEST_CASE("node-variant frequency response") {
    Rng rng(4);
    SUBCASE("identity taps leave the spectrum unchanged") {
        const auto b = make_basis(8, 3);
        const CVector spec = random_cvector(8, rng);
        CHECK((apply_nv_filter_freq(b, identity_taps(8, 4), spec) - spec).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SUBCASE("identical rows give a diagonal response") {
        const auto b = make_basis(8, 3);
        const CVector row = random_cvector(4, rng);
        CMatrix h(8, 4);
        for (int i = 0; i < 8; ++i) {
            h.row(i) = row.transpose();
        }
        // Full response matrix U^H (U o H Lambda^T) must be diagonal.
        CMatrix response(8, 8);
        for (int j = 0; j < 8; ++j) {
            CVector e = CVector::Zero(8);
            e(j) = 1.0;
            response.col(j) = apply_nv_filter_freq(b, TapMatrix(h), e);
        }
        CMatrix off = response;
        off.diagonal().setZero();
        CHECK(off.cwiseAbs().maxCoeff() <= 1e-10);
        const CVector x = random_cvector(8, rng);
        const CVector via_nv = b.igft(apply_nv_filter_freq(b, TapMatrix(h), b.gft(x)));
        CHECK((via_nv - apply_fixed_filter_freq(b, row, x)).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SUBCASE("round trip equals the time-domain filter") {
        for (std::size_t m : {2, 4, 8, 16, 32}) {
            for (int trial = 0; trial < 5; ++trial) {
                const auto k = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng);
                const auto b = make_basis(m, k);
                const TapMatrix h(random_cmatrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k + 1), rng));
                const CVector x = random_cvector(static_cast<Eigen::Index>(m), rng);
                const CVector via_freq = b.igft(apply_nv_filter_freq(b, h, b.gft(x)));
                CHECK(rel(via_freq, apply_nv_filter_time(m, h, x)) <= 1e-9);
            }
        }
    }
    CHECK_THROWS_AS(apply_nv_filter_freq(make_basis(4, 1), identity_taps(4, 3), random_cvector(4, rng)), ShapeError);
}

TEST_CASE("causal filter on the padded cycle") {
    Rng rng(5);
    SUBCASE("K = 0 with unit taps is the identity") {
        const Tensor2 x = random_tensor(7, 3, rng);
        const Tensor2 y = causal_filter(7, 0, identity_taps(7, 1), x);
        CHECK((y - x).cwiseAbs().maxCoeff() <= 1e-13);
    }
    SUBCASE("pure delay with a zero boundary") {
        CMatrix h = CMatrix::Zero(3, 3);
        h.col(1).setOnes();
        Tensor2 x(3, 1);
        x << 1.0, 2.0, 3.0;
        const Tensor2 y = causal_filter(3, 2, TapMatrix(h), x);
        CHECK(std::abs(y(0, 0)) <= 1e-13);
        CHECK(std::abs(y(1, 0) - 1.0) <= 1e-13);
        CHECK(std::abs(y(2, 0) - 2.0) <= 1e-13);
    }
    SUBCASE("matches the direct causal sum") {
        for (int trial = 0; trial < 20; ++trial) {
            const CMatrix h = random_cmatrix(5, 4, rng);
            const Tensor2 x = random_tensor(5, 3, rng);
            const Tensor2 y = causal_filter(5, 3, TapMatrix(h), x);
            CHECK((y - testing::causal_sum_oracle(h, x)).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
    SUBCASE("causality and linearity") {
        const std::size_t n = 12;
        const std::size_t k = 12;
        const TapMatrix h(random_cmatrix(12, 13, rng));
        const Tensor2 x = random_tensor(12, 4, rng);
        const Tensor2 y = causal_filter(n, k, h, x);
        for (Eigen::Index j = 0; j < 12; ++j) {
            Tensor2 xp = x;
            xp.row(j) += random_tensor(1, 4, rng) * 10.0;
            const Tensor2 yp = causal_filter(n, k, h, xp);
            if (j > 0) {
                CHECK((yp.topRows(j) - y.topRows(j)).cwiseAbs().maxCoeff() <= 1e-12);
            }
        }
        const Tensor2 z = random_tensor(12, 4, rng);
        const double a = 1.7;
        const double c = -0.3;
        const Tensor2 lhs = causal_filter(n, k, h, a * x + c * z);
        const Tensor2 rhs = a * y + c * causal_filter(n, k, h, z);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("zero-extension rows are inert") {
        const std::size_t n = 6;
        const std::size_t k = 4;
        const std::size_t m = n + k;
        const CMatrix h = random_cmatrix(6, 5, rng);
        const Tensor2 x = random_tensor(6, 1, rng);
        CVector padded = CVector::Zero(10);
        padded.head(6) = x.col(0).cast<Complex>();

        const TapMatrix extended = TapMatrix(h).zero_extended(m);
        CMatrix garbage = extended.matrix();
        garbage.bottomRows(4) = random_cmatrix(4, 5, rng) * 100.0;

        const auto basis = make_basis(m, k);
        const CVector clean = basis.igft(apply_nv_filter_freq(basis, extended, basis.gft(padded)));
        const CVector noisy = basis.igft(apply_nv_filter_freq(basis, TapMatrix(garbage), basis.gft(padded)));
        CHECK((clean.head(6) - noisy.head(6)).cwiseAbs().maxCoeff() <= 1e-12);
        const Tensor2 y = causal_filter(n, k, TapMatrix(h), x);
        CHECK((clean.head(6).real() - y.col(0)).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK_THROWS_AS(causal_filter(4, 2, identity_taps(4, 2), random_tensor(4, 2, rng)), ShapeError);
    CHECK_THROWS_AS(causal_filter(4, 1, identity_taps(4, 2), random_tensor(5, 2, rng)), ShapeError);
}

TEST_CASE("circular filter is the unpadded node-variant filter") {
    Rng rng(6);
    const TapMatrix h(random_cmatrix(8, 9, rng));  // K = N wraps fully
    const Tensor2 x = random_tensor(8, 2, rng);
    const Tensor2 y = circular_filter(8, 8, h, x);
    for (Eigen::Index c = 0; c < 2; ++c) {
        const CVector ref = apply_nv_filter_time(8, h, x.col(c).cast<Complex>());
        CHECK((y.col(c) - ref.real()).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK((precompute_circular_operator(8, 8, h) * x - y).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("precomputed operator") {
    Rng rng(7);
    CHECK((precompute_operator(5, 3, identity_taps(5, 4)) - Tensor2::Identity(5, 5)).cwiseAbs().maxCoeff() == 0.0);

    const TapMatrix h(random_cmatrix(9, 4, rng));
    const Tensor2 g = precompute_operator(9, 3, h);
    for (int i = 0; i < 9; ++i) {
        for (int j = 0; j < 9; ++j) {
            if (j > i || i - j > 3) {
                CHECK(g(i, j) == 0.0);
            } else {
                CHECK(g(i, j) == h(static_cast<std::size_t>(i), static_cast<std::size_t>(i - j)).real());
            }
        }
    }
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor2 x = random_tensor(9, 5, rng);
        CHECK((g * x - causal_filter(9, 3, h, x)).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("tap matrix rejects non-finite entries") {
    CMatrix h = CMatrix::Zero(2, 2);
    h(1, 1) = Complex(std::nan(""), 0.0);
    CHECK_THROWS_AS(TapMatrix{h}, NumericError);
}
