#include "tvrec/spectral.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tvrec/error.hpp"

namespace tvrec::spectral {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

void require_length(const CVector& x, std::size_t size, const char* what) {
    if (static_cast<std::size_t>(x.size()) != size) {
        throw ShapeError(std::string(what) + ": signal length " + std::to_string(x.size()) +
                         " does not match graph size " + std::to_string(size));
    }
}

// exp(-2 pi i * (num mod den) / den), with the phase reduced exactly in integers.
Complex root_of_unity(std::size_t num, std::size_t den) {
    const double phase = -2.0 * std::numbers::pi * static_cast<double>(num % den) / static_cast<double>(den);
    return std::polar(1.0, phase);
}

CVector shift(const CVector& x) {
    const Index n = x.size();
    CVector out(n);
    for (Index i = 0; i < n; ++i) {
        out(i) = x((i + n - 1) % n);
    }
    return out;
}

void check_filter_shapes(std::size_t seq_len, std::size_t order, const TapMatrix& taps, const Tensor2& x) {
    if (seq_len == 0) {
        throw ShapeError("filter: sequence length must be positive");
    }
    if (taps.rows() != seq_len || taps.order() != order) {
        throw ShapeError("filter: taps are " + std::to_string(taps.rows()) + "x" +
                         std::to_string(taps.order() + 1) + ", expected " + std::to_string(seq_len) + "x" +
                         std::to_string(order + 1));
    }
    if (static_cast<std::size_t>(x.rows()) != seq_len) {
        throw ShapeError("filter: signal block has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(seq_len));
    }
}

} // namespace

ShiftOperator::ShiftOperator(std::size_t size) : size_(size) {
    if (size == 0) {
        throw ShapeError("shift operator: size must be at least 1");
    }
}

CVector ShiftOperator::apply(const CVector& x) const {
    require_length(x, size_, "shift operator");
    return shift(x);
}

Eigen::MatrixXd ShiftOperator::dense() const {
    const Index n = idx(size_);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        s(i, (i + n - 1) % n) = 1.0;
    }
    return s;
}

CVector SpectralBasis::gft(const CVector& x) const {
    require_length(x, size, "gft");
    return forward * x;
}

CVector SpectralBasis::igft(const CVector& spectrum) const {
    require_length(spectrum, size, "igft");
    return eigenvectors * spectrum;
}

TapMatrix::TapMatrix(CMatrix taps) : taps_(std::move(taps)) {
    if (taps_.cols() < 1) {
        throw ShapeError("tap matrix needs at least one column");
    }
    if (!taps_.allFinite()) {
        throw NumericError("tap matrix contains non-finite entries");
    }
}

TapMatrix TapMatrix::zero_extended(std::size_t rows) const {
    if (rows < this->rows()) {
        throw ShapeError("tap matrix cannot be shrunk by zero extension");
    }
    CMatrix out = CMatrix::Zero(idx(rows), taps_.cols());
    out.topRows(taps_.rows()) = taps_;
    return TapMatrix(std::move(out));
}

ShiftOperator make_shift(std::size_t size) { return ShiftOperator(size); }

SpectralBasis make_basis(std::size_t size, std::size_t order) {
    if (size == 0) {
        throw ShapeError("spectral basis: size must be at least 1");
    }
    SpectralBasis b;
    b.size = size;
    b.order = order;
    const Index m = idx(size);
    const double scale = 1.0 / std::sqrt(static_cast<double>(size));

    b.forward.resize(m, m);
    for (Index k = 0; k < m; ++k) {
        for (Index n = 0; n < m; ++n) {
            b.forward(k, n) = scale * root_of_unity(static_cast<std::size_t>(k * n), size);
        }
    }
    b.eigenvectors = b.forward.adjoint();

    b.eigenvalues.resize(m);
    for (Index n = 0; n < m; ++n) {
        b.eigenvalues(n) = root_of_unity(static_cast<std::size_t>(n), size);
    }

    // Powers via the integer exponent n*k mod M rather than repeated products,
    // so every entry is as accurate as a single polar() call.
    b.vandermonde.resize(m, idx(order + 1));
    for (Index n = 0; n < m; ++n) {
        for (Index k = 0; k <= idx(order); ++k) {
            b.vandermonde(n, k) = k == 0 ? Complex(1.0, 0.0)
                                         : root_of_unity(static_cast<std::size_t>(n) * static_cast<std::size_t>(k), size);
        }
    }
    return b;
}

CVector apply_fixed_filter_time(std::size_t size, const CVector& taps, const CVector& x) {
    require_length(x, size, "fixed filter");
    if (taps.size() == 0) {
        throw ShapeError("fixed filter: at least one tap required");
    }
    CVector shifted = x;
    CVector out = taps(0) * x;
    for (Index k = 1; k < taps.size(); ++k) {
        shifted = shift(shifted);
        out += taps(k) * shifted;
    }
    return out;
}

CVector apply_fixed_filter_freq(const SpectralBasis& basis, const CVector& taps, const CVector& x) {
    require_length(x, basis.size, "fixed filter");
    if (taps.size() == 0) {
        throw ShapeError("fixed filter: at least one tap required");
    }
    CVector response = CVector::Zero(idx(basis.size));
    for (Index n = 0; n < response.size(); ++n) {
        for (Index k = 0; k < taps.size(); ++k) {
            response(n) += taps(k) * root_of_unity(static_cast<std::size_t>(n * k), basis.size);
        }
    }
    const CVector spectrum = basis.gft(x);
    return basis.igft(response.cwiseProduct(spectrum));
}

CVector apply_nv_filter_time(std::size_t size, const TapMatrix& taps, const CVector& x) {
    require_length(x, size, "node-variant filter");
    if (taps.rows() != size) {
        throw ShapeError("node-variant filter: tap rows must equal graph size");
    }
    const CMatrix& h = taps.matrix();
    CVector shifted = x;
    CVector out = h.col(0).cwiseProduct(x);
    for (Index k = 1; k < h.cols(); ++k) {
        shifted = shift(shifted);
        out += h.col(k).cwiseProduct(shifted);
    }
    return out;
}

CVector apply_nv_filter_freq(const SpectralBasis& basis, const TapMatrix& taps, const CVector& spectrum) {
    require_length(spectrum, basis.size, "node-variant filter");
    if (taps.rows() != basis.size) {
        throw ShapeError("node-variant filter: tap rows must equal graph size");
    }
    if (taps.order() > basis.order) {
        throw ShapeError("node-variant filter: tap order exceeds basis Vandermonde order");
    }
    const CMatrix lambda = basis.vandermonde.leftCols(idx(taps.order() + 1));
    const CMatrix response = basis.eigenvectors.cwiseProduct(taps.matrix() * lambda.transpose());
    return basis.forward * (response * spectrum);
}

SpectralFilterPlan::SpectralFilterPlan(std::size_t seq_len, const TapMatrix& taps, FilterMode mode)
    : seq_len_(seq_len) {
    if (seq_len == 0) {
        throw ShapeError("filter plan: sequence length must be positive");
    }
    if (taps.rows() != seq_len) {
        throw ShapeError("filter plan: taps must have one row per sequence position");
    }
    const std::size_t order = taps.order();
    const std::size_t graph = mode == FilterMode::causal ? seq_len + order : seq_len;
    basis_ = make_basis(graph, order);

    // Padded rows of H are zero, so only the first N rows of the response survive.
    const Index n = idx(seq_len);
    response_ = basis_.eigenvectors.topRows(n).cwiseProduct(taps.matrix() * basis_.vandermonde.transpose());
    analysis_ = basis_.forward.leftCols(n);
}

Tensor2 SpectralFilterPlan::apply(const Tensor2& block) const {
    if (static_cast<std::size_t>(block.rows()) != seq_len_) {
        throw ShapeError("filter plan: block has " + std::to_string(block.rows()) + " rows, expected " +
                         std::to_string(seq_len_));
    }
    const CMatrix spectrum = analysis_ * block.cast<Complex>();
    return (response_ * spectrum).real();
}

Tensor2 causal_filter(std::size_t seq_len, std::size_t order, const TapMatrix& taps, const Tensor2& x) {
    check_filter_shapes(seq_len, order, taps, x);
    return SpectralFilterPlan(seq_len, taps, FilterMode::causal).apply(x);
}

Tensor2 circular_filter(std::size_t seq_len, std::size_t order, const TapMatrix& taps, const Tensor2& x) {
    check_filter_shapes(seq_len, order, taps, x);
    return SpectralFilterPlan(seq_len, taps, FilterMode::circular).apply(x);
}

Tensor2 precompute_operator(std::size_t seq_len, std::size_t order, const TapMatrix& taps) {
    if (taps.rows() != seq_len || taps.order() != order) {
        throw ShapeError("precompute_operator: tap shape does not match (N, K)");
    }
    const Index n = idx(seq_len);
    Tensor2 g = Tensor2::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        const Index last = std::min<Index>(i, idx(order));
        for (Index k = 0; k <= last; ++k) {
            g(i, i - k) = taps.matrix()(i, k).real();
        }
    }
    return g;
}

Tensor2 precompute_circular_operator(std::size_t seq_len, std::size_t order, const TapMatrix& taps) {
    if (taps.rows() != seq_len || taps.order() != order) {
        throw ShapeError("precompute_circular_operator: tap shape does not match (N, K)");
    }
    const Index n = idx(seq_len);
    Tensor2 g = Tensor2::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k <= idx(order); ++k) {
            g(i, ((i - k) % n + n) % n) += taps.matrix()(i, k).real();
        }
    }
    return g;
}

} // namespace tvrec::spectral
