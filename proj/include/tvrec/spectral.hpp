#pragma once

// Graph signal processing on the directed cyclic graph: shift operator,
// DFT-based graph Fourier transform, and node-variant (time-variant) filters
// evaluated either by repeated shifting or through the frequency response.

#include <cstddef>

#include "tvrec/tensor.hpp"

namespace tvrec::spectral {

/// Cyclic delay on M nodes: node i receives the value of node (i - 1) mod M.
class ShiftOperator {
public:
    explicit ShiftOperator(std::size_t size);

    std::size_t size() const { return size_; }

    CVector apply(const CVector& x) const;
    /// Permutation matrix with row i holding a single 1 at column (i - 1) mod M.
    Eigen::MatrixXd dense() const;

private:
    std::size_t size_;
};

/// Eigendecomposition of the cyclic shift, S = U diag(lambda) U^H.
///
/// `forward` is the unitary DFT matrix, forward(k, n) = exp(-2 pi i k n / M) / sqrt(M),
/// and maps a time-domain signal to its spectrum. `eigenvectors` is its
/// conjugate transpose (the inverse transform); column n is the eigenvector for
/// eigenvalue lambda_n = exp(-2 pi i n / M). `vandermonde(n, k) = lambda_n^k`
/// for k = 0..order.
struct SpectralBasis {
    std::size_t size = 0;
    std::size_t order = 0;
    CMatrix forward;
    CMatrix eigenvectors;
    CVector eigenvalues;
    CMatrix vandermonde;

    CVector gft(const CVector& x) const;
    CVector igft(const CVector& spectrum) const;
};

/// Complex N x (K+1) matrix of per-node filter taps; row i holds h_k^{(i)}.
class TapMatrix {
public:
    TapMatrix() = default;
    /// Throws NumericError on non-finite entries.
    explicit TapMatrix(CMatrix taps);

    std::size_t rows() const { return static_cast<std::size_t>(taps_.rows()); }
    /// Filter order K (number of columns minus one).
    std::size_t order() const { return static_cast<std::size_t>(taps_.cols()) - 1; }
    const CMatrix& matrix() const { return taps_; }
    Complex operator()(std::size_t i, std::size_t k) const {
        return taps_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }

    /// Same taps with zero rows appended up to `rows` rows.
    TapMatrix zero_extended(std::size_t rows) const;

private:
    CMatrix taps_;
};

ShiftOperator make_shift(std::size_t size);
SpectralBasis make_basis(std::size_t size, std::size_t order);

/// Sum_k h_k S^k x by repeated shifting.
CVector apply_fixed_filter_time(std::size_t size, const CVector& taps, const CVector& x);
/// Forward GFT, multiply by the frequency response sum_k h_k lambda^k, inverse GFT.
CVector apply_fixed_filter_freq(const SpectralBasis& basis, const CVector& taps, const CVector& x);

/// Sum_k diag(h_k) S^k x by repeated shifting; the time-domain reference.
CVector apply_nv_filter_time(std::size_t size, const TapMatrix& taps, const CVector& x);
/// Spectrum-to-spectrum node-variant response U^H (U o (H Lambda^T)) x_spec.
CVector apply_nv_filter_freq(const SpectralBasis& basis, const TapMatrix& taps, const CVector& spectrum);

enum class FilterMode { causal, circular };

/// Node-variant filtering of a real N x D block, one graph signal per column.
///
/// In causal mode the block is zero-padded to M = N + K nodes and the taps are
/// extended with K zero rows; in circular mode the graph has exactly N nodes.
/// The operator (U o (H Lambda^T)) U^H is assembled once at construction, so
/// applying the plan to many blocks costs two dense products each.
class SpectralFilterPlan {
public:
    SpectralFilterPlan(std::size_t seq_len, const TapMatrix& taps, FilterMode mode);

    std::size_t seq_len() const { return seq_len_; }
    std::size_t graph_size() const { return basis_.size; }

    /// Real part of the first N filtered rows.
    Tensor2 apply(const Tensor2& block) const;

private:
    std::size_t seq_len_;
    SpectralBasis basis_;
    CMatrix response_;  // N x M rows of U o (H Lambda^T)
    CMatrix analysis_;  // M x N leading columns of the forward transform
};

/// Padded-DCG filtering of X (N x D) with N-row taps of order K.
Tensor2 causal_filter(std::size_t seq_len, std::size_t order, const TapMatrix& taps, const Tensor2& x);
/// Filtering on the unpadded N-node cycle (the literal N x N transform).
Tensor2 circular_filter(std::size_t seq_len, std::size_t order, const TapMatrix& taps, const Tensor2& x);

/// Banded lower-triangular G with causal_filter(X) == G X;
/// G(i, j) = Re h_{i-j}^{(i)} for 0 <= i - j <= K.
Tensor2 precompute_operator(std::size_t seq_len, std::size_t order, const TapMatrix& taps);
/// Circulant-pattern G with circular_filter(X) == G X.
Tensor2 precompute_circular_operator(std::size_t seq_len, std::size_t order, const TapMatrix& taps);

} // namespace tvrec::spectral
