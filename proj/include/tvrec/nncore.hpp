#pragma once

// Forward and backward kernels for the handful of layers the encoder uses,
// plus Adam. Every kernel works in double precision on row-major Tensor2.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tvrec/tensor.hpp"

namespace tvrec::nn {

using Rng = std::mt19937_64;

/// Real and imaginary parts of a complex parameter, stored separately.
struct ComplexPair {
    Tensor2 real;
    Tensor2 imag;
};

// ---------------------------------------------------------------- layer norm

struct LayerNormCache {
    Tensor2 normalized;        // (x - mean) / sqrt(var + eps)
    Eigen::VectorXd inv_std;   // per row
};

struct LayerNormGrads {
    Tensor2 input;
    Tensor2 gamma;
    Tensor2 beta;
};

/// Per-row standardisation, scaled by gamma and shifted by beta (both 1 x D).
Tensor2 layer_norm(const Tensor2& x, const Tensor2& gamma, const Tensor2& beta, double eps,
                   LayerNormCache* cache = nullptr);
LayerNormGrads layer_norm_backward(const Tensor2& grad_out, const Tensor2& gamma, const LayerNormCache& cache);

// ---------------------------------------------------------------- gelu

/// Exact GELU, x * Phi(x).
Tensor2 gelu(const Tensor2& x);
Tensor2 gelu_backward(const Tensor2& grad_out, const Tensor2& x);

// ---------------------------------------------------------------- dropout

/// Per-entry multiplier (0 or 1/(1-p)); empty when dropout was the identity.
struct DropoutMask {
    Tensor2 scale;
    bool empty() const { return scale.size() == 0; }
};

/// Inverted dropout. Identity (and an empty mask) when `training` is false or p == 0.
Tensor2 dropout(const Tensor2& x, double rate, Rng& rng, bool training, DropoutMask* mask = nullptr);
Tensor2 dropout_backward(const Tensor2& grad_out, const DropoutMask& mask);

// ---------------------------------------------------------------- loss terms

struct XentResult {
    double loss = 0.0;
    RowVector grad;
};

/// Cross-entropy of a full softmax over the non-excluded entries of `logits`.
/// Excluded entries get zero probability and zero gradient.
XentResult softmax_xent(const Eigen::Ref<const RowVector>& logits, std::size_t target,
                        std::span<const std::size_t> exclude = {});

struct OrthoResult {
    double penalty = 0.0;
    Tensor2 grad_real;
    Tensor2 grad_imag;
};

/// alpha * (||Br Br^T - I||_F^2 + ||Bi Bi^T - I||_F^2) and its gradients.
OrthoResult ortho_penalty(const ComplexPair& basis, double alpha);

// ---------------------------------------------------------------- adam

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Tensor2> first_moment;
    std::vector<Tensor2> second_moment;
};

/// One bias-corrected Adam update. Moments are allocated on the first call and
/// must keep the same shapes afterwards.
void adam_step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads, AdamState& state);

} // namespace tvrec::nn
