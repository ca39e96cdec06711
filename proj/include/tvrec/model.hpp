#pragma once

// The time-variant encoder: embedding layer, L filter/FFN blocks, and the
// tied-embedding prediction head, with explicit backward rules for training.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tvrec/nncore.hpp"
#include "tvrec/spectral.hpp"
#include "tvrec/tensor.hpp"

namespace tvrec {

using ItemId = std::uint32_t;

} // namespace tvrec

namespace tvrec::model {

using spectral::FilterMode;

struct ModelConfig {
    std::size_t num_items = 0;       // |V|; ids run 1..num_items, 0 is padding
    std::size_t max_len = 50;        // N
    std::size_t dim = 64;            // D
    std::size_t layers = 2;          // L
    std::size_t basis_count = 8;     // m
    std::optional<std::size_t> filter_order;  // K, defaults to N
    std::size_t ffn_hidden = 0;      // 0 means D
    double dropout = 0.1;
    FilterMode mode = FilterMode::causal;
    double layer_norm_eps = 1e-12;

    std::size_t order() const { return filter_order.value_or(max_len); }
    std::size_t hidden() const { return ffn_hidden == 0 ? dim : ffn_hidden; }
    /// Throws InvalidArgument describing the first violated constraint.
    void validate() const;
};

std::string to_string(FilterMode mode);
FilterMode parse_filter_mode(const std::string& text);

struct FilterParams {
    Tensor2 coeffs;        // C, N x m
    nn::ComplexPair basis; // B, m x (K+1)
};

struct BlockParams {
    FilterParams filter;
    Tensor2 ln1_gamma, ln1_beta;
    Tensor2 w1, b1, w2, b2;
    Tensor2 ln2_gamma, ln2_beta;
};

struct ModelParams {
    Tensor2 embedding;  // (|V|+1) x D, row 0 is the padding item
    Tensor2 emb_gamma, emb_beta;
    std::vector<BlockParams> blocks;
};

/// Normal(0, 0.02) weights, zero biases and betas, unit gammas.
ModelParams init_params(const ModelConfig& config, nn::Rng& rng);
/// Same shapes, all zeros (gradient accumulators).
ModelParams zeros_like(const ModelParams& params);

struct NamedTensor {
    std::string name;
    Tensor2* tensor;
};
struct ConstNamedTensor {
    std::string name;
    const Tensor2* tensor;
};

/// Stable traversal order used by the optimizer and the checkpoint format.
std::vector<NamedTensor> named_tensors(ModelParams& params);
std::vector<ConstNamedTensor> named_tensors(const ModelParams& params);
std::size_t parameter_count(const ModelParams& params);

// ------------------------------------------------------------------ filters

/// Row-normalised basis B / ||B_row|| together with the row norms.
struct NormalizedBasis {
    Tensor2 real;
    Tensor2 imag;
    Eigen::VectorXd norms;
};

/// Throws NumericError when a row of B has zero modulus.
NormalizedBasis normalize_basis(const nn::ComplexPair& basis);

/// H = C * normalize_basis(B).
spectral::TapMatrix build_H(const FilterParams& filter);

struct FilterGrads {
    Tensor2 coeffs;
    Tensor2 basis_real;
    Tensor2 basis_imag;
};

/// Chain rule through H = C * (B / ||B_row||) given dL/dRe(H) and dL/dIm(H).
FilterGrads build_H_backward(const FilterParams& filter, const Tensor2& grad_real, const Tensor2& grad_imag);

/// Per-layer filter application: either precomputed real N x N operators
/// (frozen) or spectral plans that go through the graph Fourier transform.
class FilterBank {
public:
    static FilterBank from_operators(std::vector<Tensor2> operators);
    static FilterBank from_plans(std::vector<spectral::SpectralFilterPlan> plans);

    bool frozen() const { return plans_.empty(); }
    std::size_t layers() const { return frozen() ? operators_.size() : plans_.size(); }
    const std::vector<Tensor2>& operators() const { return operators_; }

    /// Filter every N-row sequence block of a stacked (B*N) x D matrix.
    Tensor2 apply(std::size_t layer, const Tensor2& stacked, std::size_t seq_len) const;

private:
    std::vector<Tensor2> operators_;
    std::vector<spectral::SpectralFilterPlan> plans_;
};

/// Per-layer real operators G_eff with filter(X) == G_eff X.
FilterBank freeze_filters(const ModelParams& params, const ModelConfig& config);
/// Per-layer spectral plans built from the current taps (the unfrozen path).
FilterBank spectral_filters(const ModelParams& params, const ModelConfig& config);

// ------------------------------------------------------------------ forward

struct EmbedCache {
    std::vector<ItemId> ids;
    nn::LayerNormCache norm;
    nn::DropoutMask drop;
};

struct BlockCache {
    Tensor2 input;
    nn::DropoutMask filter_drop;
    nn::LayerNormCache norm1;
    Tensor2 ffn_in;
    Tensor2 pre_act;
    Tensor2 act;
    nn::DropoutMask ffn_drop;
    nn::LayerNormCache norm2;
};

struct EncodeCache {
    std::size_t batch = 0;
    std::vector<BlockCache> blocks;
    std::vector<Tensor2> filter_outputs;  // X-hat per layer, before dropout
};

/// Lookup, layer norm and dropout for `batch` left-padded id rows of length N,
/// stacked into a (batch*N) x D matrix.
Tensor2 embed_batch(std::span<const ItemId> ids, std::size_t batch, const ModelParams& params,
                    const ModelConfig& config, nn::Rng& rng, bool training, EmbedCache* cache = nullptr);
/// Single sequence of length N.
Tensor2 embed(std::span<const ItemId> seq, const ModelParams& params, const ModelConfig& config, nn::Rng& rng,
              bool training);

/// L encoder blocks over stacked sequences.
Tensor2 encode_batch(const Tensor2& x0, std::size_t batch, const ModelParams& params, const ModelConfig& config,
                     const FilterBank& filters, nn::Rng& rng, bool training, EncodeCache* cache = nullptr);
/// Single sequence through the spectral (unfrozen) filter path.
Tensor2 encode(const Tensor2& x0, const ModelParams& params, const ModelConfig& config, nn::Rng& rng,
               bool training);

/// Scores for items 0..|V| from the final row of each sequence; column 0
/// (padding) is -infinity. Evaluation mode, no dropout.
Tensor2 score_batch(std::span<const ItemId> ids, std::size_t batch, const ModelParams& params,
                    const ModelConfig& config, const FilterBank& filters);
RowVector predict_scores(std::span<const ItemId> seq, const ModelParams& params, const ModelConfig& config,
                         const FilterBank* filters = nullptr);

// ------------------------------------------------------------------ backward

/// Backpropagates dL/d(encoder output) through the blocks and the embedding
/// layer, accumulating into `grads`. `filters` must be the frozen bank the
/// forward pass used.
void backward_batch(const Tensor2& grad_out, const ModelParams& params, const ModelConfig& config,
                    const FilterBank& filters, const EmbedCache& embed_cache, const EncodeCache& encode_cache,
                    ModelParams& grads);

} // namespace tvrec::model
