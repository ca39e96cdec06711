#include "tvrec/model.hpp"

#include <cmath>
#include <limits>

#include "tvrec/error.hpp"

namespace tvrec::model {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

Tensor2 normal_tensor(Index rows, Index cols, nn::Rng& rng) {
    std::normal_distribution<double> dist(0.0, 0.02);
    Tensor2 t(rows, cols);
    for (Index i = 0; i < t.size(); ++i) {
        t.data()[i] = dist(rng);
    }
    return t;
}

Tensor2 add_row(const Tensor2& x, const Tensor2& bias) { return x.rowwise() + bias.row(0); }

void require_batch_shape(std::span<const ItemId> ids, std::size_t batch, const ModelConfig& config) {
    if (ids.size() != batch * config.max_len) {
        throw ShapeError("expected " + std::to_string(batch) + " rows of length " + std::to_string(config.max_len) +
                         ", got " + std::to_string(ids.size()) + " ids");
    }
}

} // namespace

void ModelConfig::validate() const {
    if (num_items < 1) {
        throw InvalidArgument("model config: need at least one item");
    }
    if (max_len < 1) {
        throw InvalidArgument("model config: max_len must be >= 1");
    }
    if (dim < 1) {
        throw InvalidArgument("model config: dim must be >= 1");
    }
    if (layers < 1) {
        throw InvalidArgument("model config: layers must be >= 1");
    }
    if (basis_count < 1 || basis_count > max_len) {
        throw InvalidArgument("model config: basis count m must satisfy 1 <= m <= N");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw InvalidArgument("model config: dropout must lie in [0, 1)");
    }
    if (!(layer_norm_eps > 0.0)) {
        throw InvalidArgument("model config: layer norm eps must be positive");
    }
}

std::string to_string(FilterMode mode) { return mode == FilterMode::causal ? "causal" : "circular"; }

FilterMode parse_filter_mode(const std::string& text) {
    if (text == "causal") {
        return FilterMode::causal;
    }
    if (text == "circular") {
        return FilterMode::circular;
    }
    throw InvalidArgument("unknown filter mode '" + text + "' (expected causal or circular)");
}

ModelParams init_params(const ModelConfig& config, nn::Rng& rng) {
    config.validate();
    const Index d = idx(config.dim);
    const Index hidden = idx(config.hidden());
    const Index taps = idx(config.order() + 1);

    ModelParams p;
    p.embedding = normal_tensor(idx(config.num_items + 1), d, rng);
    p.emb_gamma = Tensor2::Ones(1, d);
    p.emb_beta = Tensor2::Zero(1, d);
    for (std::size_t l = 0; l < config.layers; ++l) {
        BlockParams b;
        b.filter.coeffs = normal_tensor(idx(config.max_len), idx(config.basis_count), rng);
        b.filter.basis.real = normal_tensor(idx(config.basis_count), taps, rng);
        b.filter.basis.imag = normal_tensor(idx(config.basis_count), taps, rng);
        b.ln1_gamma = Tensor2::Ones(1, d);
        b.ln1_beta = Tensor2::Zero(1, d);
        b.w1 = normal_tensor(d, hidden, rng);
        b.b1 = Tensor2::Zero(1, hidden);
        b.w2 = normal_tensor(hidden, d, rng);
        b.b2 = Tensor2::Zero(1, d);
        b.ln2_gamma = Tensor2::Ones(1, d);
        b.ln2_beta = Tensor2::Zero(1, d);
        p.blocks.push_back(std::move(b));
    }
    return p;
}

ModelParams zeros_like(const ModelParams& params) {
    ModelParams z = params;
    for (auto& [name, t] : named_tensors(z)) {
        t->setZero();
    }
    return z;
}

std::vector<NamedTensor> named_tensors(ModelParams& params) {
    std::vector<NamedTensor> out;
    out.push_back({"embedding", &params.embedding});
    out.push_back({"emb_gamma", &params.emb_gamma});
    out.push_back({"emb_beta", &params.emb_beta});
    for (std::size_t l = 0; l < params.blocks.size(); ++l) {
        BlockParams& b = params.blocks[l];
        const std::string pre = "block" + std::to_string(l) + ".";
        out.push_back({pre + "coeffs", &b.filter.coeffs});
        out.push_back({pre + "basis_real", &b.filter.basis.real});
        out.push_back({pre + "basis_imag", &b.filter.basis.imag});
        out.push_back({pre + "ln1_gamma", &b.ln1_gamma});
        out.push_back({pre + "ln1_beta", &b.ln1_beta});
        out.push_back({pre + "w1", &b.w1});
        out.push_back({pre + "b1", &b.b1});
        out.push_back({pre + "w2", &b.w2});
        out.push_back({pre + "b2", &b.b2});
        out.push_back({pre + "ln2_gamma", &b.ln2_gamma});
        out.push_back({pre + "ln2_beta", &b.ln2_beta});
    }
    return out;
}

std::vector<ConstNamedTensor> named_tensors(const ModelParams& params) {
    std::vector<ConstNamedTensor> out;
    for (auto& [name, t] : named_tensors(const_cast<ModelParams&>(params))) {
        out.push_back({name, t});
    }
    return out;
}

std::size_t parameter_count(const ModelParams& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : named_tensors(params)) {
        n += static_cast<std::size_t>(t->size());
    }
    return n;
}

// ------------------------------------------------------------------ filters

NormalizedBasis normalize_basis(const nn::ComplexPair& basis) {
    NormalizedBasis nb;
    nb.norms = (basis.real.cwiseAbs2() + basis.imag.cwiseAbs2()).rowwise().sum().cwiseSqrt();
    for (Index r = 0; r < nb.norms.size(); ++r) {
        if (!(nb.norms(r) > 0.0) || !std::isfinite(nb.norms(r))) {
            throw NumericError("basis row " + std::to_string(r) + " has zero or non-finite norm; cannot normalise");
        }
    }
    const Eigen::VectorXd inv = nb.norms.cwiseInverse();
    nb.real = inv.asDiagonal() * basis.real;
    nb.imag = inv.asDiagonal() * basis.imag;
    return nb;
}

spectral::TapMatrix build_H(const FilterParams& filter) {
    if (filter.coeffs.cols() != filter.basis.real.rows()) {
        throw ShapeError("build_H: coefficient columns must equal basis rows");
    }
    const NormalizedBasis nb = normalize_basis(filter.basis);
    CMatrix h(filter.coeffs.rows(), nb.real.cols());
    h.real() = filter.coeffs * nb.real;
    h.imag() = filter.coeffs * nb.imag;
    return spectral::TapMatrix(std::move(h));
}

FilterGrads build_H_backward(const FilterParams& filter, const Tensor2& grad_real, const Tensor2& grad_imag) {
    const NormalizedBasis nb = normalize_basis(filter.basis);
    FilterGrads g;
    g.coeffs = grad_real * nb.real.transpose() + grad_imag * nb.imag.transpose();
    const Tensor2 d_norm_real = filter.coeffs.transpose() * grad_real;
    const Tensor2 d_norm_imag = filter.coeffs.transpose() * grad_imag;

    // d(b / n) with n = ||b||: (g - bbar * <g, bbar>) / n, over the stacked real/imag row.
    const Eigen::VectorXd proj = (d_norm_real.cwiseProduct(nb.real) + d_norm_imag.cwiseProduct(nb.imag)).rowwise().sum();
    const Eigen::VectorXd inv = nb.norms.cwiseInverse();
    g.basis_real = inv.asDiagonal() * (d_norm_real - proj.asDiagonal() * nb.real);
    g.basis_imag = inv.asDiagonal() * (d_norm_imag - proj.asDiagonal() * nb.imag);
    return g;
}

FilterBank FilterBank::from_operators(std::vector<Tensor2> operators) {
    FilterBank b;
    b.operators_ = std::move(operators);
    return b;
}

FilterBank FilterBank::from_plans(std::vector<spectral::SpectralFilterPlan> plans) {
    FilterBank b;
    b.plans_ = std::move(plans);
    return b;
}

Tensor2 FilterBank::apply(std::size_t layer, const Tensor2& stacked, std::size_t seq_len) const {
    if (layer >= layers()) {
        throw ShapeError("filter bank has no layer " + std::to_string(layer));
    }
    const Index n = idx(seq_len);
    if (stacked.rows() % n != 0) {
        throw ShapeError("stacked block rows are not a multiple of the sequence length");
    }
    Tensor2 out(stacked.rows(), stacked.cols());
    for (Index start = 0; start < stacked.rows(); start += n) {
        if (frozen()) {
            out.middleRows(start, n).noalias() = operators_[layer] * stacked.middleRows(start, n);
        } else {
            out.middleRows(start, n) = plans_[layer].apply(stacked.middleRows(start, n));
        }
    }
    return out;
}

FilterBank freeze_filters(const ModelParams& params, const ModelConfig& config) {
    std::vector<Tensor2> ops;
    ops.reserve(params.blocks.size());
    for (const BlockParams& b : params.blocks) {
        const spectral::TapMatrix h = build_H(b.filter);
        ops.push_back(config.mode == FilterMode::causal
                          ? spectral::precompute_operator(config.max_len, config.order(), h)
                          : spectral::precompute_circular_operator(config.max_len, config.order(), h));
    }
    return FilterBank::from_operators(std::move(ops));
}

FilterBank spectral_filters(const ModelParams& params, const ModelConfig& config) {
    std::vector<spectral::SpectralFilterPlan> plans;
    plans.reserve(params.blocks.size());
    for (const BlockParams& b : params.blocks) {
        plans.emplace_back(config.max_len, build_H(b.filter), config.mode);
    }
    return FilterBank::from_plans(std::move(plans));
}

// ------------------------------------------------------------------ forward

Tensor2 embed_batch(std::span<const ItemId> ids, std::size_t batch, const ModelParams& params,
                    const ModelConfig& config, nn::Rng& rng, bool training, EmbedCache* cache) {
    require_batch_shape(ids, batch, config);
    Tensor2 looked_up(idx(ids.size()), params.embedding.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] > config.num_items) {
            throw InvalidArgument("item id " + std::to_string(ids[r]) + " exceeds vocabulary size " +
                                  std::to_string(config.num_items));
        }
        looked_up.row(idx(r)) = params.embedding.row(idx(ids[r]));
    }
    nn::LayerNormCache* norm_cache = cache != nullptr ? &cache->norm : nullptr;
    nn::DropoutMask* mask = cache != nullptr ? &cache->drop : nullptr;
    const Tensor2 normed =
        nn::layer_norm(looked_up, params.emb_gamma, params.emb_beta, config.layer_norm_eps, norm_cache);
    if (cache != nullptr) {
        cache->ids.assign(ids.begin(), ids.end());
    }
    return nn::dropout(normed, config.dropout, rng, training, mask);
}

Tensor2 embed(std::span<const ItemId> seq, const ModelParams& params, const ModelConfig& config, nn::Rng& rng,
              bool training) {
    return embed_batch(seq, 1, params, config, rng, training);
}

Tensor2 encode_batch(const Tensor2& x0, std::size_t batch, const ModelParams& params, const ModelConfig& config,
                     const FilterBank& filters, nn::Rng& rng, bool training, EncodeCache* cache) {
    if (static_cast<std::size_t>(x0.rows()) != batch * config.max_len || x0.cols() != idx(config.dim)) {
        throw ShapeError("encode: input block shape does not match batch x N x D");
    }
    if (filters.layers() != params.blocks.size()) {
        throw ShapeError("encode: filter bank and model disagree on layer count");
    }
    if (cache != nullptr) {
        cache->batch = batch;
        cache->blocks.assign(params.blocks.size(), BlockCache{});
        cache->filter_outputs.clear();
    }
    Tensor2 x = x0;
    for (std::size_t l = 0; l < params.blocks.size(); ++l) {
        const BlockParams& b = params.blocks[l];
        BlockCache* bc = cache != nullptr ? &cache->blocks[l] : nullptr;

        const Tensor2 filtered = filters.apply(l, x, config.max_len);
        const Tensor2 filtered_drop =
            nn::dropout(filtered, config.dropout, rng, training, bc != nullptr ? &bc->filter_drop : nullptr);
        const Tensor2 ffn_in = nn::layer_norm(x + filtered_drop, b.ln1_gamma, b.ln1_beta, config.layer_norm_eps,
                                              bc != nullptr ? &bc->norm1 : nullptr);

        Tensor2 pre_act = add_row(ffn_in * b.w1, b.b1);
        Tensor2 act = nn::gelu(pre_act);
        const Tensor2 ffn_out = add_row(act * b.w2, b.b2);
        const Tensor2 ffn_drop =
            nn::dropout(ffn_out, config.dropout, rng, training, bc != nullptr ? &bc->ffn_drop : nullptr);
        Tensor2 next = nn::layer_norm(ffn_in + ffn_drop, b.ln2_gamma, b.ln2_beta, config.layer_norm_eps,
                                      bc != nullptr ? &bc->norm2 : nullptr);

        if (bc != nullptr) {
            bc->input = std::move(x);
            bc->ffn_in = ffn_in;
            bc->pre_act = std::move(pre_act);
            bc->act = std::move(act);
            cache->filter_outputs.push_back(filtered);
        }
        x = std::move(next);
    }
    return x;
}

Tensor2 encode(const Tensor2& x0, const ModelParams& params, const ModelConfig& config, nn::Rng& rng,
               bool training) {
    return encode_batch(x0, 1, params, config, spectral_filters(params, config), rng, training);
}

Tensor2 score_batch(std::span<const ItemId> ids, std::size_t batch, const ModelParams& params,
                    const ModelConfig& config, const FilterBank& filters) {
    nn::Rng unused(0);
    const Tensor2 x0 = embed_batch(ids, batch, params, config, unused, false);
    const Tensor2 out = encode_batch(x0, batch, params, config, filters, unused, false);

    const Index n = idx(config.max_len);
    Tensor2 last(idx(batch), out.cols());
    for (Index b = 0; b < idx(batch); ++b) {
        last.row(b) = out.row(b * n + n - 1);
    }
    Tensor2 scores(idx(batch), params.embedding.rows());
    scores.noalias() = last * params.embedding.transpose();
    scores.col(0).setConstant(-std::numeric_limits<double>::infinity());
    return scores;
}

RowVector predict_scores(std::span<const ItemId> seq, const ModelParams& params, const ModelConfig& config,
                         const FilterBank* filters) {
    if (filters != nullptr) {
        return score_batch(seq, 1, params, config, *filters).row(0);
    }
    return score_batch(seq, 1, params, config, spectral_filters(params, config)).row(0);
}

// ------------------------------------------------------------------ backward

void backward_batch(const Tensor2& grad_out, const ModelParams& params, const ModelConfig& config,
                    const FilterBank& filters, const EmbedCache& embed_cache, const EncodeCache& encode_cache,
                    ModelParams& grads) {
    if (!filters.frozen()) {
        throw InvalidArgument("backward requires the operator (frozen) filter bank used in the forward pass");
    }
    const Index n = idx(config.max_len);
    const Index order = idx(config.order());
    Tensor2 dx = grad_out;

    for (std::size_t li = params.blocks.size(); li-- > 0;) {
        const BlockParams& b = params.blocks[li];
        const BlockCache& bc = encode_cache.blocks[li];
        BlockParams& gb = grads.blocks[li];

        const nn::LayerNormGrads ln2 = nn::layer_norm_backward(dx, b.ln2_gamma, bc.norm2);
        gb.ln2_gamma += ln2.gamma;
        gb.ln2_beta += ln2.beta;

        const Tensor2 d_ffn_out = nn::dropout_backward(ln2.input, bc.ffn_drop);
        gb.w2.noalias() += bc.act.transpose() * d_ffn_out;
        gb.b2 += d_ffn_out.colwise().sum();
        const Tensor2 d_pre = nn::gelu_backward(d_ffn_out * b.w2.transpose(), bc.pre_act);
        gb.w1.noalias() += bc.ffn_in.transpose() * d_pre;
        gb.b1 += d_pre.colwise().sum();
        Tensor2 d_ffn_in = ln2.input;
        d_ffn_in.noalias() += d_pre * b.w1.transpose();

        const nn::LayerNormGrads ln1 = nn::layer_norm_backward(d_ffn_in, b.ln1_gamma, bc.norm1);
        gb.ln1_gamma += ln1.gamma;
        gb.ln1_beta += ln1.beta;
        const Tensor2 d_filtered = nn::dropout_backward(ln1.input, bc.filter_drop);

        // Y_b = G X_b for every sequence block b.
        const Tensor2& g_op = filters.operators()[li];
        Tensor2 d_input = ln1.input;
        Tensor2 d_op = Tensor2::Zero(n, n);
        for (Index start = 0; start < d_filtered.rows(); start += n) {
            d_input.middleRows(start, n).noalias() += g_op.transpose() * d_filtered.middleRows(start, n);
            d_op.noalias() += d_filtered.middleRows(start, n) * bc.input.middleRows(start, n).transpose();
        }

        // Only Re(H) reaches the real output; dL/dIm(H) is zero.
        Tensor2 d_taps_real = Tensor2::Zero(n, order + 1);
        for (Index i = 0; i < n; ++i) {
            for (Index k = 0; k <= order; ++k) {
                if (config.mode == FilterMode::causal) {
                    if (k <= i) {
                        d_taps_real(i, k) = d_op(i, i - k);
                    }
                } else {
                    d_taps_real(i, k) = d_op(i, ((i - k) % n + n) % n);
                }
            }
        }
        const Tensor2 d_taps_imag = Tensor2::Zero(n, order + 1);
        const FilterGrads fg = build_H_backward(b.filter, d_taps_real, d_taps_imag);
        gb.filter.coeffs += fg.coeffs;
        gb.filter.basis.real += fg.basis_real;
        gb.filter.basis.imag += fg.basis_imag;

        dx = std::move(d_input);
    }

    const Tensor2 d_norm = nn::dropout_backward(dx, embed_cache.drop);
    const nn::LayerNormGrads ln0 = nn::layer_norm_backward(d_norm, params.emb_gamma, embed_cache.norm);
    grads.emb_gamma += ln0.gamma;
    grads.emb_beta += ln0.beta;
    for (std::size_t r = 0; r < embed_cache.ids.size(); ++r) {
        grads.embedding.row(idx(embed_cache.ids[r])) += ln0.input.row(idx(r));
    }
}

} // namespace tvrec::model
