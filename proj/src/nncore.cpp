#include "tvrec/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "tvrec/error.hpp"

namespace tvrec::nn {

using Index = Eigen::Index;

Tensor2 layer_norm(const Tensor2& x, const Tensor2& gamma, const Tensor2& beta, double eps, LayerNormCache* cache) {
    const Index d = x.cols();
    if (d == 0) {
        throw ShapeError("layer_norm: zero feature dimension");
    }
    if (gamma.size() != d || beta.size() != d) {
        throw ShapeError("layer_norm: gamma/beta length " + std::to_string(gamma.size()) +
                         " does not match feature dimension " + std::to_string(d));
    }
    if (!(eps > 0.0)) {
        throw InvalidArgument("layer_norm: eps must be positive");
    }

    Tensor2 normalized(x.rows(), d);
    Eigen::VectorXd inv_std(x.rows());
    for (Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const auto centered = (x.row(r).array() - mean).matrix();
        const double var = centered.squaredNorm() / static_cast<double>(d);
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        normalized.row(r) = centered * inv_std(r);
    }

    Tensor2 out(x.rows(), d);
    const auto g = gamma.reshaped<Eigen::RowMajor>().transpose();
    const auto b = beta.reshaped<Eigen::RowMajor>().transpose();
    for (Index r = 0; r < x.rows(); ++r) {
        out.row(r) = normalized.row(r).cwiseProduct(g) + b;
    }
    if (cache != nullptr) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

LayerNormGrads layer_norm_backward(const Tensor2& grad_out, const Tensor2& gamma, const LayerNormCache& cache) {
    const Tensor2& xhat = cache.normalized;
    const Index d = xhat.cols();
    LayerNormGrads g;
    g.gamma = grad_out.cwiseProduct(xhat).colwise().sum();
    g.beta = grad_out.colwise().sum();
    g.input.resize(xhat.rows(), d);

    const auto gam = gamma.reshaped<Eigen::RowMajor>().transpose();
    const double inv_d = 1.0 / static_cast<double>(d);
    for (Index r = 0; r < xhat.rows(); ++r) {
        const RowVector dxhat = grad_out.row(r).cwiseProduct(gam);
        const double mean_dxhat = dxhat.sum() * inv_d;
        const double mean_dxhat_xhat = dxhat.dot(xhat.row(r)) * inv_d;
        g.input.row(r) = cache.inv_std(r) *
                         (dxhat.array() - mean_dxhat - xhat.row(r).array() * mean_dxhat_xhat).matrix();
    }
    return g;
}

Tensor2 gelu(const Tensor2& x) {
    return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
}

Tensor2 gelu_backward(const Tensor2& grad_out, const Tensor2& x) {
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    const Tensor2 slope = x.unaryExpr([inv_sqrt_2pi](double v) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
    });
    return grad_out.cwiseProduct(slope);
}

Tensor2 dropout(const Tensor2& x, double rate, Rng& rng, bool training, DropoutMask* mask) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw InvalidArgument("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (mask != nullptr) {
        mask->scale.resize(0, 0);
    }
    if (!training || rate == 0.0) {
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Tensor2 scale(x.rows(), x.cols());
    for (Index i = 0; i < scale.size(); ++i) {
        scale.data()[i] = unif(rng) < rate ? 0.0 : keep_scale;
    }
    Tensor2 out = x.cwiseProduct(scale);
    if (mask != nullptr) {
        mask->scale = std::move(scale);
    }
    return out;
}

Tensor2 dropout_backward(const Tensor2& grad_out, const DropoutMask& mask) {
    if (mask.empty()) {
        return grad_out;
    }
    return grad_out.cwiseProduct(mask.scale);
}

XentResult softmax_xent(const Eigen::Ref<const RowVector>& logits, std::size_t target,
                        std::span<const std::size_t> exclude) {
    const auto size = static_cast<std::size_t>(logits.size());
    if (size < 2) {
        throw InvalidArgument("softmax_xent: need at least two classes");
    }
    if (target >= size) {
        throw InvalidArgument("softmax_xent: target " + std::to_string(target) + " out of range");
    }
    std::vector<char> active(size, 1);
    for (std::size_t e : exclude) {
        if (e < size) {
            active[e] = 0;
        }
    }
    if (!active[target]) {
        throw InvalidArgument("softmax_xent: target " + std::to_string(target) + " is excluded");
    }

    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < size; ++v) {
        if (active[v]) {
            max_logit = std::max(max_logit, logits(static_cast<Index>(v)));
        }
    }
    double denom = 0.0;
    XentResult res;
    res.grad = RowVector::Zero(logits.size());
    for (std::size_t v = 0; v < size; ++v) {
        if (active[v]) {
            const double e = std::exp(logits(static_cast<Index>(v)) - max_logit);
            res.grad(static_cast<Index>(v)) = e;
            denom += e;
        }
    }
    res.grad /= denom;
    res.loss = -(logits(static_cast<Index>(target)) - max_logit - std::log(denom));
    res.grad(static_cast<Index>(target)) -= 1.0;
    return res;
}

OrthoResult ortho_penalty(const ComplexPair& basis, double alpha) {
    if (alpha < 0.0) {
        throw InvalidArgument("ortho_penalty: alpha must be non-negative");
    }
    if (basis.real.rows() != basis.imag.rows() || basis.real.cols() != basis.imag.cols()) {
        throw ShapeError("ortho_penalty: real and imaginary parts differ in shape");
    }
    OrthoResult res;
    res.grad_real = Tensor2::Zero(basis.real.rows(), basis.real.cols());
    res.grad_imag = Tensor2::Zero(basis.imag.rows(), basis.imag.cols());
    if (alpha == 0.0) {
        return res;
    }
    const auto part = [alpha](const Tensor2& b, Tensor2& grad) {
        Tensor2 gram = b * b.transpose();
        gram.diagonal().array() -= 1.0;
        grad = 4.0 * alpha * gram * b;
        return gram.squaredNorm();
    };
    res.penalty = alpha * (part(basis.real, res.grad_real) + part(basis.imag, res.grad_imag));
    return res;
}

void adam_step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads, AdamState& state) {
    if (params.size() != grads.size()) {
        throw ShapeError("adam_step: parameter and gradient counts differ");
    }
    if (state.first_moment.empty()) {
        for (const Tensor2* p : params) {
            state.first_moment.push_back(Tensor2::Zero(p->rows(), p->cols()));
            state.second_moment.push_back(Tensor2::Zero(p->rows(), p->cols()));
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ShapeError("adam_step: optimizer state tracks a different parameter count");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor2& g = *grads[i];
        if (g.rows() != params[i]->rows() || g.cols() != params[i]->cols() ||
            g.rows() != state.first_moment[i].rows() || g.cols() != state.first_moment[i].cols()) {
            throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(i));
        }
    }

    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor2& g = *grads[i];
        Tensor2& m = state.first_moment[i];
        Tensor2& v = state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
        params[i]->array() -=
            state.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.eps);
    }
}

} // namespace tvrec::nn
