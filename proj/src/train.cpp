#include "tvrec/train.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "tvrec/error.hpp"
#include "tvrec/eval.hpp"

namespace tvrec::train {

namespace {

using Index = Eigen::Index;

std::string parameter_norms(const model::ModelParams& params) {
    std::ostringstream os;
    os << std::setprecision(6);
    for (const auto& [name, t] : model::named_tensors(params)) {
        os << " " << name << "=" << t->norm();
    }
    return os.str();
}

void clip_gradients(model::ModelParams& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, t] : model::named_tensors(grads)) {
        sq += t->squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& [name, t] : model::named_tensors(grads)) {
            *t *= scale;
        }
    }
}

} // namespace

void TrainConfig::validate() const {
    if (!(lr > 0.0)) {
        throw InvalidArgument("learning rate must be positive");
    }
    if (!(alpha >= 0.0)) {
        throw InvalidArgument("alpha must be non-negative");
    }
    if (batch_size < 1) {
        throw InvalidArgument("batch size must be >= 1");
    }
    if (patience < 1) {
        throw InvalidArgument("patience must be >= 1");
    }
    if (clip_norm < 0.0) {
        throw InvalidArgument("clip norm must be non-negative");
    }
}

std::string TrainLog::to_csv(bool include_timing) const {
    std::ostringstream os;
    os << "epoch,ce,ortho,valid_ndcg20" << (include_timing ? ",seconds" : "") << "\n";
    os << std::setprecision(17);
    for (const auto& e : epochs) {
        os << e.epoch << "," << e.ce << "," << e.ortho << "," << e.valid_ndcg20;
        if (include_timing) {
            os << "," << std::setprecision(6) << e.seconds << std::setprecision(17);
        }
        os << "\n";
    }
    return os.str();
}

LossResult loss_and_grads(const data::SequenceBatch& batch, const model::ModelParams& params,
                          const model::ModelConfig& config, const TrainConfig& train_config, nn::Rng& rng,
                          bool training) {
    if (batch.seq_len != config.max_len) {
        throw ShapeError("batch sequence length differs from the model's max_len");
    }
    LossResult res;
    res.grads = model::zeros_like(params);

    const model::FilterBank filters = model::freeze_filters(params, config);
    model::EmbedCache embed_cache;
    model::EncodeCache encode_cache;
    const Tensor2 x0 = model::embed_batch(batch.ids, batch.batch, params, config, rng, training, &embed_cache);
    const Tensor2 out = model::encode_batch(x0, batch.batch, params, config, filters, rng, training, &encode_cache);

    std::vector<Index> rows;
    std::vector<ItemId> targets;
    for (std::size_t i = 0; i < batch.position_targets.size(); ++i) {
        if (batch.position_targets[i] != 0) {
            rows.push_back(static_cast<Index>(i));
            targets.push_back(batch.position_targets[i]);
        }
    }
    res.num_targets = rows.size();

    Tensor2 grad_out = Tensor2::Zero(out.rows(), out.cols());
    if (!rows.empty()) {
        const Index n_items = static_cast<Index>(config.num_items);
        Tensor2 states(static_cast<Index>(rows.size()), out.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            states.row(static_cast<Index>(r)) = out.row(rows[r]);
        }
        const auto items = params.embedding.bottomRows(n_items);
        Tensor2 logits(states.rows(), n_items);
        logits.noalias() = states * items.transpose();

        const double inv_count = 1.0 / static_cast<double>(rows.size());
        Tensor2 d_logits(states.rows(), n_items);
        double ce_sum = 0.0;
        for (Index r = 0; r < logits.rows(); ++r) {
            // Column v-1 holds item v; padding is not a candidate.
            const nn::XentResult x = nn::softmax_xent(logits.row(r), targets[static_cast<std::size_t>(r)] - 1);
            ce_sum += x.loss;
            d_logits.row(r) = x.grad * inv_count;
        }
        res.ce = ce_sum * inv_count;

        res.grads.embedding.bottomRows(n_items).noalias() += d_logits.transpose() * states;
        const Tensor2 d_states = d_logits * items;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            grad_out.row(rows[r]) = d_states.row(static_cast<Index>(r));
        }
    }

    model::backward_batch(grad_out, params, config, filters, embed_cache, encode_cache, res.grads);

    for (std::size_t l = 0; l < params.blocks.size(); ++l) {
        const nn::OrthoResult o = nn::ortho_penalty(params.blocks[l].filter.basis, train_config.alpha);
        res.ortho += o.penalty;
        res.grads.blocks[l].filter.basis.real += o.grad_real;
        res.grads.blocks[l].filter.basis.imag += o.grad_imag;
    }
    res.loss = res.ce + res.ortho;
    if (!std::isfinite(res.loss)) {
        throw NumericError("non-finite loss (ce=" + std::to_string(res.ce) + ", ortho=" + std::to_string(res.ortho) +
                           ")");
    }
    return res;
}

FitResult fit(const data::Corpus& corpus, const model::ModelConfig& config_in, const TrainConfig& train_config,
              const EpochCallback& on_epoch) {
    train_config.validate();
    model::ModelConfig config = config_in;
    if (config.num_items == 0) {
        config.num_items = corpus.num_items;
    }
    if (config.num_items != corpus.num_items) {
        throw InvalidArgument("model built for " + std::to_string(config.num_items) + " items, corpus has " +
                              std::to_string(corpus.num_items));
    }
    config.validate();

    nn::Rng rng(train_config.seed);
    const data::Split split = data::split_loo(corpus);
    // The circular graph wraps future positions into the past, so only the
    // final position may carry a target there.
    const bool dense = config.mode == model::FilterMode::causal;
    const auto examples = data::training_examples(split, dense);

    FitResult result;
    result.config = config;
    result.params = model::init_params(config, rng);
    model::ModelParams params = result.params;

    std::vector<Tensor2*> param_ptrs;
    for (auto& [name, t] : model::named_tensors(params)) {
        param_ptrs.push_back(t);
    }
    nn::AdamState adam;
    adam.lr = train_config.lr;

    std::size_t stale = 0;
    bool have_best = false;
    for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        const auto batches = data::make_batch(examples, config.max_len, train_config.batch_size, &rng);

        double ce_weighted = 0.0;
        double ortho_sum = 0.0;
        std::size_t target_count = 0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            LossResult lr;
            try {
                lr = loss_and_grads(batches[bi], params, config, train_config, rng, true);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(bi) + "; parameter norms:" + parameter_norms(params));
            }
            if (train_config.clip_norm > 0.0) {
                clip_gradients(lr.grads, train_config.clip_norm);
            }
            std::vector<const Tensor2*> grad_ptrs;
            for (const auto& [name, t] : model::named_tensors(std::as_const(lr.grads))) {
                grad_ptrs.push_back(t);
            }
            nn::adam_step(param_ptrs, grad_ptrs, adam);

            ce_weighted += lr.ce * static_cast<double>(lr.num_targets);
            target_count += lr.num_targets;
            ortho_sum += lr.ortho;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.ce = target_count == 0 ? 0.0 : ce_weighted / static_cast<double>(target_count);
        rec.ortho = batches.empty() ? 0.0 : ortho_sum / static_cast<double>(batches.size());
        rec.valid_ndcg20 = eval::evaluate(split, params, config, data::EvalMode::valid).ndcg_at(20);
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.epochs.push_back(rec);
        if (on_epoch) {
            on_epoch(rec);
        }

        if (!have_best || rec.valid_ndcg20 > result.log.best_valid_ndcg20) {
            have_best = true;
            result.log.best_valid_ndcg20 = rec.valid_ndcg20;
            result.log.best_epoch = epoch;
            result.params = params;
            stale = 0;
        } else if (++stale >= train_config.patience) {
            break;
        }
    }
    return result;
}

data::Corpus make_synthetic(std::size_t num_users, std::size_t num_items, std::size_t seq_len, nn::Rng& rng) {
    if (num_items < 2) {
        throw InvalidArgument("synthetic corpus needs at least two items");
    }
    std::uniform_int_distribution<std::size_t> start_dist(1, num_items);
    std::vector<std::vector<ItemId>> seqs;
    seqs.reserve(num_users);
    for (std::size_t u = 0; u < num_users; ++u) {
        std::vector<ItemId> s;
        s.reserve(seq_len);
        std::size_t item = start_dist(rng);
        for (std::size_t t = 0; t < seq_len; ++t) {
            s.push_back(static_cast<ItemId>(item));
            item = item % num_items + 1;
        }
        seqs.push_back(std::move(s));
    }
    return data::corpus_from_sequences(std::move(seqs), num_items);
}

} // namespace tvrec::train
