#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tvrec/data.hpp"
#include "tvrec/model.hpp"

namespace tvrec::train {

struct TrainConfig {
    double lr = 1e-3;
    double alpha = 0.0;  // orthogonal-regularisation strength
    std::size_t epochs = 200;
    std::size_t batch_size = 256;
    std::size_t patience = 10;
    std::uint64_t seed = 42;
    double clip_norm = 0.0;  // global gradient-norm clip; 0 disables

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double ce = 0.0;
    double ortho = 0.0;
    double valid_ndcg20 = 0.0;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;  // 0 when no epoch ran
    double best_valid_ndcg20 = 0.0;

    /// CSV with header `epoch,ce,ortho,valid_ndcg20,seconds`. Wall-clock
    /// timings are the only non-reproducible column; `include_timing = false`
    /// drops it.
    std::string to_csv(bool include_timing = true) const;
};

struct LossResult {
    double loss = 0.0;
    double ce = 0.0;
    double ortho = 0.0;
    std::size_t num_targets = 0;
    model::ModelParams grads;
};

/// Mean cross-entropy over every position target in the batch (full softmax
/// over items 1..|V|) plus alpha * sum of per-layer orthogonality penalties,
/// and the gradient for every parameter. Dropout is active when `training`.
LossResult loss_and_grads(const data::SequenceBatch& batch, const model::ModelParams& params,
                          const model::ModelConfig& config, const TrainConfig& train_config, nn::Rng& rng,
                          bool training = true);

struct FitResult {
    model::ModelParams params;  // best validation checkpoint
    model::ModelConfig config;
    TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Leave-one-out split, Adam over shuffled batches, validation NDCG@20 after
/// every epoch, early stopping after `patience` epochs without improvement.
/// A `config.num_items` of 0 is filled in from the corpus.
FitResult fit(const data::Corpus& corpus, const model::ModelConfig& config, const TrainConfig& train_config,
              const EpochCallback& on_epoch = {});

/// Users start at a uniformly random item s and step v -> (v mod num_items) + 1.
data::Corpus make_synthetic(std::size_t num_users, std::size_t num_items, std::size_t seq_len, nn::Rng& rng);

} // namespace tvrec::train
