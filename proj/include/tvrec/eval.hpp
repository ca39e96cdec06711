#pragma once

// Full-ranking evaluation: the held-out item is ranked against every item in
// the catalogue (no sampled negatives).

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "tvrec/data.hpp"
#include "tvrec/model.hpp"

namespace tvrec::eval {

inline constexpr std::array<std::size_t, 3> kCutoffs{5, 10, 20};

struct EvalReport {
    data::EvalMode mode = data::EvalMode::test;
    std::size_t num_evaluated = 0;
    bool filter_seen = false;
    double hr_at_1 = 0.0;
    std::array<double, 3> hr{};    // aligned with kCutoffs
    std::array<double, 3> ndcg{};

    double hr_at(std::size_t cutoff) const;
    double ndcg_at(std::size_t cutoff) const;

    std::string to_csv() const;
    /// Aligned text table with one row per metric.
    std::string to_table() const;
};

/// 1 + number of non-padding items scoring strictly higher than the target,
/// plus tied items with a lower id. `scores` is indexed by item id; entry 0
/// is padding and is never counted.
std::size_t rank_of_target(std::span<const double> scores, std::size_t target);

struct RankMetrics {
    double hr = 0.0;
    double ndcg = 0.0;
};

RankMetrics metrics_from_rank(std::size_t rank, std::size_t cutoff);

/// Averages metrics over a list of ranks. Throws DataError when empty.
EvalReport report_from_ranks(std::span<const std::size_t> ranks, data::EvalMode mode, bool filter_seen = false);

struct EvalOptions {
    bool filter_seen = false;
    std::size_t batch_size = 256;
    /// Score with precomputed operators (true) or the spectral path (false).
    bool frozen = true;
};

/// Scores for a batch of padded id rows; returns batch x (|V|+1).
using Scorer = std::function<Tensor2(std::span<const ItemId> ids, std::size_t batch)>;

EvalReport evaluate_with(const data::Split& split, std::size_t seq_len, data::EvalMode mode, const Scorer& scorer,
                         const EvalOptions& options = {});
EvalReport evaluate(const data::Split& split, const model::ModelParams& params, const model::ModelConfig& config,
                    data::EvalMode mode, const EvalOptions& options = {});

} // namespace tvrec::eval
