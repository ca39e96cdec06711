#include "tvrec/eval.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "tvrec/error.hpp"

namespace tvrec::eval {

namespace {

std::size_t cutoff_index(std::size_t cutoff) {
    for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
        if (kCutoffs[i] == cutoff) {
            return i;
        }
    }
    throw InvalidArgument("no metric recorded at cutoff " + std::to_string(cutoff));
}

} // namespace

double EvalReport::hr_at(std::size_t cutoff) const { return cutoff == 1 ? hr_at_1 : hr[cutoff_index(cutoff)]; }

double EvalReport::ndcg_at(std::size_t cutoff) const {
    // With a single relevant item NDCG@1 equals HR@1.
    return cutoff == 1 ? hr_at_1 : ndcg[cutoff_index(cutoff)];
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "mode,users,filter_seen,HR@1";
    for (std::size_t r : kCutoffs) {
        os << ",HR@" << r;
    }
    for (std::size_t r : kCutoffs) {
        os << ",NDCG@" << r;
    }
    os << "\n" << data::to_string(mode) << "," << num_evaluated << "," << (filter_seen ? 1 : 0) << ","
       << std::setprecision(17) << hr_at_1;
    for (double v : hr) {
        os << "," << v;
    }
    for (double v : ndcg) {
        os << "," << v;
    }
    os << "\n";
    return os.str();
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    os << "split: " << data::to_string(mode) << "   users: " << num_evaluated
       << "   seen items: " << (filter_seen ? "filtered" : "ranked") << "\n";
    os << std::left << std::setw(10) << "metric" << std::right << std::setw(10) << "value" << "\n";
    os << std::fixed << std::setprecision(4);
    for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
        os << std::left << std::setw(10) << ("HR@" + std::to_string(kCutoffs[i])) << std::right << std::setw(10)
           << hr[i] << "\n";
    }
    for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
        os << std::left << std::setw(10) << ("NDCG@" + std::to_string(kCutoffs[i])) << std::right << std::setw(10)
           << ndcg[i] << "\n";
    }
    os << std::left << std::setw(10) << "HR@1" << std::right << std::setw(10) << hr_at_1 << "\n";
    return os.str();
}

std::size_t rank_of_target(std::span<const double> scores, std::size_t target) {
    if (target < 1 || target >= scores.size()) {
        throw InvalidArgument("rank_of_target: target " + std::to_string(target) + " outside 1.." +
                              std::to_string(scores.size() == 0 ? 0 : scores.size() - 1));
    }
    const double t = scores[target];
    std::size_t rank = 1;
    for (std::size_t v = 1; v < scores.size(); ++v) {
        if (scores[v] > t || (v < target && scores[v] == t)) {
            ++rank;
        }
    }
    return rank;
}

RankMetrics metrics_from_rank(std::size_t rank, std::size_t cutoff) {
    if (rank < 1 || cutoff < 1) {
        throw InvalidArgument("metrics_from_rank: rank and cutoff must be >= 1");
    }
    if (rank > cutoff) {
        return {};
    }
    return {1.0, 1.0 / std::log2(static_cast<double>(rank) + 1.0)};
}

EvalReport report_from_ranks(std::span<const std::size_t> ranks, data::EvalMode mode, bool filter_seen) {
    if (ranks.empty()) {
        throw DataError("evaluation over an empty split");
    }
    EvalReport rep;
    rep.mode = mode;
    rep.filter_seen = filter_seen;
    rep.num_evaluated = ranks.size();
    for (std::size_t rank : ranks) {
        rep.hr_at_1 += metrics_from_rank(rank, 1).hr;
        for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
            const RankMetrics m = metrics_from_rank(rank, kCutoffs[i]);
            rep.hr[i] += m.hr;
            rep.ndcg[i] += m.ndcg;
        }
    }
    const double n = static_cast<double>(ranks.size());
    rep.hr_at_1 /= n;
    for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
        rep.hr[i] /= n;
        rep.ndcg[i] /= n;
    }
    return rep;
}

EvalReport evaluate_with(const data::Split& split, std::size_t seq_len, data::EvalMode mode, const Scorer& scorer,
                         const EvalOptions& options) {
    const auto examples = data::evaluation_examples(split, mode);
    if (examples.empty()) {
        throw DataError("evaluation over an empty split");
    }
    const auto batches = data::make_batch(examples, seq_len, options.batch_size, nullptr);
    std::vector<std::size_t> ranks;
    ranks.reserve(examples.size());
    std::size_t next_example = 0;
    for (const auto& b : batches) {
        Tensor2 scores = scorer(b.ids, b.batch);
        for (std::size_t r = 0; r < b.batch; ++r, ++next_example) {
            auto row = scores.row(static_cast<Eigen::Index>(r));
            if (options.filter_seen) {
                // Items the user already interacted with are removed from the
                // candidate list unless they are the held-out target.
                for (ItemId v : examples[next_example].context) {
                    if (v != b.targets[r]) {
                        row(v) = -std::numeric_limits<double>::infinity();
                    }
                }
            }
            ranks.push_back(rank_of_target(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                                           b.targets[r]));
        }
    }
    return report_from_ranks(ranks, mode, options.filter_seen);
}

EvalReport evaluate(const data::Split& split, const model::ModelParams& params, const model::ModelConfig& config,
                    data::EvalMode mode, const EvalOptions& options) {
    if (split.num_items != config.num_items) {
        throw DataError("split has " + std::to_string(split.num_items) + " items but the model was built for " +
                        std::to_string(config.num_items));
    }
    const model::FilterBank filters =
        options.frozen ? model::freeze_filters(params, config) : model::spectral_filters(params, config);
    return evaluate_with(
        split, config.max_len, mode,
        [&](std::span<const ItemId> ids, std::size_t batch) {
            return model::score_batch(ids, batch, params, config, filters);
        },
        options);
}

} // namespace tvrec::eval
