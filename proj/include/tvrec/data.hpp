#pragma once

// Interaction logs, leave-one-out splits, and fixed-length left-padded batches.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tvrec/model.hpp"
#include "tvrec/nncore.hpp"

namespace tvrec::data {

/// Chronological item sequences per user, with item ids remapped to 1..num_items.
struct Corpus {
    std::vector<std::uint64_t> user_ids;
    std::vector<std::vector<ItemId>> sequences;
    std::size_t num_items = 0;
    /// original_item_ids[v] is the id item v had in the source file; entry 0 is unused.
    std::vector<std::uint64_t> original_item_ids;

    std::size_t num_users() const { return sequences.size(); }
    std::size_t num_interactions() const;
};

struct LoadOptions {
    std::size_t min_interactions = 5;
};

struct LoadReport {
    std::size_t users = 0;
    std::size_t items = 0;
    std::size_t interactions = 0;
    double avg_length = 0.0;
    double sparsity = 0.0;
    std::size_t min_interactions = 0;
    std::size_t dropped_users = 0;

    std::string to_text() const;
    std::string to_csv() const;
};

/// Parses `user item item ...` lines. Users with fewer than
/// max(3, min_interactions) items are dropped and counted in the report.
/// Throws DataError (with the line number) on malformed input or an empty result.
Corpus parse_corpus(std::istream& in, const LoadOptions& options = {}, LoadReport* report = nullptr);
Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options = {}, LoadReport* report = nullptr);

/// Corpus from already-dense sequences (ids 1..num_items), no filtering or remapping.
Corpus corpus_from_sequences(std::vector<std::vector<ItemId>> sequences, std::size_t num_items);
LoadReport describe(const Corpus& corpus, std::size_t min_interactions = 0, std::size_t dropped = 0);

struct UserSplit {
    std::vector<ItemId> train;  // S[1..n-2]
    ItemId valid = 0;           // S[n-1]
    ItemId test = 0;            // S[n]
};

struct Split {
    std::vector<UserSplit> users;
    std::size_t num_items = 0;
};

Split split_loo(const Corpus& corpus);

/// A context sequence with per-position next-item targets (0 = no target).
struct Example {
    std::vector<ItemId> context;
    std::vector<ItemId> targets;
};

enum class EvalMode { valid, test };
std::string to_string(EvalMode mode);

/// Each training-prefix position predicts its successor. With `dense == false`
/// only the final position carries a target.
std::vector<Example> training_examples(const Split& split, bool dense = true);
/// valid: context S[1..n-2] -> S[n-1]; test: context S[1..n-1] -> S[n].
std::vector<Example> evaluation_examples(const Split& split, EvalMode mode);

struct SequenceBatch {
    std::size_t batch = 0;
    std::size_t seq_len = 0;
    std::vector<ItemId> ids;               // batch x N, zeros form a prefix
    std::vector<ItemId> targets;           // final-position target per row
    std::vector<ItemId> position_targets;  // batch x N, aligned with ids
};

/// Keeps the most recent `seq_len` items and left-pads with zeros.
std::vector<ItemId> pad_sequence(std::span<const ItemId> seq, std::size_t seq_len);

/// Splits examples into batches; the order is shuffled with `rng` when given.
std::vector<SequenceBatch> make_batch(std::span<const Example> examples, std::size_t seq_len,
                                      std::size_t batch_size, nn::Rng* rng);

} // namespace tvrec::data
