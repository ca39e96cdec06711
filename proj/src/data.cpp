#include "tvrec/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "tvrec/error.hpp"

namespace tvrec::data {

namespace {

std::vector<std::uint64_t> parse_line(const std::string& line, std::size_t line_no) {
    std::vector<std::uint64_t> out;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
        while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) {
            ++p;
        }
        if (p == end) {
            break;
        }
        std::uint64_t v = 0;
        const auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc{} || (next < end && *next != ' ' && *next != '\t' && *next != '\r')) {
            throw DataError("line " + std::to_string(line_no) + ": expected space-separated positive integers");
        }
        out.push_back(v);
        p = next;
    }
    return out;
}

} // namespace

std::size_t Corpus::num_interactions() const {
    std::size_t n = 0;
    for (const auto& s : sequences) {
        n += s.size();
    }
    return n;
}

std::string LoadReport::to_text() const {
    std::ostringstream os;
    os << std::left << std::setw(20) << "users" << users << "\n"
       << std::setw(20) << "items" << items << "\n"
       << std::setw(20) << "interactions" << interactions << "\n"
       << std::setw(20) << "avg_length" << std::fixed << std::setprecision(1) << avg_length << "\n"
       << std::setw(20) << "sparsity" << std::setprecision(2) << sparsity * 100.0 << "%\n"
       << std::setw(20) << "min_interactions" << min_interactions << "\n"
       << std::setw(20) << "dropped_users" << dropped_users << "\n";
    return os.str();
}

std::string LoadReport::to_csv() const {
    std::ostringstream os;
    os << "users,items,interactions,avg_length,sparsity,min_interactions,dropped_users\n";
    os << users << "," << items << "," << interactions << "," << std::setprecision(17) << avg_length << ","
       << sparsity << "," << min_interactions << "," << dropped_users << "\n";
    return os.str();
}

Corpus parse_corpus(std::istream& in, const LoadOptions& options, LoadReport* report) {
    const std::size_t threshold = std::max<std::size_t>(3, options.min_interactions);
    std::vector<std::pair<std::uint64_t, std::vector<std::uint64_t>>> kept;
    std::unordered_set<std::uint64_t> seen_users;
    std::size_t dropped = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = parse_line(line, line_no);
        if (fields.empty()) {
            continue;
        }
        if (!seen_users.insert(fields[0]).second) {
            throw DataError("line " + std::to_string(line_no) + ": duplicate user id " + std::to_string(fields[0]));
        }
        std::vector<std::uint64_t> items(fields.begin() + 1, fields.end());
        if (std::find(items.begin(), items.end(), 0) != items.end()) {
            throw DataError("line " + std::to_string(line_no) + ": item id 0 is reserved for padding");
        }
        if (items.size() < threshold) {
            ++dropped;
            continue;
        }
        kept.emplace_back(fields[0], std::move(items));
    }
    if (kept.empty()) {
        throw DataError("empty corpus: no user has at least " + std::to_string(threshold) + " interactions");
    }

    std::map<std::uint64_t, ItemId> remap;
    for (const auto& [user, items] : kept) {
        for (std::uint64_t v : items) {
            remap.emplace(v, 0);
        }
    }
    Corpus c;
    c.original_item_ids.push_back(0);
    for (auto& [orig, dense] : remap) {
        dense = static_cast<ItemId>(c.original_item_ids.size());
        c.original_item_ids.push_back(orig);
    }
    c.num_items = remap.size();
    for (auto& [user, items] : kept) {
        std::vector<ItemId> seq;
        seq.reserve(items.size());
        for (std::uint64_t v : items) {
            seq.push_back(remap.at(v));
        }
        c.user_ids.push_back(user);
        c.sequences.push_back(std::move(seq));
    }
    if (report != nullptr) {
        *report = describe(c, threshold, dropped);
    }
    return c;
}

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options, LoadReport* report) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open interaction file: " + path.string());
    }
    return parse_corpus(in, options, report);
}

Corpus corpus_from_sequences(std::vector<std::vector<ItemId>> sequences, std::size_t num_items) {
    Corpus c;
    c.num_items = num_items;
    c.original_item_ids.resize(num_items + 1);
    std::iota(c.original_item_ids.begin(), c.original_item_ids.end(), std::uint64_t{0});
    for (std::size_t u = 0; u < sequences.size(); ++u) {
        for (ItemId v : sequences[u]) {
            if (v == 0 || v > num_items) {
                throw DataError("item id " + std::to_string(v) + " outside 1.." + std::to_string(num_items));
            }
        }
        c.user_ids.push_back(u + 1);
    }
    c.sequences = std::move(sequences);
    return c;
}

LoadReport describe(const Corpus& corpus, std::size_t min_interactions, std::size_t dropped) {
    LoadReport r;
    r.users = corpus.num_users();
    r.items = corpus.num_items;
    r.interactions = corpus.num_interactions();
    r.avg_length = r.users == 0 ? 0.0 : static_cast<double>(r.interactions) / static_cast<double>(r.users);
    const double cells = static_cast<double>(r.users) * static_cast<double>(r.items);
    r.sparsity = cells == 0.0 ? 0.0 : 1.0 - static_cast<double>(r.interactions) / cells;
    r.min_interactions = min_interactions;
    r.dropped_users = dropped;
    return r;
}

Split split_loo(const Corpus& corpus) {
    Split s;
    s.num_items = corpus.num_items;
    s.users.reserve(corpus.num_users());
    for (const auto& seq : corpus.sequences) {
        if (seq.size() < 3) {
            throw DataError("leave-one-out split needs at least 3 interactions per user");
        }
        UserSplit u;
        u.train.assign(seq.begin(), seq.end() - 2);
        u.valid = seq[seq.size() - 2];
        u.test = seq.back();
        s.users.push_back(std::move(u));
    }
    return s;
}

std::string to_string(EvalMode mode) { return mode == EvalMode::valid ? "valid" : "test"; }

std::vector<Example> training_examples(const Split& split, bool dense) {
    std::vector<Example> out;
    for (const auto& u : split.users) {
        if (u.train.size() < 2) {
            continue;
        }
        Example e;
        e.context.assign(u.train.begin(), u.train.end() - 1);
        if (dense) {
            e.targets.assign(u.train.begin() + 1, u.train.end());
        } else {
            e.targets.assign(e.context.size(), 0);
            e.targets.back() = u.train.back();
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<Example> evaluation_examples(const Split& split, EvalMode mode) {
    std::vector<Example> out;
    out.reserve(split.users.size());
    for (const auto& u : split.users) {
        Example e;
        e.context = u.train;
        ItemId target = u.valid;
        if (mode == EvalMode::test) {
            e.context.push_back(u.valid);
            target = u.test;
        }
        e.targets.assign(e.context.size(), 0);
        e.targets.back() = target;
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<ItemId> pad_sequence(std::span<const ItemId> seq, std::size_t seq_len) {
    std::vector<ItemId> out(seq_len, 0);
    const std::size_t keep = std::min(seq.size(), seq_len);
    std::copy(seq.end() - static_cast<std::ptrdiff_t>(keep), seq.end(),
              out.end() - static_cast<std::ptrdiff_t>(keep));
    return out;
}

std::vector<SequenceBatch> make_batch(std::span<const Example> examples, std::size_t seq_len,
                                      std::size_t batch_size, nn::Rng* rng) {
    if (seq_len == 0 || batch_size == 0) {
        throw InvalidArgument("make_batch: sequence length and batch size must be positive");
    }
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (rng != nullptr) {
        std::shuffle(order.begin(), order.end(), *rng);
    }

    std::vector<SequenceBatch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t stop = std::min(order.size(), start + batch_size);
        SequenceBatch b;
        b.batch = stop - start;
        b.seq_len = seq_len;
        b.ids.reserve(b.batch * seq_len);
        b.position_targets.reserve(b.batch * seq_len);
        for (std::size_t i = start; i < stop; ++i) {
            const Example& e = examples[order[i]];
            if (e.targets.size() != e.context.size() || e.context.empty()) {
                throw ShapeError("make_batch: example targets must align with a nonempty context");
            }
            const auto ids = pad_sequence(e.context, seq_len);
            const auto tg = pad_sequence(e.targets, seq_len);
            b.ids.insert(b.ids.end(), ids.begin(), ids.end());
            b.position_targets.insert(b.position_targets.end(), tg.begin(), tg.end());
            b.targets.push_back(e.targets.back());
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

} // namespace tvrec::data
