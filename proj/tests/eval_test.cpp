#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "test_support.hpp"
#include "tvrec/error.hpp"
#include "tvrec/eval.hpp"

using namespace tvrec;
using namespace tvrec::eval;
using data::EvalMode;

namespace {

std::size_t sort_oracle(const std::vector<double>& scores, std::size_t target) {
    std::vector<std::size_t> items(scores.size() - 1);
    std::iota(items.begin(), items.end(), std::size_t{1});
    std::stable_sort(items.begin(), items.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return static_cast<std::size_t>(std::find(items.begin(), items.end(), target) - items.begin()) + 1;
}

void check_report_invariants(const EvalReport& r) {
    CHECK(r.hr_at_1 <= r.hr[0]);
    for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
        CHECK(r.hr[i] >= 0.0);
        CHECK(r.hr[i] <= 1.0);
        CHECK(r.ndcg[i] >= 0.0);
        CHECK(r.ndcg[i] <= r.hr[i]);
        if (i > 0) {
            CHECK(r.hr[i] >= r.hr[i - 1]);
            CHECK(r.ndcg[i] >= r.ndcg[i - 1]);
        }
    }
}

data::Split random_split(std::size_t users, std::size_t items, nn::Rng& rng) {
    std::uniform_int_distribution<ItemId> pick(1, static_cast<ItemId>(items));
    std::vector<std::vector<ItemId>> seqs(users, std::vector<ItemId>(6));
    for (auto& s : seqs) {
        for (auto& v : s) {
            v = pick(rng);
        }
    }
    return data::split_loo(data::corpus_from_sequences(std::move(seqs), items));
}

} // namespace

TEST_CASE("rank_of_target") {
    const std::vector<double> unique{-1e9, 0.1, 0.9, 0.3};
    CHECK(rank_of_target(unique, 2) == 1);
    CHECK(rank_of_target(unique, 3) == 2);
    CHECK(rank_of_target(unique, 1) == 3);

    const std::vector<double> flat(11, 0.5);
    CHECK(rank_of_target(flat, 1) == 1);
    CHECK(rank_of_target(flat, 10) == 10);

    // The padding entry never counts, however large.
    const std::vector<double> loud_pad{1e9, 0.0, 1.0};
    CHECK(rank_of_target(loud_pad, 2) == 1);

    CHECK_THROWS_AS(rank_of_target(unique, 0), InvalidArgument);
    CHECK_THROWS_AS(rank_of_target(unique, 4), InvalidArgument);
}

TEST_CASE("rank_of_target agrees with a stable sort") {
    nn::Rng rng(40);
    std::uniform_int_distribution<std::size_t> size(2, 60);
    std::uniform_int_distribution<int> coarse(0, 9);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t v = size(rng);
        std::vector<double> scores(v + 1);
        const bool ties = trial % 2 == 0;
        for (double& s : scores) {
            s = ties ? static_cast<double>(coarse(rng)) : testing::uniform(rng);
        }
        const std::size_t target = std::uniform_int_distribution<std::size_t>(1, v)(rng);
        const std::size_t rank = rank_of_target(scores, target);
        CHECK(rank == sort_oracle(scores, target));

        std::vector<double> scaled = scores;
        for (double& s : scaled) {
            s *= 7.5;
        }
        CHECK(rank_of_target(scaled, target) == rank);
    }
}

TEST_CASE("metrics_from_rank") {
    for (std::size_t r : {1u, 5u, 10u, 20u}) {
        const RankMetrics m = metrics_from_rank(1, r);
        CHECK(m.hr == 1.0);
        CHECK(m.ndcg == 1.0);
    }
    const RankMetrics three = metrics_from_rank(3, 5);
    CHECK(three.hr == 1.0);
    CHECK(three.ndcg == doctest::Approx(0.5).epsilon(1e-15));
    const RankMetrics six = metrics_from_rank(6, 5);
    CHECK(six.hr == 0.0);
    CHECK(six.ndcg == 0.0);
    CHECK_THROWS_AS(metrics_from_rank(0, 5), InvalidArgument);
    CHECK_THROWS_AS(metrics_from_rank(1, 0), InvalidArgument);
}

TEST_CASE("report_from_ranks") {
    const std::vector<std::size_t> ranks{1, 21};
    const EvalReport r = report_from_ranks(ranks, EvalMode::test);
    CHECK(r.num_evaluated == 2);
    CHECK(r.hr_at(20) == 0.5);
    CHECK(r.ndcg_at(20) == 0.5);
    CHECK(r.hr_at(1) == 0.5);
    check_report_invariants(r);
    CHECK_THROWS_AS(r.hr_at(7), InvalidArgument);

    const std::vector<std::size_t> none;
    CHECK_THROWS_AS(report_from_ranks(none, EvalMode::valid), DataError);

    const std::vector<std::size_t> firsts(10, 1);
    const EvalReport perfect = report_from_ranks(firsts, EvalMode::valid);
    for (std::size_t c : {1u, 5u, 10u, 20u}) {
        CHECK(perfect.hr_at(c) == 1.0);
        CHECK(perfect.ndcg_at(c) == 1.0);
    }

    const std::string csv = r.to_csv();
    CHECK(csv.rfind("mode,users,filter_seen,HR@1,HR@5,HR@10,HR@20,NDCG@5,NDCG@10,NDCG@20\ntest,2,0,", 0) == 0);
    CHECK(r.to_table().find("NDCG@20") != std::string::npos);
}

TEST_CASE("evaluate_with an oracle scorer ranks every target first") {
    nn::Rng rng(41);
    const data::Split split = random_split(50, 30, rng);
    const std::size_t n = 6;
    for (EvalMode mode : {EvalMode::valid, EvalMode::test}) {
        const auto examples = data::evaluation_examples(split, mode);
        std::size_t cursor = 0;
        const Scorer oracle = [&](std::span<const ItemId>, std::size_t batch) {
            Tensor2 s = Tensor2::Zero(static_cast<Eigen::Index>(batch), 31);
            for (std::size_t r = 0; r < batch; ++r, ++cursor) {
                s(static_cast<Eigen::Index>(r), examples[cursor].targets.back()) = 1.0;
            }
            return s;
        };
        EvalOptions opts;
        opts.batch_size = 7;
        const EvalReport rep = evaluate_with(split, n, mode, oracle, opts);
        CHECK(rep.mode == mode);
        CHECK(rep.num_evaluated == 50);
        CHECK(rep.hr_at(1) == 1.0);
        CHECK(rep.ndcg_at(20) == 1.0);
    }
}

TEST_CASE("random scores give the uniform-rank hit rate") {
    nn::Rng rng(42);
    const data::Split split = random_split(2000, 100, rng);
    nn::Rng score_rng(43);
    const Scorer random = [&](std::span<const ItemId>, std::size_t batch) {
        return testing::random_tensor(static_cast<Eigen::Index>(batch), 101, score_rng);
    };
    const EvalReport rep = evaluate_with(split, 10, EvalMode::test, random);
    CHECK(rep.num_evaluated == 2000);
    CHECK(std::abs(rep.hr_at(10) - 0.10) <= 0.03);
    check_report_invariants(rep);
}

TEST_CASE("filter_seen removes context items but keeps the target") {
    // One user (3, 2, 1, 1): test context (3, 2, 1), target 1.
    const data::Split split = data::split_loo(data::corpus_from_sequences({{3, 2, 1, 1}}, 5));
    const Scorer fixed = [](std::span<const ItemId>, std::size_t) {
        Tensor2 s(1, 6);
        s << 0.0, 0.5, 0.9, 0.8, 0.1, 0.2;
        return s;
    };
    const EvalReport plain = evaluate_with(split, 4, EvalMode::test, fixed);
    CHECK(plain.hr_at(1) == 0.0);
    CHECK(plain.ndcg_at(5) == doctest::Approx(1.0 / std::log2(4.0)));
    EvalOptions opts;
    opts.filter_seen = true;
    const EvalReport filtered = evaluate_with(split, 4, EvalMode::test, fixed, opts);
    CHECK(filtered.filter_seen);
    CHECK(filtered.hr_at(1) == 1.0);
}

TEST_CASE("evaluate with a model") {
    model::ModelConfig c;
    c.num_items = 30;
    c.max_len = 6;
    c.dim = 8;
    c.layers = 1;
    c.basis_count = 3;
    nn::Rng rng(44);
    const model::ModelParams p = model::init_params(c, rng);
    const data::Split split = random_split(40, 30, rng);

    const EvalReport frozen = evaluate(split, p, c, EvalMode::test);
    EvalOptions spectral;
    spectral.frozen = false;
    const EvalReport unfrozen = evaluate(split, p, c, EvalMode::test, spectral);
    CHECK(frozen.num_evaluated == 40);
    for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
        CHECK(frozen.hr[i] == unfrozen.hr[i]);
        CHECK(frozen.ndcg[i] == doctest::Approx(unfrozen.ndcg[i]).epsilon(1e-12));
    }
    check_report_invariants(frozen);

    model::ModelConfig wrong = c;
    wrong.num_items = 31;
    CHECK_THROWS_AS(evaluate(split, p, wrong, EvalMode::test), DataError);
}
