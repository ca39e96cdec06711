#include "tvrec/cli.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tvrec/checkpoint.hpp"
#include "tvrec/data.hpp"
#include "tvrec/error.hpp"
#include "tvrec/eval.hpp"
#include "tvrec/model.hpp"
#include "tvrec/train.hpp"

#ifndef TVREC_SOURCE_ID
#define TVREC_SOURCE_ID "unknown"
#endif

namespace tvrec::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

void prepare_out_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) {
            throw UsageError("--out " + dir.string() + " exists and is not a directory");
        }
        if (!fs::is_empty(dir) && !force) {
            throw UsageError("--out " + dir.string() + " is not empty; pass --force to overwrite");
        }
    }
    fs::create_directories(dir);
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw DataError("cannot write " + path.string());
    }
    f << text;
}

std::string item_map_csv(const data::Corpus& corpus) {
    std::ostringstream os;
    os << "item,original_id\n";
    for (std::size_t v = 1; v < corpus.original_item_ids.size(); ++v) {
        os << v << "," << corpus.original_item_ids[v] << "\n";
    }
    return os.str();
}

// ------------------------------------------------------------------ train

struct TrainFlags {
    std::string data;
    std::string out;
    std::size_t max_len = 50;
    std::size_t dim = 64;
    std::size_t layers = 2;
    std::size_t m = 8;
    std::optional<std::size_t> filter_order;
    std::size_t ffn_hidden = 0;
    double alpha = 0.0;
    double dropout = 0.1;
    double lr = 1e-3;
    std::size_t epochs = 200;
    std::size_t batch = 256;
    std::size_t patience = 10;
    double clip_norm = 0.0;
    std::uint64_t seed = 42;
    std::string mode = "causal";
    std::size_t min_interactions = 5;
    bool force = false;
    bool quiet = false;
};

int cmd_train(const TrainFlags& f, std::ostream& out) {
    model::ModelConfig mc;
    mc.max_len = f.max_len;
    mc.dim = f.dim;
    mc.layers = f.layers;
    mc.basis_count = f.m;
    mc.filter_order = f.filter_order;
    mc.ffn_hidden = f.ffn_hidden;
    mc.dropout = f.dropout;
    mc.mode = model::parse_filter_mode(f.mode);

    train::TrainConfig tc;
    tc.lr = f.lr;
    tc.alpha = f.alpha;
    tc.epochs = f.epochs;
    tc.batch_size = f.batch;
    tc.patience = f.patience;
    tc.seed = f.seed;
    tc.clip_norm = f.clip_norm;

    // Validate everything that does not depend on the data before touching the disk.
    {
        model::ModelConfig probe = mc;
        probe.num_items = 1;
        probe.validate();
        tc.validate();
    }

    const fs::path dir(f.out);
    prepare_out_dir(dir, f.force);

    data::LoadReport report;
    const data::Corpus corpus = data::load_corpus(f.data, {f.min_interactions}, &report);
    mc.num_items = corpus.num_items;
    mc.validate();

    json manifest;
    manifest["command"] = "train";
    manifest["source_id"] = TVREC_SOURCE_ID;
    manifest["started_at"] = utc_now();
    manifest["status"] = "running";
    manifest["seed"] = tc.seed;
    manifest["data"] = {{"path", fs::absolute(f.data).string()},
                        {"fnv1a64", file_checksum(f.data)},
                        {"min_interactions", f.min_interactions},
                        {"users", report.users},
                        {"items", report.items},
                        {"interactions", report.interactions},
                        {"dropped_users", report.dropped_users}};
    manifest["model_config"] = model::config_to_json(mc);
    manifest["train_config"] = {{"lr", tc.lr},         {"alpha", tc.alpha},       {"epochs", tc.epochs},
                                {"batch", tc.batch_size}, {"patience", tc.patience}, {"clip_norm", tc.clip_norm},
                                {"seed", tc.seed}};
    manifest["objective"] = {
        {"targets", mc.mode == model::FilterMode::causal ? "every training position" : "final position only"},
        {"early_stopping", "valid NDCG@20"},
        {"ranking", "full catalogue, seen items not filtered"}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    write_file(dir / "load_report.txt", report.to_text());
    write_file(dir / "load_report.csv", report.to_csv());
    write_file(dir / "item_map.csv", item_map_csv(corpus));
    if (!f.quiet) {
        out << report.to_text();
    }

    const train::FitResult fit = train::fit(corpus, mc, tc, [&](const train::EpochRecord& e) {
        if (!f.quiet) {
            out << "epoch " << e.epoch << "  ce " << std::fixed << std::setprecision(4) << e.ce << "  ortho "
                << std::setprecision(6) << e.ortho << "  valid NDCG@20 " << std::setprecision(4) << e.valid_ndcg20
                << "  (" << std::setprecision(2) << e.seconds << "s)\n";
        }
    });

    model::save_checkpoint(dir / "checkpoint.bin", fit.config, fit.params);
    write_file(dir / "train_log.csv", fit.log.to_csv(true));

    const data::Split split = data::split_loo(corpus);
    const eval::EvalReport valid = eval::evaluate(split, fit.params, fit.config, data::EvalMode::valid);
    write_file(dir / "valid_report.csv", valid.to_csv());

    manifest["finished_at"] = utc_now();
    manifest["status"] = "complete";
    manifest["result"] = {{"best_epoch", fit.log.best_epoch},
                          {"epochs_run", fit.log.epochs.size()},
                          {"best_valid_ndcg20", fit.log.best_valid_ndcg20},
                          {"parameter_count", model::parameter_count(fit.params)}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    if (!f.quiet) {
        out << valid.to_table();
        out << "checkpoint written to " << (dir / "checkpoint.bin").string() << "\n";
    }
    return kOk;
}

// ------------------------------------------------------------------ eval

struct EvalFlags {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::string split = "test";
    std::size_t min_interactions = 5;
    bool filter_seen = false;
    bool force = false;
};

void check_item_map(const fs::path& checkpoint, const data::Corpus& corpus) {
    const fs::path map_path = checkpoint.parent_path() / "item_map.csv";
    if (!fs::exists(map_path)) {
        return;
    }
    std::ifstream in(map_path);
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto comma = line.find(',');
        const std::size_t item = std::stoull(line.substr(0, comma));
        const std::uint64_t orig = std::stoull(line.substr(comma + 1));
        if (item >= corpus.original_item_ids.size() || corpus.original_item_ids[item] != orig) {
            throw DataError("item mapping of the data differs from the checkpoint's item_map.csv at item " +
                            std::to_string(item));
        }
        ++rows;
    }
    if (rows != corpus.num_items) {
        throw DataError("item_map.csv lists " + std::to_string(rows) + " items, data has " +
                        std::to_string(corpus.num_items));
    }
}

int cmd_eval(const EvalFlags& f, std::ostream& out) {
    if (f.split != "test" && f.split != "valid") {
        throw UsageError("--split must be test or valid");
    }
    if (!fs::exists(f.checkpoint)) {
        throw DataError("checkpoint not found: " + f.checkpoint);
    }
    if (!f.out.empty()) {
        prepare_out_dir(f.out, f.force);
    }
    const model::Checkpoint ck = model::load_checkpoint(f.checkpoint);
    const data::Corpus corpus = data::load_corpus(f.data, {f.min_interactions});
    if (corpus.num_items != ck.config.num_items) {
        throw DataError("checkpoint expects " + std::to_string(ck.config.num_items) + " items, data has " +
                        std::to_string(corpus.num_items));
    }
    check_item_map(f.checkpoint, corpus);

    const data::Split split = data::split_loo(corpus);
    eval::EvalOptions opts;
    opts.filter_seen = f.filter_seen;
    const auto mode = f.split == "test" ? data::EvalMode::test : data::EvalMode::valid;
    const eval::EvalReport rep = eval::evaluate(split, ck.params, ck.config, mode, opts);
    out << rep.to_table();
    if (!f.out.empty()) {
        write_file(fs::path(f.out) / "eval_report.csv", rep.to_csv());
        write_file(fs::path(f.out) / "eval_report.txt", rep.to_table());
    }
    return kOk;
}

// ------------------------------------------------------------------ export

struct ExportFlags {
    std::string checkpoint;
    std::string out;
    bool force = false;
};

int cmd_export_filters(const ExportFlags& f, std::ostream& out) {
    const model::Checkpoint ck = model::load_checkpoint(f.checkpoint);
    prepare_out_dir(f.out, f.force);
    for (std::size_t l = 0; l < ck.params.blocks.size(); ++l) {
        const spectral::TapMatrix h = model::build_H(ck.params.blocks[l].filter);
        std::ostringstream os;
        os << std::setprecision(17);
        for (Eigen::Index i = 0; i < h.matrix().rows(); ++i) {
            for (Eigen::Index k = 0; k < h.matrix().cols(); ++k) {
                os << (k == 0 ? "" : ",") << std::abs(h.matrix()(i, k));
            }
            os << "\n";
        }
        const fs::path path = fs::path(f.out) / ("layer" + std::to_string(l) + "_taps.csv");
        write_file(path, os.str());
        out << "wrote " << path.string() << " (" << h.rows() << " x " << h.order() + 1 << ")\n";
    }
    return kOk;
}

// ------------------------------------------------------------------ bench

struct BenchFlags {
    std::string checkpoint;
    std::string out;
    std::size_t batch = 256;
    std::size_t repeats = 5;
    std::uint64_t seed = 7;
    bool force = false;
};

struct Timing {
    double mean = 0.0;
    double stddev = 0.0;
};

Timing summarize(const std::vector<double>& xs) {
    Timing t;
    t.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - t.mean) * (x - t.mean);
    }
    t.stddev = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
    return t;
}

int cmd_bench(const BenchFlags& f, std::ostream& out) {
    if (f.repeats < 1) {
        throw UsageError("--repeats must be at least 1");
    }
    if (f.batch < 1) {
        throw UsageError("--batch must be at least 1");
    }
    if (!f.out.empty()) {
        prepare_out_dir(f.out, f.force);
    }
    const model::Checkpoint ck = model::load_checkpoint(f.checkpoint);
    const auto& cfg = ck.config;

    nn::Rng rng(f.seed);
    std::uniform_int_distribution<std::size_t> len_dist(1, cfg.max_len);
    std::uniform_int_distribution<ItemId> item_dist(1, static_cast<ItemId>(cfg.num_items));
    std::vector<ItemId> ids;
    for (std::size_t b = 0; b < f.batch; ++b) {
        std::vector<ItemId> seq(len_dist(rng));
        for (auto& v : seq) {
            v = item_dist(rng);
        }
        const auto padded = data::pad_sequence(seq, cfg.max_len);
        ids.insert(ids.end(), padded.begin(), padded.end());
    }

    const model::FilterBank frozen = model::freeze_filters(ck.params, cfg);
    const Tensor2 s_frozen = model::score_batch(ids, f.batch, ck.params, cfg, frozen);
    const Tensor2 s_spectral =
        model::score_batch(ids, f.batch, ck.params, cfg, model::spectral_filters(ck.params, cfg));
    const double max_diff = (s_frozen.rightCols(s_frozen.cols() - 1) - s_spectral.rightCols(s_spectral.cols() - 1))
                                .cwiseAbs()
                                .maxCoeff();
    if (!(max_diff <= 1e-10)) {
        throw NumericError("frozen and spectral scores differ by " + std::to_string(max_diff));
    }

    using clock = std::chrono::steady_clock;
    std::vector<double> t_spectral;
    std::vector<double> t_frozen;
    for (std::size_t r = 0; r < f.repeats; ++r) {
        auto t0 = clock::now();
        const Tensor2 a = model::score_batch(ids, f.batch, ck.params, cfg, model::spectral_filters(ck.params, cfg));
        auto t1 = clock::now();
        const Tensor2 b = model::score_batch(ids, f.batch, ck.params, cfg, frozen);
        auto t2 = clock::now();
        t_spectral.push_back(std::chrono::duration<double>(t1 - t0).count());
        t_frozen.push_back(std::chrono::duration<double>(t2 - t1).count());
    }
    const Timing ts = summarize(t_spectral);
    const Timing tf = summarize(t_frozen);
    const double speedup = ts.mean / tf.mean;

    std::ostringstream csv;
    csv << "path,batch,repeats,mean_s,stddev_s\n" << std::setprecision(9);
    csv << "spectral," << f.batch << "," << f.repeats << "," << ts.mean << "," << ts.stddev << "\n";
    csv << "frozen," << f.batch << "," << f.repeats << "," << tf.mean << "," << tf.stddev << "\n";

    out << "N=" << cfg.max_len << " D=" << cfg.dim << " L=" << cfg.layers << " K=" << cfg.order()
        << " batch=" << f.batch << " repeats=" << f.repeats << "\n";
    out << "max |frozen - spectral| score difference: " << std::scientific << std::setprecision(3) << max_diff
        << "\n"
        << std::fixed << std::setprecision(6);
    out << "spectral (unfrozen): " << ts.mean << " s  +- " << ts.stddev << "\n";
    out << "frozen operator:     " << tf.mean << " s  +- " << tf.stddev << "\n";
    out << "speedup: " << std::setprecision(2) << speedup << "x\n";
    if (!f.out.empty()) {
        csv << "speedup,,,," << speedup << "\n";
        write_file(fs::path(f.out) / "bench.csv", csv.str());
    }
    return kOk;
}

// ------------------------------------------------------------------ synth

struct SynthFlags {
    std::string out;
    std::size_t users = 500;
    std::size_t items = 50;
    std::size_t length = 20;
    std::uint64_t seed = 42;
    bool force = false;
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
    if (fs::exists(f.out) && !f.force) {
        throw UsageError(f.out + " exists; pass --force to overwrite");
    }
    nn::Rng rng(f.seed);
    const data::Corpus c = train::make_synthetic(f.users, f.items, f.length, rng);
    std::ostringstream os;
    for (std::size_t u = 0; u < c.num_users(); ++u) {
        os << c.user_ids[u];
        for (ItemId v : c.sequences[u]) {
            os << " " << v;
        }
        os << "\n";
    }
    write_file(f.out, os.str());
    out << "wrote " << c.num_users() << " users, " << c.num_interactions() << " interactions to " << f.out << "\n";
    return kOk;
}

} // namespace

std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    std::uint64_t h = 14695981039346656037ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Time-variant spectral filter sequential recommender"};
    app.require_subcommand(1);

    TrainFlags tf;
    auto* train = app.add_subcommand("train", "Train a model and write checkpoint, logs and manifest");
    train->add_option("--data", tf.data, "Interaction file: `user item item ...` per line")->required();
    train->add_option("--out", tf.out, "Run directory")->required();
    train->add_option("--max-len", tf.max_len, "Sequence length N");
    train->add_option("--dim", tf.dim, "Embedding dimension D");
    train->add_option("--layers", tf.layers, "Encoder blocks L");
    train->add_option("--m", tf.m, "Number of basis vectors m");
    train->add_option("--filter-order", tf.filter_order, "Filter order K (default N)");
    train->add_option("--ffn-hidden", tf.ffn_hidden, "FFN hidden width (default D)");
    train->add_option("--alpha", tf.alpha, "Orthogonal regularisation strength");
    train->add_option("--dropout", tf.dropout, "Dropout rate p in [0, 1)");
    train->add_option("--lr", tf.lr, "Adam learning rate");
    train->add_option("--epochs", tf.epochs, "Maximum epochs (0 writes the initial model)");
    train->add_option("--batch", tf.batch, "Batch size");
    train->add_option("--patience", tf.patience, "Early-stopping patience in epochs");
    train->add_option("--clip-norm", tf.clip_norm, "Global gradient-norm clip (0 = off)");
    train->add_option("--seed", tf.seed, "Random seed");
    train->add_option("--mode", tf.mode, "Filter graph: causal (padded) or circular");
    train->add_option("--min-interactions", tf.min_interactions, "Drop users with fewer interactions");
    train->add_flag("--force", tf.force, "Overwrite a non-empty --out directory");
    train->add_flag("--quiet", tf.quiet, "Suppress progress output");

    EvalFlags ef;
    auto* evalc = app.add_subcommand("eval", "Full-ranking HR/NDCG of a checkpoint");
    evalc->add_option("--checkpoint", ef.checkpoint, "Checkpoint file")->required();
    evalc->add_option("--data", ef.data, "Interaction file used for training")->required();
    evalc->add_option("--out", ef.out, "Directory for eval_report.csv / .txt");
    evalc->add_option("--split", ef.split, "test or valid");
    evalc->add_option("--min-interactions", ef.min_interactions, "Must match the training run");
    evalc->add_flag("--filter-seen", ef.filter_seen, "Exclude previously seen items from the ranking");
    evalc->add_flag("--force", ef.force, "Overwrite a non-empty --out directory");

    ExportFlags xf;
    auto* exportc = app.add_subcommand("export-filters", "Write |H| per layer as N x (K+1) CSV");
    exportc->add_option("--checkpoint", xf.checkpoint, "Checkpoint file")->required();
    exportc->add_option("--out", xf.out, "Output directory")->required();
    exportc->add_flag("--force", xf.force, "Overwrite a non-empty --out directory");

    BenchFlags bf;
    auto* bench = app.add_subcommand("bench", "Time spectral vs precomputed-operator inference");
    bench->add_option("--checkpoint", bf.checkpoint, "Checkpoint file")->required();
    bench->add_option("--batch", bf.batch, "Sequences per batch");
    bench->add_option("--repeats", bf.repeats, "Timed repetitions");
    bench->add_option("--seed", bf.seed, "Seed for the random benchmark batch");
    bench->add_option("--out", bf.out, "Directory for bench.csv");
    bench->add_flag("--force", bf.force, "Overwrite a non-empty --out directory");

    SynthFlags sf;
    auto* synth = app.add_subcommand("synth", "Write a cyclic-successor synthetic corpus");
    synth->add_option("--out", sf.out, "Output interaction file")->required();
    synth->add_option("--users", sf.users, "Number of users");
    synth->add_option("--items", sf.items, "Number of items");
    synth->add_option("--length", sf.length, "Interactions per user");
    synth->add_option("--seed", sf.seed, "Random seed");
    synth->add_flag("--force", sf.force, "Overwrite an existing file");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return kUsage;
    }

    try {
        if (*train) {
            return cmd_train(tf, out);
        }
        if (*evalc) {
            return cmd_eval(ef, out);
        }
        if (*exportc) {
            return cmd_export_filters(xf, out);
        }
        if (*bench) {
            return cmd_bench(bf, out);
        }
        if (*synth) {
            return cmd_synth(sf, out);
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const InvalidArgument& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kNumericFailure;
    } catch (const Error& e) {
        err << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return kDataError;
    }
    return kUsage;
}

} // namespace tvrec::cli
