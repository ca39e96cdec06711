#include "tvrec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "tvrec/error.hpp"

namespace tvrec::model {

namespace {

constexpr const char* kMagic = "TVREC-CHECKPOINT 1";

std::uint64_t to_little_endian(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = __builtin_bswap64(v);
    }
    return v;
}

} // namespace

nlohmann::json config_to_json(const ModelConfig& c) {
    return {
        {"num_items", c.num_items},
        {"max_len", c.max_len},
        {"dim", c.dim},
        {"layers", c.layers},
        {"basis_count", c.basis_count},
        {"filter_order", c.order()},
        {"ffn_hidden", c.hidden()},
        {"dropout", c.dropout},
        {"mode", to_string(c.mode)},
        {"layer_norm_eps", c.layer_norm_eps},
    };
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.num_items = j.at("num_items").get<std::size_t>();
        c.max_len = j.at("max_len").get<std::size_t>();
        c.dim = j.at("dim").get<std::size_t>();
        c.layers = j.at("layers").get<std::size_t>();
        c.basis_count = j.at("basis_count").get<std::size_t>();
        c.filter_order = j.at("filter_order").get<std::size_t>();
        c.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
        c.dropout = j.at("dropout").get<double>();
        c.mode = parse_filter_mode(j.at("mode").get<std::string>());
        c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams& params) {
    nlohmann::json header;
    header["config"] = config_to_json(config);
    header["tensors"] = nlohmann::json::array();
    std::size_t offset = 0;
    const auto tensors = named_tensors(params);
    for (const auto& [name, t] : tensors) {
        header["tensors"].push_back({{"name", name}, {"rows", t->rows()}, {"cols", t->cols()}, {"offset", offset}});
        offset += static_cast<std::size_t>(t->size()) * sizeof(double);
    }
    header["payload_bytes"] = offset;
    const std::string text = header.dump(2) + "\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot open checkpoint for writing: " + path.string());
    }
    out << kMagic << "\n" << text.size() << "\n" << text;
    for (const auto& [name, t] : tensors) {
        for (Eigen::Index i = 0; i < t->size(); ++i) {
            const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(t->data()[i]));
            out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
        }
    }
    if (!out) {
        throw DataError("failed writing checkpoint: " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint: " + path.string());
    }
    std::string magic;
    std::getline(in, magic);
    if (magic != kMagic) {
        throw DataError("not a checkpoint file (bad magic): " + path.string());
    }
    std::string len_line;
    std::getline(in, len_line);
    std::size_t header_len = 0;
    try {
        header_len = std::stoull(len_line);
    } catch (const std::exception&) {
        throw DataError("checkpoint header length is malformed");
    }
    std::string text(header_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!in) {
        throw DataError("checkpoint truncated inside header");
    }

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }

    Checkpoint ck;
    ck.config = config_from_json(header.at("config"));
    nn::Rng rng(0);
    ck.params = init_params(ck.config, rng);

    const auto payload_bytes = header.value("payload_bytes", std::size_t{0});
    std::vector<char> payload(payload_bytes);
    in.read(payload.data(), static_cast<std::streamsize>(payload_bytes));
    if (!in) {
        throw DataError("checkpoint payload truncated");
    }

    std::map<std::string, nlohmann::json> manifest;
    for (const auto& entry : header.at("tensors")) {
        manifest[entry.at("name").get<std::string>()] = entry;
    }
    for (auto& [name, t] : named_tensors(ck.params)) {
        const auto it = manifest.find(name);
        if (it == manifest.end()) {
            throw DataError("checkpoint is missing tensor " + name);
        }
        const auto rows = it->second.at("rows").get<Eigen::Index>();
        const auto cols = it->second.at("cols").get<Eigen::Index>();
        const auto offset = it->second.at("offset").get<std::size_t>();
        if (rows != t->rows() || cols != t->cols()) {
            throw DataError("tensor " + name + " has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                            ", config expects " + std::to_string(t->rows()) + "x" + std::to_string(t->cols()));
        }
        const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
        if (offset + bytes > payload.size()) {
            throw DataError("tensor " + name + " extends beyond the payload");
        }
        for (Eigen::Index i = 0; i < t->size(); ++i) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, payload.data() + offset + static_cast<std::size_t>(i) * sizeof(double), sizeof(bits));
            t->data()[i] = std::bit_cast<double>(to_little_endian(bits));
        }
    }
    return ck;
}

} // namespace tvrec::model
