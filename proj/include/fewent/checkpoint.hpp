#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "encoder.hpp"
#include "nnblock.hpp"
#include "trainer.hpp"

namespace fewent {

inline constexpr int kFormatVersion = 1;

// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Training configuration <-> JSON
// ---------------------------------------------------------------------------

// Flat key set: every TrainConfig field plus the encoder fields.
inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"k", c.k},
            {"m", c.m},
            {"batch_size_S", c.batch_size_S},
            {"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"seed", c.seed},
            {"optimizer", std::string(to_string(c.optimizer))},
            {"prototype_gradients", c.prototype_gradients},
            {"d", c.encoder.d},
            {"embed_dim", c.encoder.embed_dim},
            {"dropout_rate", c.encoder.dropout_rate},
            {"freeze_embedding", c.encoder.freeze_embedding},
            {"match_dropout", c.match_dropout},
            {"freeze", c.freeze}};
}

inline const std::vector<std::string>& train_config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        const auto defaults = to_json(TrainConfig{});
        for (const auto& [key, value] : defaults.items()) out.push_back(key);
        return out;
    }();
    return keys;
}

// Applies the keys present in `j` on top of `base`. Keys outside the known
// set (plus `extra_keys`) are rejected all at once; so are wrongly-typed
// values.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {},
                                          const std::set<std::string>& extra_keys = {}) {
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    const auto& known = train_config_keys();
    std::vector<std::string> unknown;
    for (const auto& [key, value] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end() && !extra_keys.count(key)) unknown.push_back(key);
    if (!unknown.empty()) {
        std::string msg = "unknown configuration key(s):";
        for (const auto& k : unknown) msg += " " + k;
        throw ConfigError(msg);
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
        };
        get("k", base.k);
        get("m", base.m);
        get("batch_size_S", base.batch_size_S);
        get("epochs", base.epochs);
        get("learning_rate", base.learning_rate);
        get("seed", base.seed);
        if (j.contains("optimizer")) base.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
        get("prototype_gradients", base.prototype_gradients);
        get("d", base.encoder.d);
        get("embed_dim", base.encoder.embed_dim);
        get("dropout_rate", base.encoder.dropout_rate);
        get("freeze_embedding", base.encoder.freeze_embedding);
        get("match_dropout", base.match_dropout);
        get("freeze", base.freeze);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad configuration value: ") + e.what());
    }
    return base;
}

inline std::string config_hash(const TrainConfig& c) { return fnv1a_hex(to_json(c).dump()); }

// Header object carried by every artefact of a run.
inline nlohmann::json run_meta(const TrainConfig& c, const std::string& kind) {
    return {{"format", kind}, {"version", kFormatVersion}, {"seed", c.seed}, {"config_hash", config_hash(c)}};
}

// ---------------------------------------------------------------------------
// Model checkpoints
// ---------------------------------------------------------------------------

struct LoadedModel {
    std::unique_ptr<CrossTaskModel> model;
    PrototypeBank bank;
    TrainConfig config;
    nlohmann::json meta;
};

inline nlohmann::json bank_to_json(const PrototypeBank& bank) {
    Tensor t("bank", bank.columns.rows(), bank.columns.cols());
    t.value = bank.columns;
    auto j = tensor_to_json(t);
    j.erase("trainable");
    j["target_scheme"] = std::string(to_string(bank.target_scheme));
    return j;
}

inline PrototypeBank bank_from_json(const nlohmann::json& j, std::size_t d) {
    Tensor t("bank", static_cast<Eigen::Index>(d), 6);
    tensor_from_json(t, j);
    return {t.value, parse_scheme(j.at("target_scheme").get<std::string>())};
}

inline nlohmann::json checkpoint_to_json(CrossTaskModel& model, const PrototypeBank& bank, const TrainConfig& config) {
    return {{"meta", run_meta(config, "checkpoint")},
            {"config", to_json(config)},
            {"encoder", model.encoder->config_json()},
            {"match_dropout", model.match.dropout_rate},
            {"tensors", parameters_to_json(model.parameters())},
            {"bank", bank_to_json(bank)}};
}

inline LoadedModel checkpoint_from_json(const nlohmann::json& j) {
    try {
        const auto& meta = j.at("meta");
        if (meta.at("version").get<int>() != kFormatVersion)
            throw InvalidInput("unsupported checkpoint version " + meta.at("version").dump());
        LoadedModel out;
        out.meta = meta;
        out.config = train_config_from_json(j.at("config"));
        const auto& enc = j.at("encoder");
        if (enc.at("type").get<std::string>() != "bag")
            throw InvalidInput("unknown encoder type " + enc.at("type").dump());
        out.model = std::make_unique<CrossTaskModel>(BagEncoder::from_config_json(enc),
                                                     j.at("match_dropout").get<double>());
        parameters_from_json(out.model->parameters(), j.at("tensors"));
        out.bank = bank_from_json(j.at("bank"), out.model->encoder->dim());
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const std::string& path, CrossTaskModel& model, const PrototypeBank& bank,
                            const TrainConfig& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path);
    out << checkpoint_to_json(model, bank, config).dump() << '\n';
    if (!out) throw InvalidInput("write to " + path + " failed");
}

inline LoadedModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidInput(path + ": " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace fewent
