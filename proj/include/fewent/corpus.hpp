#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "random.hpp"

namespace fewent {

using json = nlohmann::json;

enum class EntailLabel : std::uint8_t { Entailment = 0, Neutral = 1, Contradiction = 2, NonEntailment = 3 };

enum class LabelScheme : std::uint8_t { ThreeWay, TwoWay };

enum class TaskKind : std::uint8_t { Source, Target };

enum class Split : std::uint8_t { Train, Dev, Test };

struct TaskId {
    TaskKind kind = TaskKind::Source;
    std::string name;

    friend bool operator==(const TaskId&, const TaskId&) = default;
};

inline std::string_view to_string(EntailLabel label) {
    switch (label) {
        case EntailLabel::Entailment: return "entailment";
        case EntailLabel::Neutral: return "neutral";
        case EntailLabel::Contradiction: return "contradiction";
        case EntailLabel::NonEntailment: return "non-entailment";
    }
    return "?";
}

inline std::string_view to_string(LabelScheme scheme) {
    return scheme == LabelScheme::ThreeWay ? "three_way" : "two_way";
}

inline LabelScheme parse_scheme(std::string_view text) {
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "three_way" || s == "3" || s == "three-way") return LabelScheme::ThreeWay;
    if (s == "two_way" || s == "2" || s == "two-way") return LabelScheme::TwoWay;
    throw InvalidInput("unknown label scheme '" + std::string(text) + "'");
}

// Case-insensitive label alias table.
inline std::optional<EntailLabel> parse_label(std::string_view text) {
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "entailment") return EntailLabel::Entailment;
    if (s == "neutral") return EntailLabel::Neutral;
    if (s == "contradiction") return EntailLabel::Contradiction;
    if (s == "non-entailment" || s == "not_entailment") return EntailLabel::NonEntailment;
    return std::nullopt;
}

// Classes of a scheme in canonical order.
inline std::vector<EntailLabel> scheme_classes(LabelScheme scheme) {
    if (scheme == LabelScheme::ThreeWay)
        return {EntailLabel::Entailment, EntailLabel::Neutral, EntailLabel::Contradiction};
    return {EntailLabel::Entailment, EntailLabel::NonEntailment};
}

inline bool label_in_scheme(EntailLabel label, LabelScheme scheme) {
    if (scheme == LabelScheme::ThreeWay) return label != EntailLabel::NonEntailment;
    return label == EntailLabel::Entailment || label == EntailLabel::NonEntailment;
}

inline std::string_view trim(std::string_view s) {
    const auto* ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

struct EntailmentPair {
    std::string premise;
    std::string hypothesis;
    EntailLabel label = EntailLabel::Entailment;
    TaskId task;
    std::optional<std::string> origin_id;

    friend bool operator==(const EntailmentPair&, const EntailmentPair&) = default;
};

inline void validate_pair(const EntailmentPair& pair) {
    if (trim(pair.premise).empty()) throw InvalidInput("empty premise");
    if (trim(pair.hypothesis).empty()) throw InvalidInput("empty hypothesis");
}

struct Dataset {
    LabelScheme scheme = LabelScheme::ThreeWay;
    std::vector<EntailmentPair> pairs;
    Split split = Split::Train;

    std::size_t count(EntailLabel label) const {
        return static_cast<std::size_t>(
            std::count_if(pairs.begin(), pairs.end(), [&](const auto& p) { return p.label == label; }));
    }

    std::size_t size() const noexcept { return pairs.size(); }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

// k labelled pairs per class of the scheme.
struct ExampleSet {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    LabelScheme scheme = LabelScheme::ThreeWay;
    std::map<EntailLabel, std::vector<EntailmentPair>> per_class;

    const std::vector<EntailmentPair>& of(EntailLabel label) const {
        auto it = per_class.find(label);
        if (it == per_class.end())
            throw InvalidInput("example set has no class '" + std::string(to_string(label)) + "'");
        return it->second;
    }

    // All pairs, classes in canonical order.
    std::vector<EntailmentPair> flatten() const {
        std::vector<EntailmentPair> out;
        for (auto label : scheme_classes(scheme)) {
            const auto& v = of(label);
            out.insert(out.end(), v.begin(), v.end());
        }
        return out;
    }

    friend bool operator==(const ExampleSet&, const ExampleSet&) = default;
};

// ---------------------------------------------------------------------------
// JSONL
// ---------------------------------------------------------------------------

inline json pair_to_json(const EntailmentPair& pair) {
    json j;
    j["premise"] = pair.premise;
    j["hypothesis"] = pair.hypothesis;
    j["label"] = std::string(to_string(pair.label));
    if (pair.origin_id) j["origin_id"] = *pair.origin_id;
    return j;
}

// Lines whose object carries a "_meta" key are artifact headers, not records.
inline bool is_meta_line(const json& j) { return j.is_object() && j.contains("_meta"); }

inline EntailmentPair pair_from_json(const json& j, LabelScheme scheme, const TaskId& task, std::size_t line) {
    if (!j.is_object()) throw ParseError("record is not a JSON object", line);
    for (const char* key : {"premise", "hypothesis", "label"}) {
        if (!j.contains(key) || !j[key].is_string())
            throw ParseError(std::string("missing or non-string field '") + key + "'", line);
    }
    EntailmentPair pair;
    pair.premise = j["premise"].get<std::string>();
    pair.hypothesis = j["hypothesis"].get<std::string>();
    pair.task = task;
    const auto raw = j["label"].get<std::string>();
    const auto label = parse_label(raw);
    if (!label) throw ParseError("unknown label '" + raw + "'", line);
    if (!label_in_scheme(*label, scheme))
        throw SchemeViolation("line " + std::to_string(line) + ": label '" + raw + "' is outside the " +
                              std::string(to_string(scheme)) + " scheme");
    pair.label = *label;
    if (j.contains("origin_id")) {
        if (!j["origin_id"].is_string()) throw ParseError("origin_id must be a string", line);
        pair.origin_id = j["origin_id"].get<std::string>();
    }
    if (trim(pair.premise).empty()) throw ParseError("empty premise", line);
    if (trim(pair.hypothesis).empty()) throw ParseError("empty hypothesis", line);
    return pair;
}

inline Dataset read_jsonl(std::istream& in, LabelScheme scheme, const TaskId& task = {}, json* meta = nullptr) {
    Dataset ds;
    ds.scheme = scheme;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
        }
        if (is_meta_line(j)) {
            if (meta) *meta = j["_meta"];
            continue;
        }
        ds.pairs.push_back(pair_from_json(j, scheme, task, lineno));
    }
    return ds;
}

inline Dataset load_jsonl(const std::string& path, LabelScheme scheme, const TaskId& task = {}, json* meta = nullptr) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open '" + path + "'");
    return read_jsonl(in, scheme, task, meta);
}

inline void write_jsonl(std::ostream& out, const std::vector<EntailmentPair>& pairs) {
    for (const auto& p : pairs) out << pair_to_json(p).dump() << '\n';
}

inline void write_jsonl(std::ostream& out, const Dataset& ds) { write_jsonl(out, ds.pairs); }

// ---------------------------------------------------------------------------
// k-shot sampling
// ---------------------------------------------------------------------------

namespace detail {

// Per class (canonical order): indices drawn without replacement, in draw
// order, from one generator seeded with `seed`.
inline std::map<EntailLabel, std::vector<std::size_t>> draw_kshot(const Dataset& ds, std::size_t k,
                                                                   std::uint64_t seed) {
    if (k == 0) throw InvalidInput("k must be positive");
    Rng rng(seed);
    std::map<EntailLabel, std::vector<std::size_t>> drawn;
    for (auto label : scheme_classes(ds.scheme)) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < ds.pairs.size(); ++i)
            if (ds.pairs[i].label == label) members.push_back(i);
        if (members.size() < k) throw InsufficientExamples(std::string(to_string(label)), members.size(), k);
        auto& out = drawn[label];
        for (auto pos : rng.sample_indices(members.size(), k)) out.push_back(members[pos]);
    }
    return drawn;
}

}  // namespace detail

inline ExampleSet sample_kshot(const Dataset& ds, std::size_t k, std::uint64_t seed) {
    ExampleSet set;
    set.k = k;
    set.seed = seed;
    set.scheme = ds.scheme;
    for (const auto& [label, idx] : detail::draw_kshot(ds, k, seed)) {
        auto& v = set.per_class[label];
        for (auto i : idx) v.push_back(ds.pairs[i]);
    }
    return set;
}

struct SourceSplit {
    ExampleSet sample_set;
    Dataset remainder;
};

// The source sample set plus everything not drawn, in original order.
inline SourceSplit sample_source_set(const Dataset& source, std::size_t k, std::uint64_t seed) {
    const auto drawn = detail::draw_kshot(source, k, seed);
    SourceSplit out;
    out.sample_set.k = k;
    out.sample_set.seed = seed;
    out.sample_set.scheme = source.scheme;
    std::vector<bool> taken(source.pairs.size(), false);
    for (const auto& [label, idx] : drawn) {
        auto& v = out.sample_set.per_class[label];
        for (auto i : idx) {
            v.push_back(source.pairs[i]);
            taken[i] = true;
        }
    }
    out.remainder.scheme = source.scheme;
    out.remainder.split = source.split;
    for (std::size_t i = 0; i < source.pairs.size(); ++i)
        if (!taken[i]) out.remainder.pairs.push_back(source.pairs[i]);
    return out;
}

// Example-set file: a "_meta" header line (k, seed, scheme plus caller
// extras), then the pairs in canonical class order.
inline void write_example_set(std::ostream& out, const ExampleSet& set, json extra_meta = json::object()) {
    json meta = std::move(extra_meta);
    meta["k"] = set.k;
    meta["seed"] = set.seed;
    meta["scheme"] = std::string(to_string(set.scheme));
    out << json{{"_meta", meta}}.dump() << '\n';
    write_jsonl(out, set.flatten());
}

inline ExampleSet read_example_set(std::istream& in, const TaskId& task = {TaskKind::Target, "target"}) {
    // The header names the scheme, so read raw lines first.
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    std::string first;
    {
        std::istringstream probe(text);
        while (std::getline(probe, first) && trim(first).empty()) {}
    }
    json head;
    try {
        head = json::parse(first);
    } catch (const json::parse_error&) {
        throw ParseError("example-set file must start with a _meta header", 1);
    }
    if (!is_meta_line(head)) throw ParseError("example-set file must start with a _meta header", 1);
    const auto& meta = head["_meta"];
    ExampleSet set;
    set.k = meta.at("k").get<std::size_t>();
    set.seed = meta.at("seed").get<std::uint64_t>();
    set.scheme = parse_scheme(meta.at("scheme").get<std::string>());
    std::istringstream body(text);
    const auto ds = read_jsonl(body, set.scheme, task);
    for (auto label : scheme_classes(set.scheme)) set.per_class[label];
    for (const auto& p : ds.pairs) set.per_class[p.label].push_back(p);
    for (const auto& [label, v] : set.per_class) {
        if (v.size() != set.k)
            throw InvalidInput("example set class '" + std::string(to_string(label)) + "' has " +
                               std::to_string(v.size()) + " pairs, header says k=" + std::to_string(set.k));
    }
    return set;
}

inline ExampleSet load_example_set(const std::string& path, const TaskId& task = {TaskKind::Target, "target"}) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open '" + path + "'");
    return read_example_set(in, task);
}

}  // namespace fewent
