#pragma once

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "encoder.hpp"
#include "random.hpp"
#include "reformulate.hpp"

namespace fewent {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline double accuracy(const std::vector<EntailLabel>& golds, const std::vector<EntailLabel>& preds) {
    if (golds.size() != preds.size())
        throw InvalidInput("accuracy: " + std::to_string(golds.size()) + " golds vs " +
                           std::to_string(preds.size()) + " predictions");
    if (golds.empty()) throw InvalidInput("accuracy of an empty sequence");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) hit += golds[i] == preds[i];
    return static_cast<double>(hit) / static_cast<double>(golds.size());
}

enum class Gender : std::uint8_t { Masculine, Feminine };

inline Gender pronoun_gender(const std::string& pronoun) {
    std::string s(trim(pronoun));
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "he" || s == "him" || s == "his") return Gender::Masculine;
    if (s == "she" || s == "her" || s == "hers") return Gender::Feminine;
    throw InvalidInput("cannot classify pronoun '" + pronoun + "' by gender");
}

struct PRF {
    std::size_t tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

inline PRF prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    PRF r{tp, fp, fn};
    r.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

struct GapScores {
    PRF masculine, feminine, overall;
};

using CorefPrediction = std::pair<bool, bool>;

// Per-candidate decisions scored by gender; overall is micro-averaged over
// the union of decisions.
inline GapScores gap_f1(const std::vector<std::pair<CorefItem, CorefPrediction>>& items) {
    if (items.empty()) throw InvalidInput("gap_f1 of an empty sequence");
    std::array<std::array<std::size_t, 3>, 2> counts{};  // [gender][tp, fp, fn]
    for (const auto& [item, pred] : items) {
        auto& c = counts[static_cast<std::size_t>(pronoun_gender(item.pronoun))];
        const std::pair<bool, bool> decisions[] = {{pred.first, item.a_is_coref}, {pred.second, item.b_is_coref}};
        for (const auto& [p, g] : decisions) {
            if (p && g) ++c[0];
            else if (p && !g) ++c[1];
            else if (!p && g) ++c[2];
        }
    }
    GapScores out;
    out.masculine = prf_from_counts(counts[0][0], counts[0][1], counts[0][2]);
    out.feminine = prf_from_counts(counts[1][0], counts[1][1], counts[1][2]);
    out.overall = prf_from_counts(counts[0][0] + counts[1][0], counts[0][1] + counts[1][1],
                                  counts[0][2] + counts[1][2]);
    return out;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

// Arithmetic mean and sample (n - 1) standard deviation.
inline MeanStd aggregate_seeds(const std::vector<double>& values, std::ostream* warn = &std::cerr) {
    if (values.empty()) throw InvalidInput("aggregate_seeds of an empty sequence");
    MeanStd r;
    for (double v : values) r.mean += v;
    r.mean /= static_cast<double>(values.size());
    if (values.size() == 1) {
        if (warn) *warn << "warning: single seed, reporting std = 0\n";
        return r;
    }
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    return r;
}

struct MetricReport {
    std::string system_name;
    std::size_t k = 0;
    std::string metric_name = "accuracy";
    std::vector<double> per_seed;
    double mean = 0.0;
    double std = 0.0;
    bool failed = false;
    std::string error;

    static MetricReport from_values(std::string system, std::size_t k, std::vector<double> values,
                                    std::string metric = "accuracy") {
        MetricReport r;
        r.system_name = std::move(system);
        r.k = k;
        r.metric_name = std::move(metric);
        r.per_seed = std::move(values);
        const auto ms = aggregate_seeds(r.per_seed, nullptr);
        r.mean = ms.mean;
        r.std = ms.std;
        return r;
    }
};

// "mean±std" in percent with two decimals.
inline std::string format_cell(double mean, double std) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f±%.2f", 100.0 * mean, 100.0 * std);
    return buf;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark
// ---------------------------------------------------------------------------

// A toy source/target pair of entailment tasks. The hypothesis carries one
// planted signal token that determines the label; premises are filler.
// Source signal tokens form one set per three-way class. A target example
// takes its signal from the matching source set with probability `shift`
// (two-way non-entailment maps to neutral or contradiction) and from a
// target-private set otherwise.
struct SyntheticTaskSpec {
    std::size_t vocab_size = 20;           // filler tokens
    std::size_t source_signal_size = 20;   // per source class
    std::size_t target_private_size = 1;   // per target class
    double noise = 0.05;                   // training splits: prob. the signal comes from another class
    double shift = 0.7;                    // prob. a target signal is shared with the source
    LabelScheme target_scheme = LabelScheme::TwoWay;
    std::size_t source_per_class = 150;
    std::size_t target_pool_per_class = 100;
    std::size_t target_test_per_class = 200;
    std::size_t premise_length = 6;
    std::size_t hypothesis_fillers = 4;

    void validate() const {
        if (!(shift >= 0.0 && shift <= 1.0)) throw ConfigError("shift must lie in [0, 1]");
        if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("noise must lie in [0, 1]");
        if (vocab_size == 0 || source_signal_size == 0 || target_private_size == 0)
            throw ConfigError("token set sizes must be positive");
        if (premise_length == 0) throw ConfigError("premise_length must be positive");
    }
};

struct SyntheticData {
    Dataset source;
    Dataset target_pool;
    Dataset target_test;
};

namespace synthetic {

inline std::string filler(std::size_t i) { return "w" + std::to_string(i); }

inline std::string source_signal(EntailLabel label, std::size_t i) {
    return "s" + std::to_string(static_cast<int>(label)) + "_" + std::to_string(i);
}

inline std::string target_signal(EntailLabel label, std::size_t i) {
    return "t" + std::to_string(static_cast<int>(label)) + "_" + std::to_string(i);
}

// Source label(s) whose signal tokens a target class shares.
inline std::vector<EntailLabel> shared_source_classes(EntailLabel target_label) {
    if (target_label == EntailLabel::NonEntailment) return {EntailLabel::Neutral, EntailLabel::Contradiction};
    return {target_label};
}

}  // namespace synthetic

namespace detail {

inline std::string draw_signal(const SyntheticTaskSpec& spec, TaskKind task, EntailLabel label, Rng& rng) {
    if (task == TaskKind::Source)
        return synthetic::source_signal(label, static_cast<std::size_t>(rng.below(spec.source_signal_size)));
    if (rng.bernoulli(spec.shift)) {
        const auto shared = synthetic::shared_source_classes(label);
        const auto src = shared[static_cast<std::size_t>(rng.below(shared.size()))];
        return synthetic::source_signal(src, static_cast<std::size_t>(rng.below(spec.source_signal_size)));
    }
    return synthetic::target_signal(label, static_cast<std::size_t>(rng.below(spec.target_private_size)));
}

inline EntailmentPair synth_pair(const SyntheticTaskSpec& spec, TaskKind task, LabelScheme scheme, EntailLabel label,
                                 double noise, Rng& rng) {
    auto fill = [&](std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) {
            if (i) s += ' ';
            s += synthetic::filler(static_cast<std::size_t>(rng.below(spec.vocab_size)));
        }
        return s;
    };
    EntailmentPair p;
    p.premise = fill(spec.premise_length);
    EntailLabel signal_class = label;
    if (rng.bernoulli(noise)) {
        std::vector<EntailLabel> others;
        for (auto c : scheme_classes(scheme))
            if (c != label) others.push_back(c);
        signal_class = others[static_cast<std::size_t>(rng.below(others.size()))];
    }
    auto tokens = tokenize(fill(spec.hypothesis_fillers));
    const auto pos = static_cast<std::size_t>(rng.below(tokens.size() + 1));
    tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos), draw_signal(spec, task, signal_class, rng));
    for (std::size_t i = 0; i < tokens.size(); ++i) p.hypothesis += (i ? " " : "") + tokens[i];
    p.label = label;
    p.task = {task, task == TaskKind::Source ? "synthetic-source" : "synthetic-target"};
    return p;
}

// Noise corrupts training splits only; the test split stays rule-consistent.
inline Dataset synth_split(const SyntheticTaskSpec& spec, TaskKind task, LabelScheme scheme, std::size_t per_class,
                           Split split, Rng& rng) {
    const double noise = split == Split::Test ? 0.0 : spec.noise;
    Dataset ds;
    ds.scheme = scheme;
    ds.split = split;
    for (auto label : scheme_classes(scheme))
        for (std::size_t i = 0; i < per_class; ++i) ds.pairs.push_back(synth_pair(spec, task, scheme, label, noise, rng));
    rng.shuffle(ds.pairs);
    return ds;
}

}  // namespace detail

inline SyntheticData make_synthetic(const SyntheticTaskSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    SyntheticData out;
    out.source = detail::synth_split(spec, TaskKind::Source, LabelScheme::ThreeWay, spec.source_per_class,
                                     Split::Train, rng);
    out.target_pool = detail::synth_split(spec, TaskKind::Target, spec.target_scheme, spec.target_pool_per_class,
                                          Split::Train, rng);
    out.target_test = detail::synth_split(spec, TaskKind::Target, spec.target_scheme, spec.target_test_per_class,
                                          Split::Test, rng);
    return out;
}

// Rule classifier that knows the source signal sets only: the first source
// signal token in the hypothesis decides (n/c fold to non-entailment for a
// two-way scheme); no signal means entailment.
inline EntailLabel source_rule(const EntailmentPair& pair, LabelScheme scheme) {
    for (const auto& tok : tokenize(pair.hypothesis)) {
        if (tok.size() < 2 || tok[0] != 's') continue;
        const int cls = tok[1] - '0';
        if (cls == 0) return EntailLabel::Entailment;
        if (scheme == LabelScheme::TwoWay) return EntailLabel::NonEntailment;
        return cls == 1 ? EntailLabel::Neutral : EntailLabel::Contradiction;
    }
    return EntailLabel::Entailment;
}

// Rule classifier that knows every signal set of the target task.
inline EntailLabel target_rule(const EntailmentPair& pair, LabelScheme scheme) {
    for (const auto& tok : tokenize(pair.hypothesis)) {
        if (tok.size() >= 2 && tok[0] == 't') {
            const int raw = tok[1] - '0';
            return static_cast<EntailLabel>(raw);
        }
    }
    return source_rule(pair, scheme);
}

}  // namespace fewent
