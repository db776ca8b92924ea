// Test fixtures and independent scalar reference implementations. The
// reference code below deliberately avoids Eigen expressions: every value is
// built from explicit loops over plain indices.
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fewent/fewent.hpp"

namespace fixture {

using namespace fewent;

inline EntailmentPair pair(std::string premise, std::string hypothesis, EntailLabel label,
                           TaskKind kind = TaskKind::Target) {
    EntailmentPair p;
    p.premise = std::move(premise);
    p.hypothesis = std::move(hypothesis);
    p.label = label;
    p.task = {kind, kind == TaskKind::Source ? "src" : "tgt"};
    return p;
}

// A random sentence over tokens "v0".."v{vocab-1}".
inline std::string sentence(Rng& rng, std::size_t vocab, std::size_t len) {
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += (i ? " v" : "v") + std::to_string(rng.below(vocab));
    return s;
}

inline std::vector<std::string> token_list(std::size_t vocab) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < vocab; ++i) out.push_back("v" + std::to_string(i));
    return out;
}

inline ExampleSet random_set(Rng& rng, LabelScheme scheme, std::size_t k, std::size_t vocab, TaskKind kind) {
    ExampleSet set;
    set.k = k;
    set.scheme = scheme;
    for (auto label : scheme_classes(scheme))
        for (std::size_t i = 0; i < k; ++i)
            set.per_class[label].push_back(
                pair(sentence(rng, vocab, 1 + rng.below(4)), sentence(rng, vocab, 1 + rng.below(4)), label, kind));
    return set;
}

// Encoder + block with every tensor drawn from U(-scale, scale) so no
// parameter sits at a special value.
inline std::unique_ptr<CrossTaskModel> random_model(std::size_t d, std::size_t vocab, std::uint64_t seed,
                                                    double dropout = 0.0, double scale = 0.5) {
    EncoderConfig cfg;
    cfg.d = d;
    cfg.embed_dim = d;
    cfg.dropout_rate = dropout;
    auto model = std::make_unique<CrossTaskModel>(
        std::make_unique<BagEncoder>(cfg, Vocabulary(token_list(vocab)), seed), dropout);
    Rng rng(seed ^ 0x5151);
    for (auto* t : model->parameters()) t->init_uniform(rng, scale);
    return model;
}

// ---------------------------------------------------------------------------
// Scalar oracles
// ---------------------------------------------------------------------------

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::vector<double> oracle_encode(BagEncoder& enc, const EntailmentPair& p) {
    const auto& vocab = enc.vocabulary();
    const auto& E = enc.embedding().value;
    const auto& W = enc.hidden_weight().value;
    const auto& b = enc.hidden_bias().value;
    const std::size_t e = static_cast<std::size_t>(E.cols());
    auto pool = [&](const std::string& text) {
        std::vector<double> acc(e, 0.0);
        const auto ids = vocab.ids(text);
        for (int id : ids)
            for (std::size_t j = 0; j < e; ++j) acc[j] += E(id, static_cast<Eigen::Index>(j));
        for (auto& v : acc) v /= static_cast<double>(ids.size());
        return acc;
    };
    const auto u = pool(p.premise), v = pool(p.hypothesis);
    std::vector<double> x;
    for (std::size_t j = 0; j < e; ++j) x.push_back(u[j]);
    for (std::size_t j = 0; j < e; ++j) x.push_back(v[j]);
    for (std::size_t j = 0; j < e; ++j) x.push_back(u[j] * v[j]);
    for (std::size_t j = 0; j < e; ++j) x.push_back(std::fabs(u[j] - v[j]));
    std::vector<double> out(static_cast<std::size_t>(W.rows()));
    for (std::size_t r = 0; r < out.size(); ++r) {
        double s = b(static_cast<Eigen::Index>(r), 0);
        for (std::size_t c = 0; c < x.size(); ++c) s += W(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * x[c];
        out[r] = std::tanh(s);
    }
    return out;
}

inline std::vector<double> oracle_mean(BagEncoder& enc, const std::vector<EntailmentPair>& pairs) {
    std::vector<double> acc;
    for (const auto& p : pairs) {
        const auto v = oracle_encode(enc, p);
        if (acc.empty()) acc.assign(v.size(), 0.0);
        for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
    }
    for (auto& v : acc) v /= static_cast<double>(pairs.size());
    return acc;
}

// Six prototype columns (target n and c share one column when two-way).
inline std::vector<std::vector<double>> oracle_prototypes(BagEncoder& enc, const ExampleSet& s, const ExampleSet& t) {
    std::vector<std::vector<double>> out;
    out.push_back(oracle_mean(enc, s.of(EntailLabel::Entailment)));
    out.push_back(oracle_mean(enc, s.of(EntailLabel::Neutral)));
    out.push_back(oracle_mean(enc, s.of(EntailLabel::Contradiction)));
    out.push_back(oracle_mean(enc, t.of(EntailLabel::Entailment)));
    if (t.scheme == LabelScheme::TwoWay) {
        out.push_back(oracle_mean(enc, t.of(EntailLabel::NonEntailment)));
        out.push_back(out.back());
    } else {
        out.push_back(oracle_mean(enc, t.of(EntailLabel::Neutral)));
        out.push_back(oracle_mean(enc, t.of(EntailLabel::Contradiction)));
    }
    return out;
}

inline std::vector<double> matvec_tanh(const Matrix& W, const std::vector<double>& x) {
    std::vector<double> out(static_cast<std::size_t>(W.rows()));
    for (std::size_t r = 0; r < out.size(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) s += W(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * x[c];
        out[r] = std::tanh(s);
    }
    return out;
}

// Matching score without dropout.
inline double oracle_match(const std::vector<double>& p, const std::vector<double>& q, const MatchParams& m) {
    const std::size_t d = p.size();
    std::vector<double> I;
    for (std::size_t i = 0; i < d; ++i) I.push_back(p[i]);
    for (std::size_t i = 0; i < d; ++i) I.push_back(q[i]);
    for (std::size_t i = 0; i < d; ++i) I.push_back(p[i] * q[i]);
    for (std::size_t i = 0; i < d; ++i) I.push_back(p[i] - q[i]);
    auto r1 = matvec_tanh(m.W1.value, I);
    for (std::size_t i = 0; i < r1.size(); ++i) r1[i] += I[i];
    auto r2 = matvec_tanh(m.W2.value, r1);
    for (std::size_t i = 0; i < r2.size(); ++i) r2[i] += r1[i];
    const auto r3 = matvec_tanh(m.W3.value, r2);
    const auto r4 = matvec_tanh(m.W4.value, r3);
    double a = 0.0;
    for (std::size_t i = 0; i < r4.size(); ++i) a += m.W5.value(static_cast<Eigen::Index>(i), 0) * r4[i];
    return sig(a);
}

inline std::array<double, 3> oracle_combine(const std::array<double, 3>& gs, const std::array<double, 3>& gt,
                                            const CombineParams& c) {
    double a = 0.0;
    for (int i = 0; i < 3; ++i) a += c.W7.value(i, 0) * gs[i] + c.W7.value(i + 3, 0) * gt[i];
    const double lambda = sig(a);
    std::array<double, 3> z{};
    for (int i = 0; i < 3; ++i)
        z[i] = lambda * sig(c.W6.value(i, 0) * gs[i]) + (1.0 - lambda) * sig(c.W6.value(i, 0) * gt[i]);
    double total = 0.0;
    for (int i = 0; i < 3; ++i) total += std::exp(z[i]);
    std::array<double, 3> g{};
    for (int i = 0; i < 3; ++i) g[i] = std::exp(z[i]) / total;
    return g;
}

inline double oracle_query_loss(CrossTaskModel& model, const EntailmentPair& query, const ExampleSet& s,
                                const ExampleSet& t) {
    auto& enc = dynamic_cast<BagEncoder&>(*model.encoder);
    const auto protos = oracle_prototypes(enc, s, t);
    const auto q = oracle_encode(enc, query);
    std::array<double, 3> gs{}, gt{};
    for (int i = 0; i < 3; ++i) {
        gs[i] = oracle_match(protos[static_cast<std::size_t>(i)], q, model.match);
        gt[i] = oracle_match(protos[static_cast<std::size_t>(i + 3)], q, model.match);
    }
    const auto g = oracle_combine(gs, gt, model.combine);
    double p = 0.0;
    switch (query.label) {
        case EntailLabel::Entailment: p = g[0]; break;
        case EntailLabel::Neutral: p = g[1]; break;
        case EntailLabel::Contradiction: p = g[2]; break;
        case EntailLabel::NonEntailment: p = g[1] + g[2]; break;
    }
    return -std::log(p);
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

struct GradCheck {
    double max_rel = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

// Compares each tensor's accumulated grad with central differences of
// `loss`. Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
// entries whose true gradient is ~0 from dividing by rounding noise.
inline GradCheck check_gradients(const ParameterSet& params, const std::function<double()>& loss, double h = 1e-5,
                                 double floor = 1e-6) {
    GradCheck out;
    for (auto* t : params) {
        for (Eigen::Index r = 0; r < t->value.rows(); ++r) {
            for (Eigen::Index c = 0; c < t->value.cols(); ++c) {
                const double keep = t->value(r, c);
                t->value(r, c) = keep + h;
                const double up = loss();
                t->value(r, c) = keep - h;
                const double down = loss();
                t->value(r, c) = keep;
                const double numeric = (up - down) / (2.0 * h);
                const double analytic = t->grad(r, c);
                const double rel =
                    std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
                ++out.checked;
                if (rel > out.max_rel) {
                    out.max_rel = rel;
                    out.worst = t->name + "(" + std::to_string(r) + "," + std::to_string(c) + ")";
                }
            }
        }
    }
    return out;
}

}  // namespace fixture
