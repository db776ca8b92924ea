#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "encoder.hpp"
#include "nnblock.hpp"
#include "tensor.hpp"

namespace fewent {

inline constexpr double kProbabilityFloor = 1e-12;

struct TrainConfig {
    std::size_t k = 0;  // 0: take from the target example set
    std::size_t m = 0;  // 0: max(1, k / 2)
    std::size_t batch_size_S = 16;
    std::size_t epochs = 10;
    double learning_rate = 1e-3;
    std::uint64_t seed = 42;
    OptimizerKind optimizer = OptimizerKind::Adam;
    bool prototype_gradients = true;
    EncoderConfig encoder;
    double match_dropout = 0.1;
    std::vector<std::string> freeze;

    std::size_t effective_m(std::size_t k_) const { return m ? m : std::max<std::size_t>(1, k_ / 2); }
};

struct QueryBatch {
    std::vector<EntailmentPair> source_queries;
    std::vector<EntailmentPair> target_queries;
};

struct LossBreakdown {
    double l_S = 0.0;
    double l_T = 0.0;
    double l = 0.0;
};

struct LogRecord {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    LossBreakdown loss;
};

// Encoder plus the nearest-neighbour block (matching MLP and combiner).
class CrossTaskModel {
public:
    CrossTaskModel(std::unique_ptr<Encoder> enc, double match_dropout = 0.1)
        : encoder(std::move(enc)), match(encoder->dim(), match_dropout) {}

    // Matching weights Glorot-uniform; W6 starts at 1 and W7 at 0
    // (lambda = 1/2).
    void init_block(Rng& rng) {
        match.init(rng);
        combine.W6.value.setOnes();
        combine.W7.value.setZero();
    }

    ParameterSet parameters() {
        ParameterSet all = encoder->parameters();
        for (auto* t : match.parameters()) all.push_back(t);
        for (auto* t : combine.parameters()) all.push_back(t);
        return all;
    }

    std::unique_ptr<Encoder> encoder;
    MatchParams match;
    CombineParams combine;
};

// ---------------------------------------------------------------------------
// Query batches
// ---------------------------------------------------------------------------

inline QueryBatch build_query_batch(std::vector<EntailmentPair> remainder_batch, const ExampleSet& target_set,
                                    std::size_t m, Rng& rng) {
    if (m == 0) throw ConfigError("m must be positive");
    if (m > target_set.k)
        throw ConfigError("m=" + std::to_string(m) + " exceeds k=" + std::to_string(target_set.k));
    QueryBatch batch;
    batch.source_queries = std::move(remainder_batch);
    for (auto label : scheme_classes(target_set.scheme)) {
        const auto& support = target_set.of(label);
        for (auto i : rng.sample_indices(support.size(), m)) batch.target_queries.push_back(support[i]);
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Source queries must carry three-way labels; target queries must fit the
// bank's target scheme.
inline void check_query_label(const EntailmentPair& pair, LabelScheme target_scheme) {
    const auto scheme = pair.task.kind == TaskKind::Source ? LabelScheme::ThreeWay : target_scheme;
    if (!label_in_scheme(pair.label, scheme))
        throw SchemeViolation("query label '" + std::string(to_string(pair.label)) + "' is not valid for a " +
                              std::string(to_string(scheme)) + " " +
                              (pair.task.kind == TaskKind::Source ? "source" : "target") + " query");
}

// -log of the gold probability (two-way labels use the collapsed pair),
// floored at kProbabilityFloor. Writes d(loss)/dg when asked.
inline double nll(const Distribution& g, EntailLabel gold, Score3* grad = nullptr) {
    double p = 0.0;
    std::array<bool, 3> in{};
    switch (gold) {
        case EntailLabel::Entailment: in = {true, false, false}; break;
        case EntailLabel::Neutral: in = {false, true, false}; break;
        case EntailLabel::Contradiction: in = {false, false, true}; break;
        case EntailLabel::NonEntailment: in = {false, true, true}; break;
    }
    for (int i = 0; i < 3; ++i)
        if (in[i]) p += g[i];
    const bool floored = p < kProbabilityFloor;
    if (grad) {
        for (int i = 0; i < 3; ++i) (*grad)[i] = (in[i] && !floored) ? -1.0 / p : 0.0;
    }
    return -std::log(floored ? kProbabilityFloor : p);
}

inline Distribution distribution_for(const Vector& q, const PrototypeBank& bank, const MatchParams& match,
                                     const CombineParams& comb, Mode mode = Mode::Eval, Rng* rng = nullptr) {
    const auto [gs, gt] = score_query(q, bank, match, mode, rng);
    return combine_distributions(gs, gt, comb);
}

inline double query_loss(const Encoder& enc, const EntailmentPair& pair, const PrototypeBank& bank,
                         const MatchParams& match, const CombineParams& comb, Mode mode = Mode::Eval,
                         Rng* rng = nullptr) {
    check_query_label(pair, bank.target_scheme);
    return nll(distribution_for(enc.encode(pair, mode, rng), bank, match, comb, mode, rng), pair.label);
}

namespace detail {

inline void require_nonempty(const QueryBatch& batch) {
    if (batch.source_queries.empty()) throw ConfigError("query batch has an empty source sub-batch");
    if (batch.target_queries.empty()) throw ConfigError("query batch has an empty target sub-batch");
}

}  // namespace detail

// Forward-only l_S, l_T and l = l_S + l_T against a fixed bank. Means are
// accumulated in query order.
inline LossBreakdown batch_loss(const CrossTaskModel& model, const QueryBatch& batch, const PrototypeBank& bank,
                                Mode mode = Mode::Eval, Rng* rng = nullptr) {
    detail::require_nonempty(batch);
    LossBreakdown out;
    for (const auto& q : batch.source_queries)
        out.l_S += query_loss(*model.encoder, q, bank, model.match, model.combine, mode, rng);
    for (const auto& q : batch.target_queries)
        out.l_T += query_loss(*model.encoder, q, bank, model.match, model.combine, mode, rng);
    out.l_S /= static_cast<double>(batch.source_queries.size());
    out.l_T /= static_cast<double>(batch.target_queries.size());
    out.l = out.l_S + out.l_T;
    return out;
}

// One full training-step forward pass: rebuild the bank from the current
// parameters, score every query, and (when `with_grads`) backpropagate the
// loss into every trainable tensor's grad. Gradients accumulate; callers zero
// them first.
inline LossBreakdown forward_backward(CrossTaskModel& model, const ExampleSet& source_sample,
                                      const ExampleSet& target_set, const QueryBatch& batch, Mode mode, Rng* rng,
                                      bool with_grads, bool prototype_gradients = true) {
    detail::require_nonempty(batch);
    auto& enc = *model.encoder;
    PrototypeTrace ptrace;
    const bool trace_protos = with_grads && prototype_gradients;
    const PrototypeBank bank =
        compute_prototypes(enc, source_sample, target_set, mode, rng, trace_protos ? &ptrace : nullptr);

    std::vector<const EntailmentPair*> queries;
    for (const auto& q : batch.source_queries) queries.push_back(&q);
    for (const auto& q : batch.target_queries) queries.push_back(&q);
    const auto nq = static_cast<Eigen::Index>(queries.size());
    const auto n_source = batch.source_queries.size();

    Matrix Q(static_cast<Eigen::Index>(enc.dim()), nq);
    std::vector<std::unique_ptr<EncodeTrace>> qtraces(queries.size());
    for (Eigen::Index i = 0; i < nq; ++i) {
        const auto& p = *queries[static_cast<std::size_t>(i)];
        check_query_label(p, bank.target_scheme);
        Q.col(i) = enc.encode(p, mode, rng, with_grads ? &qtraces[static_cast<std::size_t>(i)] : nullptr);
    }

    ScoreTrace strace;
    const auto scores = score_queries(Q, bank, model.match, mode, rng, &strace);

    LossBreakdown out;
    std::vector<Score3> d_source(queries.size()), d_target(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        CombineTrace ctrace;
        const auto g = combine_distributions(scores.source[i], scores.target[i], model.combine, &ctrace);
        Score3 dg{};
        const double loss = nll(g, queries[i]->label, &dg);
        const bool is_source = i < n_source;
        (is_source ? out.l_S : out.l_T) += loss;
        if (!with_grads) continue;
        const double w = 1.0 / static_cast<double>(is_source ? n_source : queries.size() - n_source);
        for (auto& v : dg) v *= w;
        std::tie(d_source[i], d_target[i]) = combine_backward(ctrace, dg, model.combine);
    }
    out.l_S /= static_cast<double>(n_source);
    out.l_T /= static_cast<double>(queries.size() - n_source);
    out.l = out.l_S + out.l_T;
    if (!with_grads) return out;

    const auto grads = score_backward(strace, d_source, d_target, bank.tied(), model.match);
    for (Eigen::Index i = 0; i < nq; ++i) enc.backward(*qtraces[static_cast<std::size_t>(i)], grads.queries.col(i));
    if (trace_protos) prototype_backward(enc, ptrace, bank, grads.bank);
    return out;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

struct Prediction {
    EntailLabel label = EntailLabel::Entailment;
    Distribution g;
};

// Three-way: argmax with ties toward entailment, then neutral. Two-way: the
// three-way argmax with neutral and contradiction folded together.
inline EntailLabel decide(const Distribution& g, LabelScheme scheme) {
    if (scheme == LabelScheme::TwoWay)
        return g[0] >= std::max(g[1], g[2]) ? EntailLabel::Entailment : EntailLabel::NonEntailment;
    int best = 0;
    for (int i = 1; i < 3; ++i)
        if (g[static_cast<std::size_t>(i)] > g[static_cast<std::size_t>(best)]) best = i;
    return best == 0 ? EntailLabel::Entailment : (best == 1 ? EntailLabel::Neutral : EntailLabel::Contradiction);
}

// Entailment score in [0, 1] that crosses 1/2 exactly where decide() flips
// between entailment and the strongest competing class. Used to rank QA
// options and to threshold coreference candidates.
inline double entailment_score(const Distribution& g) {
    const double rival = std::max(g[1], g[2]);
    return g[0] / (g[0] + rival);
}

inline std::vector<Prediction> predict(const CrossTaskModel& model, const std::vector<EntailmentPair>& pairs,
                                       const PrototypeBank& bank) {
    std::vector<Prediction> out;
    if (pairs.empty()) return out;
    Matrix Q(static_cast<Eigen::Index>(model.encoder->dim()), static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i)
        Q.col(static_cast<Eigen::Index>(i)) = model.encoder->encode(pairs[i], Mode::Eval);
    const auto scores = score_queries(Q, bank, model.match, Mode::Eval);
    out.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        Prediction p;
        p.g = combine_distributions(scores.source[i], scores.target[i], model.combine);
        p.label = decide(p.g, bank.target_scheme);
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainResult {
    std::unique_ptr<CrossTaskModel> model;
    ExampleSet source_sample;
    PrototypeBank bank;  // Eval-mode bank from the final parameters
    std::vector<LogRecord> log;
};

inline nlohmann::json to_json(const LogRecord& r) {
    return {{"epoch", r.epoch}, {"batch", r.batch}, {"l_S", r.loss.l_S}, {"l_T", r.loss.l_T}, {"l", r.loss.l}};
}

inline std::vector<std::vector<EntailmentPair>> chunk(const std::vector<EntailmentPair>& pairs, std::size_t size) {
    std::vector<std::vector<EntailmentPair>> out;
    for (std::size_t i = 0; i < pairs.size(); i += size)
        out.emplace_back(pairs.begin() + static_cast<std::ptrdiff_t>(i),
                         pairs.begin() + static_cast<std::ptrdiff_t>(std::min(pairs.size(), i + size)));
    return out;
}

using BatchCallback = std::function<void(const LogRecord&)>;

// Samples the source sample set once, then per remainder mini-batch:
// rebuild prototypes, add m target queries per class, step the optimizer.
// All randomness after sampling comes from one generator seeded with
// config.seed, so runs are reproducible.
inline TrainResult train(const Dataset& source, const ExampleSet& target_set, const TrainConfig& config,
                         const BatchCallback& on_batch = {}) {
    if (source.scheme != LabelScheme::ThreeWay) throw SchemeViolation("source dataset must be three-way");
    const std::size_t k = config.k ? config.k : target_set.k;
    if (k != target_set.k)
        throw ConfigError("config k=" + std::to_string(k) + " but target example set has k=" +
                          std::to_string(target_set.k));
    const std::size_t m = config.effective_m(k);
    if (m > k) throw ConfigError("m=" + std::to_string(m) + " exceeds k=" + std::to_string(k));
    if (config.batch_size_S == 0) throw ConfigError("batch_size_S must be positive");
    if (config.epochs == 0) throw ConfigError("epochs must be positive");

    TrainResult res;
    auto split = sample_source_set(source, k, config.seed);
    for (auto& [label, v] : split.sample_set.per_class)
        for (auto& p : v) p.task.kind = TaskKind::Source;
    for (auto& p : split.remainder.pairs) p.task.kind = TaskKind::Source;
    if (split.remainder.pairs.empty()) throw ConfigError("source has no pairs left after sampling");
    res.source_sample = split.sample_set;

    ExampleSet target = target_set;
    for (auto& [label, v] : target.per_class)
        for (auto& p : v) p.task.kind = TaskKind::Target;

    std::vector<EntailmentPair> vocab_pairs = source.pairs;
    for (const auto& p : target.flatten()) vocab_pairs.push_back(p);

    Rng rng(config.seed);
    res.model = std::make_unique<CrossTaskModel>(
        std::make_unique<BagEncoder>(config.encoder, Vocabulary::build(vocab_pairs), rng.fork()),
        config.match_dropout);
    res.model->init_block(rng);
    const auto params = res.model->parameters();
    for (const auto& pattern : config.freeze) freeze(params, pattern);

    Optimizer opt(config.optimizer, config.learning_rate);
    auto remainder = split.remainder.pairs;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(remainder);
        const auto batches = chunk(remainder, config.batch_size_S);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto qb = build_query_batch(batches[b], target, m, rng);
            zero_grads(params);
            const auto loss =
                forward_backward(*res.model, res.source_sample, target, qb, Mode::Train, &rng, true,
                                 config.prototype_gradients);
            if (!std::isfinite(loss.l)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << " batch " << b << " (l_S=" << loss.l_S
                    << ", l_T=" << loss.l_T << ")";
                throw NumericError(msg.str());
            }
            opt.step(params);
            LogRecord rec{epoch, b, loss};
            res.log.push_back(rec);
            if (on_batch) on_batch(rec);
        }
    }
    res.bank = compute_prototypes(*res.model->encoder, res.source_sample, target, Mode::Eval);
    return res;
}

}  // namespace fewent
