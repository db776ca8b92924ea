#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "encoder.hpp"
#include "tensor.hpp"
#include "trainer.hpp"

namespace fewent {

// Logistic-regression head: logits = W x + b over C classes.
struct LinearHead {
    Tensor W;  // C x d
    Tensor b;  // C x 1

    LinearHead() = default;
    LinearHead(std::size_t classes, std::size_t d)
        : W("head.weight", static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(d)),
          b("head.bias", static_cast<Eigen::Index>(classes), 1) {}

    std::size_t classes() const noexcept { return static_cast<std::size_t>(W.value.rows()); }
    ParameterSet parameters() { return {&W, &b}; }

    void init(Rng& rng) {
        W.init_uniform(rng, std::sqrt(6.0 / static_cast<double>(W.value.rows() + W.value.cols())));
        b.value.setZero();
    }

    Vector logits(const Vector& x) const {
        if (x.size() != W.value.cols())
            throw ShapeError("head expects width " + std::to_string(W.value.cols()) + ", got " +
                             std::to_string(x.size()));
        return W.value * x + b.value.col(0);
    }
};

inline Vector softmax(const Vector& z) {
    const Vector e = (z.array() - z.maxCoeff()).exp().matrix();
    return e / e.sum();
}

// Something that labels entailment pairs.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual EntailLabel predict_one(const EntailmentPair& pair) const = 0;
    virtual LabelScheme scheme() const = 0;

    std::vector<EntailLabel> predict(const std::vector<EntailmentPair>& pairs) const {
        std::vector<EntailLabel> out;
        out.reserve(pairs.size());
        for (const auto& p : pairs) out.push_back(predict_one(p));
        return out;
    }

    // Mean training loss per epoch (per phase, concatenated) for inspection.
    std::vector<double> epoch_loss;
};

namespace detail {

// Folds a label index over `classes` into `scheme`.
inline EntailLabel fold(EntailLabel label, LabelScheme scheme) {
    if (scheme == LabelScheme::TwoWay && (label == EntailLabel::Neutral || label == EntailLabel::Contradiction))
        return EntailLabel::NonEntailment;
    return label;
}

inline std::size_t class_position(const std::vector<EntailLabel>& classes, EntailLabel label) {
    for (std::size_t i = 0; i < classes.size(); ++i)
        if (classes[i] == label) return i;
    throw SchemeViolation("label '" + std::string(to_string(label)) + "' is not among the head's classes");
}

}  // namespace detail

// Encoder + linear head. When the head was trained three-way but the task is
// two-way, neutral and contradiction fold into non-entailment.
class HeadClassifier final : public Classifier {
public:
    HeadClassifier(std::unique_ptr<Encoder> enc, LabelScheme head_scheme, LabelScheme task_scheme)
        : encoder(std::move(enc)),
          head(scheme_classes(head_scheme).size(), encoder->dim()),
          head_scheme_(head_scheme),
          task_scheme_(task_scheme) {}

    EntailLabel predict_one(const EntailmentPair& pair) const override {
        const Vector z = head.logits(encoder->encode(pair));
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < z.size(); ++i)
            if (z(i) > z(best)) best = i;
        return detail::fold(scheme_classes(head_scheme_)[static_cast<std::size_t>(best)], task_scheme_);
    }

    LabelScheme scheme() const override { return task_scheme_; }
    LabelScheme head_scheme() const noexcept { return head_scheme_; }

    // Replace the head with a freshly initialised one for `scheme`.
    void reset_head(LabelScheme scheme, Rng& rng) {
        head = LinearHead(scheme_classes(scheme).size(), encoder->dim());
        head.init(rng);
        head_scheme_ = scheme;
    }

    ParameterSet parameters() {
        ParameterSet all = encoder->parameters();
        for (auto* t : head.parameters()) all.push_back(t);
        return all;
    }

    std::unique_ptr<Encoder> encoder;
    LinearHead head;

private:
    LabelScheme head_scheme_;
    LabelScheme task_scheme_;
};

// Nearest-prototype classifier: p(c | q) = softmax(-||q - c||^2).
class PrototypeClassifier final : public Classifier {
public:
    PrototypeClassifier(std::unique_ptr<Encoder> enc, LabelScheme scheme) : encoder(std::move(enc)), scheme_(scheme) {}

    EntailLabel predict_one(const EntailmentPair& pair) const override {
        const Vector p = distance_softmax(encoder->encode(pair), prototypes);
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < p.size(); ++i)
            if (p(i) > p(best)) best = i;
        return scheme_classes(scheme_)[static_cast<std::size_t>(best)];
    }

    LabelScheme scheme() const override { return scheme_; }

    // softmax over negative squared Euclidean distances to each column.
    static Vector distance_softmax(const Vector& q, const Matrix& protos) {
        Vector z(protos.cols());
        for (Eigen::Index c = 0; c < protos.cols(); ++c) z(c) = -(q - protos.col(c)).squaredNorm();
        return softmax(z);
    }

    std::unique_ptr<Encoder> encoder;
    Matrix prototypes;  // d x C, columns in canonical class order

private:
    LabelScheme scheme_;
};

// Predicts the most frequent class of the example set; ties broken at random.
class MajorityClassifier final : public Classifier {
public:
    MajorityClassifier(const ExampleSet& set, std::uint64_t seed) : scheme_(set.scheme) {
        std::vector<EntailLabel> best;
        std::size_t top = 0;
        for (auto label : scheme_classes(set.scheme)) {
            auto it = set.per_class.find(label);
            const std::size_t n = it == set.per_class.end() ? 0 : it->second.size();
            if (n > top) top = n, best.clear();
            if (n == top) best.push_back(label);
        }
        Rng rng(seed);
        label_ = best[static_cast<std::size_t>(rng.below(best.size()))];
    }

    EntailLabel predict_one(const EntailmentPair&) const override { return label_; }
    LabelScheme scheme() const override { return scheme_; }
    EntailLabel label() const noexcept { return label_; }

private:
    LabelScheme scheme_;
    EntailLabel label_;
};

namespace detail {

inline std::unique_ptr<BagEncoder> make_encoder(const TrainConfig& config, const std::vector<EntailmentPair>& vocab_pairs,
                                                Rng& rng) {
    return std::make_unique<BagEncoder>(config.encoder, Vocabulary::build(vocab_pairs), rng.fork());
}

// Mini-batch NLL training of encoder + head on labelled pairs. Returns the
// mean loss of each epoch.
inline std::vector<double> fit_head(HeadClassifier& clf, std::vector<EntailmentPair> pairs, std::size_t epochs,
                                    const TrainConfig& config, Rng& rng) {
    std::vector<double> out;
    if (epochs == 0) return out;
    if (pairs.empty()) throw ConfigError("no training pairs");
    const auto classes = scheme_classes(clf.head_scheme());
    const auto params = clf.parameters();
    Optimizer opt(config.optimizer, config.learning_rate);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(pairs);
        double total = 0.0;
        for (const auto& batch : chunk(pairs, config.batch_size_S)) {
            zero_grads(params);
            const double w = 1.0 / static_cast<double>(batch.size());
            for (const auto& p : batch) {
                std::unique_ptr<EncodeTrace> trace;
                const Vector x = clf.encoder->encode(p, Mode::Train, &rng, &trace);
                const Vector prob = softmax(clf.head.logits(x));
                const auto gold = class_position(classes, p.label);
                total += -std::log(std::max(prob(static_cast<Eigen::Index>(gold)), kProbabilityFloor));
                Vector dz = prob;
                dz(static_cast<Eigen::Index>(gold)) -= 1.0;
                dz *= w;
                if (clf.head.W.trainable) clf.head.W.grad.noalias() += dz * x.transpose();
                if (clf.head.b.trainable) clf.head.b.grad.col(0) += dz;
                clf.encoder->backward(*trace, clf.head.W.value.transpose() * dz);
            }
            opt.step(params);
        }
        if (!std::isfinite(total)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
        out.push_back(total / static_cast<double>(pairs.size()));
    }
    return out;
}

}  // namespace detail

// "Train on k examples": encoder + head fitted on the target example set
// alone. The vocabulary comes from those pairs only.
inline std::unique_ptr<HeadClassifier> train_on_k(const ExampleSet& target_set, const TrainConfig& config) {
    if (target_set.k < 1) throw ConfigError("k must be at least 1");
    Rng rng(config.seed);
    const auto pairs = target_set.flatten();
    auto clf = std::make_unique<HeadClassifier>(detail::make_encoder(config, pairs, rng), target_set.scheme,
                                                target_set.scheme);
    clf->head.init(rng);
    for (const auto& pattern : config.freeze) freeze(clf->parameters(), pattern);
    clf->epoch_loss = detail::fit_head(*clf, pairs, config.epochs, config, rng);
    return clf;
}

// Prototypical network: episodic training on the source only (3-way
// episodes of k support pairs per class and batch_size_S queries), then
// prototypes from the target example set at test time.
inline std::unique_ptr<PrototypeClassifier> prototypical_baseline(const Dataset& source, const ExampleSet& target_set,
                                                                  const TrainConfig& config) {
    if (source.scheme != LabelScheme::ThreeWay) throw SchemeViolation("source dataset must be three-way");
    const std::size_t k = target_set.k;
    if (k < 1) throw ConfigError("k must be at least 1");
    if (config.batch_size_S == 0) throw ConfigError("batch_size_S must be positive");

    std::vector<EntailmentPair> vocab_pairs = source.pairs;
    for (const auto& p : target_set.flatten()) vocab_pairs.push_back(p);
    Rng rng(config.seed);
    auto clf = std::make_unique<PrototypeClassifier>(detail::make_encoder(config, vocab_pairs, rng), target_set.scheme);
    auto& enc = *clf->encoder;
    const auto params = enc.parameters();
    for (const auto& pattern : config.freeze) freeze(params, pattern);

    const auto classes = scheme_classes(LabelScheme::ThreeWay);
    std::vector<std::vector<std::size_t>> by_class(classes.size());
    for (std::size_t i = 0; i < source.pairs.size(); ++i)
        by_class[detail::class_position(classes, source.pairs[i].label)].push_back(i);
    for (std::size_t c = 0; c < classes.size(); ++c)
        if (by_class[c].size() <= k)
            throw InsufficientExamples(std::string(to_string(classes[c])), by_class[c].size(), k + 1);

    const std::size_t episodes = (source.pairs.size() + config.batch_size_S - 1) / config.batch_size_S;
    const auto d = static_cast<Eigen::Index>(enc.dim());
    Optimizer opt(config.optimizer, config.learning_rate);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t ep = 0; ep < episodes; ++ep) {
            zero_grads(params);
            // Support: k per class. Queries: drawn from the non-support rest.
            std::vector<bool> used(source.pairs.size(), false);
            Matrix protos = Matrix::Zero(d, static_cast<Eigen::Index>(classes.size()));
            std::vector<std::vector<std::unique_ptr<EncodeTrace>>> support(classes.size());
            for (std::size_t c = 0; c < classes.size(); ++c) {
                for (auto j : rng.sample_indices(by_class[c].size(), k)) {
                    const auto idx = by_class[c][j];
                    used[idx] = true;
                    std::unique_ptr<EncodeTrace> t;
                    protos.col(static_cast<Eigen::Index>(c)) += enc.encode(source.pairs[idx], Mode::Train, &rng, &t);
                    support[c].push_back(std::move(t));
                }
            }
            protos /= static_cast<double>(k);
            std::vector<std::size_t> rest;
            for (std::size_t i = 0; i < source.pairs.size(); ++i)
                if (!used[i]) rest.push_back(i);
            const auto picks = rng.sample_indices(rest.size(), config.batch_size_S);
            const double w = 1.0 / static_cast<double>(picks.size());
            Matrix dprotos = Matrix::Zero(d, protos.cols());
            for (auto j : picks) {
                const auto& p = source.pairs[rest[j]];
                std::unique_ptr<EncodeTrace> t;
                const Vector q = enc.encode(p, Mode::Train, &rng, &t);
                const Vector prob = PrototypeClassifier::distance_softmax(q, protos);
                const auto gold = static_cast<Eigen::Index>(detail::class_position(classes, p.label));
                total += -std::log(std::max(prob(gold), kProbabilityFloor));
                ++count;
                // z_c = -||q - c||^2: dz/dq = -2 (q - c), dz/dc = 2 (q - c).
                Vector dz = prob;
                dz(gold) -= 1.0;
                dz *= w;
                Vector dq = Vector::Zero(d);
                for (Eigen::Index c = 0; c < protos.cols(); ++c) {
                    const Vector diff = q - protos.col(c);
                    dq -= 2.0 * dz(c) * diff;
                    dprotos.col(c) += 2.0 * dz(c) * diff;
                }
                enc.backward(*t, dq);
            }
            for (std::size_t c = 0; c < classes.size(); ++c) {
                const Vector g = dprotos.col(static_cast<Eigen::Index>(c)) / static_cast<double>(k);
                for (const auto& t : support[c]) enc.backward(*t, g);
            }
            opt.step(params);
        }
        if (!std::isfinite(total)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
        clf->epoch_loss.push_back(total / static_cast<double>(count));
    }

    const auto target_classes = scheme_classes(target_set.scheme);
    clf->prototypes = Matrix::Zero(d, static_cast<Eigen::Index>(target_classes.size()));
    for (std::size_t c = 0; c < target_classes.size(); ++c) {
        const auto& support = target_set.of(target_classes[c]);
        for (const auto& p : support) clf->prototypes.col(static_cast<Eigen::Index>(c)) += enc.encode(p);
        clf->prototypes.col(static_cast<Eigen::Index>(c)) /= static_cast<double>(support.size());
    }
    return clf;
}

struct StiltsOptions {
    std::optional<std::size_t> finetune_epochs;  // unset: config.epochs; 0: zero-shot
    bool freeze_encoder = false;                 // phase 2 updates the head only
};

// Intermediate training: a three-way classifier fitted on the source, then
// fine-tuned on the target example set. A two-way target gets a fresh
// two-way head; with zero fine-tuning epochs the source head is used as is
// and its neutral/contradiction outputs fold into non-entailment.
inline std::unique_ptr<HeadClassifier> stilts_baseline(const Dataset& source, const ExampleSet& target_set,
                                                       const TrainConfig& config, const StiltsOptions& options = {}) {
    if (source.scheme != LabelScheme::ThreeWay) throw SchemeViolation("source dataset must be three-way");
    std::vector<EntailmentPair> vocab_pairs = source.pairs;
    for (const auto& p : target_set.flatten()) vocab_pairs.push_back(p);
    Rng rng(config.seed);
    auto clf = std::make_unique<HeadClassifier>(detail::make_encoder(config, vocab_pairs, rng), LabelScheme::ThreeWay,
                                                target_set.scheme);
    clf->head.init(rng);
    for (const auto& pattern : config.freeze) freeze(clf->parameters(), pattern);
    clf->epoch_loss = detail::fit_head(*clf, source.pairs, config.epochs, config, rng);

    const std::size_t epochs2 = options.finetune_epochs.value_or(config.epochs);
    if (epochs2 == 0) return clf;
    if (target_set.scheme != LabelScheme::ThreeWay) clf->reset_head(target_set.scheme, rng);
    if (options.freeze_encoder)
        for (auto* t : clf->encoder->parameters()) t->trainable = false;
    const auto phase2 = detail::fit_head(*clf, target_set.flatten(), epochs2, config, rng);
    clf->epoch_loss.insert(clf->epoch_loss.end(), phase2.begin(), phase2.end());
    return clf;
}

}  // namespace fewent
