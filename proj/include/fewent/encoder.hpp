#pragma once

#include <algorithm>
#include <cctype>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "tensor.hpp"

namespace fewent {

// Lower-cased whitespace tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// Token <-> id table. Id 0 is reserved for unknown tokens.
class Vocabulary {
public:
    static constexpr int kUnk = 0;

    Vocabulary() : tokens_{"<unk>"} {}

    explicit Vocabulary(std::vector<std::string> tokens) : Vocabulary() {
        for (auto& t : tokens) add(std::move(t));
    }

    // Sorted so the id assignment depends only on the token set.
    template <typename Pairs>
    static Vocabulary build(const Pairs& pairs) {
        std::set<std::string> seen;
        for (const EntailmentPair& p : pairs) {
            for (auto& t : tokenize(p.premise)) seen.insert(std::move(t));
            for (auto& t : tokenize(p.hypothesis)) seen.insert(std::move(t));
        }
        return Vocabulary(std::vector<std::string>(seen.begin(), seen.end()));
    }

    int id(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnk : it->second;
    }

    std::vector<int> ids(std::string_view text) const {
        std::vector<int> out;
        for (const auto& t : tokenize(text)) out.push_back(id(t));
        return out;
    }

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

private:
    void add(std::string token) {
        if (index_.count(token)) return;
        index_.emplace(token, static_cast<int>(tokens_.size()));
        tokens_.push_back(std::move(token));
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

struct EncoderConfig {
    std::size_t d = 32;
    std::size_t vocab_size = 1;
    std::size_t embed_dim = 32;
    double dropout_rate = 0.1;
    bool freeze_embedding = false;

    void validate() const {
        if (d < 2) throw ConfigError("encoder width d must be >= 2");
        if (vocab_size < 1 || embed_dim < 1) throw ConfigError("vocab_size and embed_dim must be positive");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
    }
};

// Opaque per-call forward state needed by backward().
class EncodeTrace {
public:
    virtual ~EncodeTrace() = default;
};

// Maps a (premise, hypothesis) pair to a d-dimensional vector. Implementations
// own their tensors and accumulate gradients into them on backward().
class Encoder {
public:
    virtual ~Encoder() = default;

    virtual std::size_t dim() const = 0;
    virtual ParameterSet parameters() = 0;
    virtual nlohmann::json config_json() const = 0;

    // `rng` supplies dropout masks in Train mode; trace, when non-null,
    // receives what backward() needs.
    virtual Vector forward(const EntailmentPair& pair, Mode mode, Rng* rng,
                           std::unique_ptr<EncodeTrace>* trace) const = 0;
    virtual void backward(const EncodeTrace& trace, const Vector& grad_out) = 0;

    Vector encode(const EntailmentPair& pair, Mode mode = Mode::Eval, Rng* rng = nullptr,
                  std::unique_ptr<EncodeTrace>* trace = nullptr) const {
        validate_pair(pair);
        Vector out = forward(pair, mode, rng, trace);
        if (!out.allFinite()) throw NumericError("encoder produced a non-finite representation");
        return out;
    }

    std::vector<Vector> encode_batch(const std::vector<EntailmentPair>& pairs, Mode mode = Mode::Eval,
                                     Rng* rng = nullptr) const {
        std::vector<Vector> out;
        out.reserve(pairs.size());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            try {
                out.push_back(encode(pairs[i], mode, rng));
            } catch (const InvalidInput& e) {
                throw InvalidInput("pair " + std::to_string(i) + ": " + e.what());
            }
        }
        return out;
    }
};

// Reference desk-scale encoder:
//   tokens -> embedding lookup -> mean-pool premise (u) and hypothesis (v)
//   -> [u, v, u*v, |u-v|] -> tanh(W x + b) -> dropout
class BagEncoder final : public Encoder {
public:
    BagEncoder(EncoderConfig cfg, Vocabulary vocab, std::uint64_t init_seed)
        : cfg_(cfg), vocab_(std::move(vocab)) {
        cfg_.vocab_size = vocab_.size();
        cfg_.validate();
        const auto e = static_cast<Eigen::Index>(cfg_.embed_dim);
        const auto d = static_cast<Eigen::Index>(cfg_.d);
        embedding_ = Tensor("embedding.weight", static_cast<Eigen::Index>(cfg_.vocab_size), e);
        hidden_w_ = Tensor("hidden.weight", d, 4 * e);
        hidden_b_ = Tensor("hidden.bias", d, 1);
        Rng rng(init_seed);
        embedding_.init_uniform(rng, 0.05);
        hidden_w_.init_uniform(rng, 0.05);
        hidden_b_.init_uniform(rng, 0.05);
        if (cfg_.freeze_embedding) embedding_.trainable = false;
    }

    std::size_t dim() const override { return cfg_.d; }

    ParameterSet parameters() override { return {&embedding_, &hidden_w_, &hidden_b_}; }

    const EncoderConfig& config() const noexcept { return cfg_; }
    const Vocabulary& vocabulary() const noexcept { return vocab_; }
    Tensor& embedding() noexcept { return embedding_; }
    Tensor& hidden_weight() noexcept { return hidden_w_; }
    Tensor& hidden_bias() noexcept { return hidden_b_; }

    nlohmann::json config_json() const override {
        return {{"type", "bag"},
                {"d", cfg_.d},
                {"vocab_size", cfg_.vocab_size},
                {"embed_dim", cfg_.embed_dim},
                {"dropout_rate", cfg_.dropout_rate},
                {"freeze_embedding", cfg_.freeze_embedding},
                {"vocab", vocab_.tokens()}};
    }

    static std::unique_ptr<BagEncoder> from_config_json(const nlohmann::json& j) {
        EncoderConfig cfg;
        cfg.d = j.at("d").get<std::size_t>();
        cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
        cfg.dropout_rate = j.at("dropout_rate").get<double>();
        cfg.freeze_embedding = j.at("freeze_embedding").get<bool>();
        auto tokens = j.at("vocab").get<std::vector<std::string>>();
        if (tokens.empty() || tokens.front() != "<unk>") throw InvalidInput("vocabulary must start with <unk>");
        tokens.erase(tokens.begin());
        return std::make_unique<BagEncoder>(cfg, Vocabulary(std::move(tokens)), 0);
    }

    Vector forward(const EntailmentPair& pair, Mode mode, Rng* rng,
                   std::unique_ptr<EncodeTrace>* trace) const override {
        auto t = std::make_unique<Trace>();
        t->premise = vocab_.ids(pair.premise);
        t->hypothesis = vocab_.ids(pair.hypothesis);
        if (t->premise.empty() || t->hypothesis.empty()) throw InvalidInput("pair tokenizes to nothing");
        t->u = mean_pool(t->premise);
        t->v = mean_pool(t->hypothesis);
        const auto e = static_cast<Eigen::Index>(cfg_.embed_dim);
        t->features.resize(4 * e);
        t->features << t->u, t->v, t->u.cwiseProduct(t->v), (t->u - t->v).cwiseAbs();
        t->activation = (hidden_w_.value * t->features + hidden_b_.value.col(0)).array().tanh().matrix();
        Vector out = t->activation;
        if (mode == Mode::Train && cfg_.dropout_rate > 0.0) {
            if (!rng) throw ConfigError("Train-mode dropout needs a generator");
            t->mask = Vector(out.size());
            const double keep = 1.0 - cfg_.dropout_rate;
            for (Eigen::Index i = 0; i < out.size(); ++i) t->mask(i) = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
            out = out.cwiseProduct(t->mask);
        }
        if (trace) *trace = std::move(t);
        return out;
    }

    void backward(const EncodeTrace& base, const Vector& grad_out) override {
        const auto& t = dynamic_cast<const Trace&>(base);
        Vector g = grad_out;
        if (t.mask.size()) g = g.cwiseProduct(t.mask);
        const Vector pre = g.array() * (1.0 - t.activation.array().square());
        if (hidden_w_.trainable) hidden_w_.grad.noalias() += pre * t.features.transpose();
        if (hidden_b_.trainable) hidden_b_.grad.col(0) += pre;
        if (!embedding_.trainable) return;
        const Vector df = hidden_w_.value.transpose() * pre;
        const auto e = static_cast<Eigen::Index>(cfg_.embed_dim);
        const Vector sign = (t.u - t.v).unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
        const Vector du = df.segment(0, e) + df.segment(2 * e, e).cwiseProduct(t.v) +
                          df.segment(3 * e, e).cwiseProduct(sign);
        const Vector dv = df.segment(e, e) + df.segment(2 * e, e).cwiseProduct(t.u) -
                          df.segment(3 * e, e).cwiseProduct(sign);
        scatter(t.premise, du);
        scatter(t.hypothesis, dv);
    }

private:
    struct Trace final : EncodeTrace {
        std::vector<int> premise, hypothesis;
        Vector u, v, features, activation, mask;
    };

    Vector mean_pool(const std::vector<int>& ids) const {
        Vector acc = Vector::Zero(static_cast<Eigen::Index>(cfg_.embed_dim));
        for (int id : ids) acc += embedding_.value.row(id).transpose();
        return acc / static_cast<double>(ids.size());
    }

    void scatter(const std::vector<int>& ids, const Vector& g) {
        const double inv = 1.0 / static_cast<double>(ids.size());
        for (int id : ids) embedding_.grad.row(id) += inv * g.transpose();
    }

    EncoderConfig cfg_;
    Vocabulary vocab_;
    Tensor embedding_, hidden_w_, hidden_b_;
};

}  // namespace fewent
