#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "encoder.hpp"
#include "tensor.hpp"

namespace fewent {

// Prototype columns in a bank: source e/n/c, then target e/n/c.
enum Slot : int { kSourceE = 0, kSourceN = 1, kSourceC = 2, kTargetE = 3, kTargetN = 4, kTargetC = 5 };

inline int class_index(EntailLabel label) {
    switch (label) {
        case EntailLabel::Entailment: return 0;
        case EntailLabel::Neutral: return 1;
        case EntailLabel::Contradiction: return 2;
        case EntailLabel::NonEntailment: return 1;
    }
    return 0;
}

// The six class representations. For a two-way target the non-entailment
// prototype occupies both kTargetN and kTargetC.
struct PrototypeBank {
    Matrix columns;  // d x 6
    LabelScheme target_scheme = LabelScheme::ThreeWay;

    std::size_t dim() const noexcept { return static_cast<std::size_t>(columns.rows()); }
    bool tied() const noexcept { return target_scheme == LabelScheme::TwoWay; }
    Vector at(int slot) const { return columns.col(slot); }
};

struct MatchParams {
    Tensor W1, W2, W3, W4, W5;  // W3: 2d x 4d, W4: d x 2d, W5: d x 1
    double dropout_rate = 0.0;

    MatchParams() = default;
    explicit MatchParams(std::size_t d, double dropout = 0.1) : dropout_rate(dropout) {
        const auto n = static_cast<Eigen::Index>(d);
        W1 = Tensor("match.W1", 4 * n, 4 * n);
        W2 = Tensor("match.W2", 4 * n, 4 * n);
        W3 = Tensor("match.W3", 2 * n, 4 * n);
        W4 = Tensor("match.W4", n, 2 * n);
        W5 = Tensor("match.W5", n, 1);
    }

    std::size_t dim() const noexcept { return static_cast<std::size_t>(W5.value.rows()); }
    ParameterSet parameters() { return {&W1, &W2, &W3, &W4, &W5}; }

    // Glorot-uniform: bound sqrt(6 / (fan_in + fan_out)).
    void init(Rng& rng) {
        for (auto* t : parameters()) {
            const auto fan = static_cast<double>(t->value.rows() + t->value.cols());
            t->init_uniform(rng, std::sqrt(6.0 / fan));
        }
    }
};

struct CombineParams {
    Tensor W6{"combine.W6", 3, 1};
    Tensor W7{"combine.W7", 6, 1};

    ParameterSet parameters() { return {&W6, &W7}; }
};

struct Distribution {
    std::array<double, 3> g{};

    double operator[](std::size_t i) const { return g[i]; }
    double sum() const { return g[0] + g[1] + g[2]; }
};

using Score3 = std::array<double, 3>;

// ---------------------------------------------------------------------------
// Prototypes
// ---------------------------------------------------------------------------

struct PrototypeTrace {
    // One entry per example set class feeding slots (source e,n,c; target
    // e, n-or-non-entailment, c). Target c is empty for a two-way target.
    std::array<std::vector<std::unique_ptr<EncodeTrace>>, 6> traces;
};

namespace detail {

inline Vector encode_mean(const Encoder& enc, const std::vector<EntailmentPair>& pairs, Mode mode, Rng* rng,
                          std::vector<std::unique_ptr<EncodeTrace>>* traces) {
    if (pairs.empty()) throw InvalidInput("cannot build a prototype from zero examples");
    Vector acc = Vector::Zero(static_cast<Eigen::Index>(enc.dim()));
    for (const auto& p : pairs) {
        std::unique_ptr<EncodeTrace> t;
        acc += enc.encode(p, mode, rng, traces ? &t : nullptr);
        if (traces) traces->push_back(std::move(t));
    }
    return acc / static_cast<double>(pairs.size());
}

}  // namespace detail

// Each prototype is the mean encoding of its class's k examples.
inline PrototypeBank compute_prototypes(const Encoder& enc, const ExampleSet& source_set, const ExampleSet& target_set,
                                        Mode mode = Mode::Eval, Rng* rng = nullptr, PrototypeTrace* trace = nullptr) {
    if (source_set.scheme != LabelScheme::ThreeWay) throw SchemeViolation("source sample set must be three-way");
    PrototypeBank bank;
    bank.target_scheme = target_set.scheme;
    bank.columns.resize(static_cast<Eigen::Index>(enc.dim()), 6);
    auto col = [&](int slot, const std::vector<EntailmentPair>& pairs) {
        bank.columns.col(slot) = detail::encode_mean(enc, pairs, mode, rng, trace ? &trace->traces[slot] : nullptr);
    };
    col(kSourceE, source_set.of(EntailLabel::Entailment));
    col(kSourceN, source_set.of(EntailLabel::Neutral));
    col(kSourceC, source_set.of(EntailLabel::Contradiction));
    col(kTargetE, target_set.of(EntailLabel::Entailment));
    if (target_set.scheme == LabelScheme::TwoWay) {
        col(kTargetN, target_set.of(EntailLabel::NonEntailment));
        bank.columns.col(kTargetC) = bank.columns.col(kTargetN);
    } else {
        col(kTargetN, target_set.of(EntailLabel::Neutral));
        col(kTargetC, target_set.of(EntailLabel::Contradiction));
    }
    return bank;
}

// Routes d(loss)/d(bank) back through the example encodings.
inline void prototype_backward(Encoder& enc, const PrototypeTrace& trace, const PrototypeBank& bank,
                               const Matrix& grad_bank) {
    for (int slot = 0; slot < 6; ++slot) {
        const auto& traces = trace.traces[slot];
        if (traces.empty()) continue;
        Vector g = grad_bank.col(slot);
        if (bank.tied() && slot == kTargetN) g += grad_bank.col(kTargetC);
        g /= static_cast<double>(traces.size());
        for (const auto& t : traces) enc.backward(*t, g);
    }
}

// ---------------------------------------------------------------------------
// Matching function, batched over columns of P (prototypes) and Q (queries)
// ---------------------------------------------------------------------------

struct MatchTrace {
    Matrix P, Q, I, t1, r1, t2, r2, t3, r3, t4, r4;
    Matrix m1, m2, m3, m4;  // dropout masks; empty in Eval mode
    Vector s;
};

namespace detail {

inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
    Matrix m(rows, cols);
    const double keep = 1.0 - rate;
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    return m;
}

inline Matrix tanh(const Matrix& x) { return x.array().tanh().matrix(); }

}  // namespace detail

// s = sigmoid(W5 . r4) for every column pair (p, q), where
//   I  = [p, q, p*q, p-q]
//   r1 = drop(tanh(W1 I)) + I,   r2 = drop(tanh(W2 r1)) + r1
//   r3 = drop(tanh(W3 r2)),      r4 = drop(tanh(W4 r3))
inline Vector match_forward(const Matrix& P, const Matrix& Q, const MatchParams& params, Mode mode = Mode::Eval,
                            Rng* rng = nullptr, MatchTrace* trace = nullptr) {
    const auto d = static_cast<Eigen::Index>(params.dim());
    if (P.rows() != d || Q.rows() != d || P.cols() != Q.cols())
        throw ShapeError("match: expected " + std::to_string(d) + "-dim prototype/query columns, got " +
                         std::to_string(P.rows()) + "x" + std::to_string(P.cols()) + " and " +
                         std::to_string(Q.rows()) + "x" + std::to_string(Q.cols()));
    const bool drop = mode == Mode::Train && params.dropout_rate > 0.0;
    if (drop && !rng) throw ConfigError("Train-mode dropout needs a generator");
    MatchTrace local;
    MatchTrace& t = trace ? *trace : local;
    const auto n = P.cols();
    t.P = P;
    t.Q = Q;
    t.I.resize(4 * d, n);
    t.I << P, Q, P.cwiseProduct(Q), P - Q;

    auto layer = [&](const Tensor& W, const Matrix& in, Matrix& act, Matrix& mask) -> Matrix {
        act = detail::tanh(W.value * in);
        if (!drop) {
            mask.resize(0, 0);
            return act;
        }
        mask = detail::dropout_mask(act.rows(), act.cols(), params.dropout_rate, *rng);
        return act.cwiseProduct(mask);
    };
    t.r1 = layer(params.W1, t.I, t.t1, t.m1) + t.I;
    t.r2 = layer(params.W2, t.r1, t.t2, t.m2) + t.r1;
    t.r3 = layer(params.W3, t.r2, t.t3, t.m3);
    t.r4 = layer(params.W4, t.r3, t.t4, t.m4);
    const Vector a = t.r4.transpose() * params.W5.value.col(0);
    t.s = a.unaryExpr([](double x) { return sigmoid(x); });
    return t.s;
}

// Accumulates weight gradients into params and returns d/dP, d/dQ.
inline std::pair<Matrix, Matrix> match_backward(const MatchTrace& t, const Vector& ds, MatchParams& params) {
    const auto d = static_cast<Eigen::Index>(params.dim());
    const Vector da = ds.array() * t.s.array() * (1.0 - t.s.array());
    if (params.W5.trainable) params.W5.grad.col(0).noalias() += t.r4 * da;
    Matrix dr4 = params.W5.value.col(0) * da.transpose();

    auto back = [](Tensor& W, const Matrix& in, const Matrix& act, const Matrix& mask, const Matrix& dout) -> Matrix {
        Matrix g = mask.size() ? Matrix(dout.cwiseProduct(mask)) : dout;
        const Matrix pre = g.array() * (1.0 - act.array().square());
        if (W.trainable) W.grad.noalias() += pre * in.transpose();
        return W.value.transpose() * pre;
    };
    const Matrix dr3 = back(params.W4, t.r3, t.t4, t.m4, dr4);
    const Matrix dr2 = back(params.W3, t.r2, t.t3, t.m3, dr3);
    const Matrix dr1 = dr2 + back(params.W2, t.r1, t.t2, t.m2, dr2);
    const Matrix dI = dr1 + back(params.W1, t.I, t.t1, t.m1, dr1);

    const auto p_blk = dI.topRows(d);
    const auto q_blk = dI.middleRows(d, d);
    const auto pq_blk = dI.middleRows(2 * d, d);
    const auto diff_blk = dI.bottomRows(d);
    Matrix dP = p_blk + pq_blk.cwiseProduct(t.Q) + diff_blk;
    Matrix dQ = q_blk + pq_blk.cwiseProduct(t.P) - diff_blk;
    return {std::move(dP), std::move(dQ)};
}

inline double match_score(const Vector& p, const Vector& q, const MatchParams& params, Mode mode = Mode::Eval,
                          Rng* rng = nullptr) {
    return match_forward(p, q, params, mode, rng)(0);
}

// ---------------------------------------------------------------------------
// Scoring queries against the bank
// ---------------------------------------------------------------------------

struct ScoreTrace {
    MatchTrace match;
    std::vector<int> slot_of_column;  // bank slot per match column
    std::vector<Eigen::Index> query_of_column;
    std::size_t columns_per_query = 6;
};

struct QueryScores {
    std::vector<Score3> source, target;
};

// Scores every query column of Qs against the bank. With a tied (two-way)
// bank the shared non-entailment prototype is matched once and the score is
// reused for both target n and c, so g_T[1] == g_T[2] bitwise in every mode.
inline QueryScores score_queries(const Matrix& Qs, const PrototypeBank& bank, const MatchParams& params,
                                 Mode mode = Mode::Eval, Rng* rng = nullptr, ScoreTrace* trace = nullptr) {
    if (Qs.rows() != bank.columns.rows())
        throw ShapeError("query width " + std::to_string(Qs.rows()) + " does not match bank width " +
                         std::to_string(bank.columns.rows()));
    const std::vector<int> slots = bank.tied() ? std::vector<int>{0, 1, 2, 3, 4} : std::vector<int>{0, 1, 2, 3, 4, 5};
    const auto per = static_cast<Eigen::Index>(slots.size());
    const auto nq = Qs.cols();
    Matrix P(Qs.rows(), nq * per), Q(Qs.rows(), nq * per);
    ScoreTrace local;
    ScoreTrace& tr = trace ? *trace : local;
    tr.columns_per_query = slots.size();
    tr.slot_of_column.clear();
    tr.query_of_column.clear();
    for (Eigen::Index qi = 0; qi < nq; ++qi) {
        for (Eigen::Index j = 0; j < per; ++j) {
            P.col(qi * per + j) = bank.columns.col(slots[static_cast<std::size_t>(j)]);
            Q.col(qi * per + j) = Qs.col(qi);
            tr.slot_of_column.push_back(slots[static_cast<std::size_t>(j)]);
            tr.query_of_column.push_back(qi);
        }
    }
    const Vector s = match_forward(P, Q, params, mode, rng, &tr.match);
    QueryScores out;
    out.source.resize(static_cast<std::size_t>(nq));
    out.target.resize(static_cast<std::size_t>(nq));
    for (Eigen::Index qi = 0; qi < nq; ++qi) {
        const auto base = qi * per;
        auto& gs = out.source[static_cast<std::size_t>(qi)];
        auto& gt = out.target[static_cast<std::size_t>(qi)];
        gs = {s(base + 0), s(base + 1), s(base + 2)};
        gt = {s(base + 3), s(base + 4), bank.tied() ? s(base + 4) : s(base + 5)};
    }
    return out;
}

struct ScoreGrads {
    Matrix bank;     // d x 6
    Matrix queries;  // d x nq
};

// Backward of score_queries given d/d(g_S), d/d(g_T) per query.
inline ScoreGrads score_backward(const ScoreTrace& tr, const std::vector<Score3>& d_source,
                                 const std::vector<Score3>& d_target, bool tied, MatchParams& params) {
    const auto per = static_cast<Eigen::Index>(tr.columns_per_query);
    const auto nq = static_cast<Eigen::Index>(d_source.size());
    Vector ds(nq * per);
    for (Eigen::Index qi = 0; qi < nq; ++qi) {
        const auto& a = d_source[static_cast<std::size_t>(qi)];
        const auto& b = d_target[static_cast<std::size_t>(qi)];
        const auto base = qi * per;
        ds(base + 0) = a[0];
        ds(base + 1) = a[1];
        ds(base + 2) = a[2];
        ds(base + 3) = b[0];
        if (tied) {
            ds(base + 4) = b[1] + b[2];
        } else {
            ds(base + 4) = b[1];
            ds(base + 5) = b[2];
        }
    }
    auto [dP, dQ] = match_backward(tr.match, ds, params);
    ScoreGrads g;
    g.bank = Matrix::Zero(tr.match.P.rows(), 6);
    g.queries = Matrix::Zero(tr.match.P.rows(), nq);
    for (Eigen::Index c = 0; c < dP.cols(); ++c) {
        g.bank.col(tr.slot_of_column[static_cast<std::size_t>(c)]) += dP.col(c);
        g.queries.col(tr.query_of_column[static_cast<std::size_t>(c)]) += dQ.col(c);
    }
    return g;
}

// (g_S, g_T) for one query.
inline std::pair<Score3, Score3> score_query(const Vector& q, const PrototypeBank& bank, const MatchParams& params,
                                             Mode mode = Mode::Eval, Rng* rng = nullptr) {
    auto s = score_queries(q, bank, params, mode, rng);
    return {s.source[0], s.target[0]};
}

// ---------------------------------------------------------------------------
// Combining the source and target score vectors
// ---------------------------------------------------------------------------

struct CombineTrace {
    Score3 g_source{}, g_target{}, hat_source{}, hat_target{};
    double lambda = 0.0;
    Distribution out;
};

// hat_S[i] = sigmoid(W6[i] g_S[i]), hat_T likewise, lambda = sigmoid(W7 .
// [g_S, g_T]), g = softmax(lambda hat_S + (1 - lambda) hat_T).
inline Distribution combine_distributions(const Score3& g_source, const Score3& g_target, const CombineParams& params,
                                          CombineTrace* trace = nullptr) {
    for (int i = 0; i < 3; ++i)
        if (!std::isfinite(g_source[i]) || !std::isfinite(g_target[i]))
            throw NumericError("combine_distributions: non-finite score");
    CombineTrace local;
    CombineTrace& t = trace ? *trace : local;
    t.g_source = g_source;
    t.g_target = g_target;
    const auto& w6 = params.W6.value;
    const auto& w7 = params.W7.value;
    double a = 0.0;
    for (int i = 0; i < 3; ++i) {
        t.hat_source[i] = sigmoid(w6(i, 0) * g_source[i]);
        t.hat_target[i] = sigmoid(w6(i, 0) * g_target[i]);
        a += w7(i, 0) * g_source[i] + w7(i + 3, 0) * g_target[i];
    }
    t.lambda = sigmoid(a);
    Score3 z{};
    for (int i = 0; i < 3; ++i) z[i] = t.lambda * t.hat_source[i] + (1.0 - t.lambda) * t.hat_target[i];
    const double zmax = std::max({z[0], z[1], z[2]});
    double total = 0.0;
    for (int i = 0; i < 3; ++i) total += (t.out.g[i] = std::exp(z[i] - zmax));
    for (auto& v : t.out.g) v /= total;
    return t.out;
}

// Accumulates W6/W7 gradients; returns d/d(g_S), d/d(g_T).
inline std::pair<Score3, Score3> combine_backward(const CombineTrace& t, const Score3& d_out, CombineParams& params) {
    const auto& g = t.out.g;
    const double dot = g[0] * d_out[0] + g[1] * d_out[1] + g[2] * d_out[2];
    Score3 dz{};
    for (int i = 0; i < 3; ++i) dz[i] = g[i] * (d_out[i] - dot);
    double dlambda = 0.0;
    for (int i = 0; i < 3; ++i) dlambda += dz[i] * (t.hat_source[i] - t.hat_target[i]);
    const double da = dlambda * t.lambda * (1.0 - t.lambda);
    Score3 d_source{}, d_target{};
    const auto& w6 = params.W6.value;
    const auto& w7 = params.W7.value;
    for (int i = 0; i < 3; ++i) {
        const double hs = t.hat_source[i], ht = t.hat_target[i];
        const double ps = t.lambda * dz[i] * hs * (1.0 - hs);
        const double pt = (1.0 - t.lambda) * dz[i] * ht * (1.0 - ht);
        if (params.W6.trainable) params.W6.grad(i, 0) += ps * t.g_source[i] + pt * t.g_target[i];
        if (params.W7.trainable) {
            params.W7.grad(i, 0) += da * t.g_source[i];
            params.W7.grad(i + 3, 0) += da * t.g_target[i];
        }
        d_source[i] = ps * w6(i, 0) + da * w7(i, 0);
        d_target[i] = pt * w6(i, 0) + da * w7(i + 3, 0);
    }
    return {d_source, d_target};
}

// (p_entail, p_non_entail) = (g[0], g[1] + g[2]).
inline std::pair<double, double> collapse_two_way(const Distribution& g) { return {g[0], g[1] + g[2]}; }

}  // namespace fewent
