#pragma once

#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "error.hpp"
#include "random.hpp"

namespace fewent {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Mode : std::uint8_t { Train, Eval };

// A named trainable tensor with its gradient accumulator. Vectors are stored
// as n x 1 matrices.
struct Tensor {
    std::string name;
    Matrix value;
    Matrix grad;
    bool trainable = true;

    Tensor() = default;
    Tensor(std::string n, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

    void zero_grad() { grad.setZero(); }

    void init_uniform(Rng& rng, double bound) {
        for (Eigen::Index c = 0; c < value.cols(); ++c)
            for (Eigen::Index r = 0; r < value.rows(); ++r) value(r, c) = rng.uniform(-bound, bound);
    }
};

// Non-owning view over every tensor of a model, in registration order.
using ParameterSet = std::vector<Tensor*>;

inline void zero_grads(const ParameterSet& params) {
    for (auto* t : params) t->zero_grad();
}

// Shell-style glob: '*' matches any run, '?' one character.
inline bool glob_match(std::string_view pattern, std::string_view text) {
    std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

// Marks every tensor whose name matches `pattern` as non-trainable and
// returns how many matched. An empty match only warns.
inline std::size_t freeze(const ParameterSet& params, std::string_view pattern, std::ostream* warn = &std::cerr) {
    std::size_t n = 0;
    for (auto* t : params) {
        if (glob_match(pattern, t->name)) {
            t->trainable = false;
            ++n;
        }
    }
    if (n == 0 && warn) *warn << "warning: freeze pattern '" << pattern << "' matched no tensors\n";
    return n;
}

inline Tensor* find_tensor(const ParameterSet& params, std::string_view name) {
    for (auto* t : params)
        if (t->name == name) return t;
    return nullptr;
}

enum class OptimizerKind : std::uint8_t { Sgd, Adam };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

// Plain SGD or Adam over the trainable tensors. Frozen tensors are skipped
// outright, so their values stay bitwise unchanged.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const ParameterSet& params) {
        ++steps_;
        for (auto* t : params) {
            if (!t->trainable) continue;
            if (kind_ == OptimizerKind::Sgd) {
                t->value -= lr_ * t->grad;
                continue;
            }
            auto [it, fresh] = moments_.try_emplace(t->name);
            auto& [m, v] = it->second;
            if (fresh) {
                m = Matrix::Zero(t->value.rows(), t->value.cols());
                v = Matrix::Zero(t->value.rows(), t->value.cols());
            }
            m = beta1_ * m + (1.0 - beta1_) * t->grad;
            v = beta2_ * v + (1.0 - beta2_) * t->grad.cwiseProduct(t->grad);
            const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
            const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
            t->value.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
        }
    }

    double learning_rate() const noexcept { return lr_; }

private:
    OptimizerKind kind_;
    double lr_, beta1_, beta2_, eps_;
    long steps_ = 0;
    std::map<std::string, std::pair<Matrix, Matrix>> moments_;
};

// {name, shape, row-major values}. Doubles are printed shortest-round-trip
// by nlohmann::json, so write/read is bitwise.
inline nlohmann::json tensor_to_json(const Tensor& t) {
    nlohmann::json j;
    j["name"] = t.name;
    j["shape"] = {t.value.rows(), t.value.cols()};
    j["trainable"] = t.trainable;
    auto& vals = j["values"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
        for (Eigen::Index c = 0; c < t.value.cols(); ++c) vals.push_back(t.value(r, c));
    return j;
}

// Restores values (and trainable flag) into an already-shaped tensor.
inline void tensor_from_json(Tensor& t, const nlohmann::json& j) {
    const auto rows = j.at("shape").at(0).get<Eigen::Index>();
    const auto cols = j.at("shape").at(1).get<Eigen::Index>();
    if (rows != t.value.rows() || cols != t.value.cols())
        throw ShapeError("checkpoint tensor '" + t.name + "' has shape " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", model expects " + std::to_string(t.value.rows()) + "x" +
                         std::to_string(t.value.cols()));
    const auto& vals = j.at("values");
    if (vals.size() != static_cast<std::size_t>(rows * cols))
        throw ShapeError("checkpoint tensor '" + t.name + "' value count mismatch");
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) t.value(r, c) = vals[i++].get<double>();
    t.trainable = j.value("trainable", true);
}

inline nlohmann::json parameters_to_json(const ParameterSet& params) {
    auto arr = nlohmann::json::array();
    for (const auto* t : params) arr.push_back(tensor_to_json(*t));
    return arr;
}

inline void parameters_from_json(const ParameterSet& params, const nlohmann::json& arr) {
    std::map<std::string, const nlohmann::json*> by_name;
    for (const auto& j : arr) by_name[j.at("name").get<std::string>()] = &j;
    for (auto* t : params) {
        auto it = by_name.find(t->name);
        if (it == by_name.end()) throw ShapeError("checkpoint lacks tensor '" + t->name + "'");
        tensor_from_json(*t, *it->second);
    }
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace fewent
