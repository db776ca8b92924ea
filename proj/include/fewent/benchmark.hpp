#pragma once

#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "baselines.hpp"
#include "corpus.hpp"
#include "eval.hpp"
#include "trainer.hpp"

namespace fewent {

struct BenchmarkData {
    Dataset source;
    Dataset target_pool;
    Dataset target_test;
};

// Trains one system on (source, target example set) and returns its target
// test accuracy.
using SystemRunner = std::function<double(const BenchmarkData&, const ExampleSet&, const TrainConfig&)>;

namespace detail {

inline double classifier_accuracy(const Classifier& clf, const Dataset& test) {
    std::vector<EntailLabel> golds;
    for (const auto& p : test.pairs) golds.push_back(p.label);
    return accuracy(golds, clf.predict(test.pairs));
}

}  // namespace detail

// Registered systems, in report order.
inline const std::vector<std::pair<std::string, SystemRunner>>& system_registry() {
    static const std::vector<std::pair<std::string, SystemRunner>> systems = {
        {"majority",
         [](const BenchmarkData& data, const ExampleSet& set, const TrainConfig& cfg) {
             return detail::classifier_accuracy(MajorityClassifier(set, cfg.seed), data.target_test);
         }},
        {"train-on-k",
         [](const BenchmarkData& data, const ExampleSet& set, const TrainConfig& cfg) {
             return detail::classifier_accuracy(*train_on_k(set, cfg), data.target_test);
         }},
        {"prototype-net",
         [](const BenchmarkData& data, const ExampleSet& set, const TrainConfig& cfg) {
             return detail::classifier_accuracy(*prototypical_baseline(data.source, set, cfg), data.target_test);
         }},
        {"stilts",
         [](const BenchmarkData& data, const ExampleSet& set, const TrainConfig& cfg) {
             return detail::classifier_accuracy(*stilts_baseline(data.source, set, cfg), data.target_test);
         }},
        {"cross-task",
         [](const BenchmarkData& data, const ExampleSet& set, const TrainConfig& cfg) {
             const auto res = train(data.source, set, cfg);
             const auto preds = predict(*res.model, data.target_test.pairs, res.bank);
             std::vector<EntailLabel> golds, labels;
             for (std::size_t i = 0; i < preds.size(); ++i) {
                 golds.push_back(data.target_test.pairs[i].label);
                 labels.push_back(preds[i].label);
             }
             return accuracy(golds, labels);
         }},
    };
    return systems;
}

inline const SystemRunner& find_system(const std::string& name) {
    for (const auto& [n, run] : system_registry())
        if (n == name) return run;
    std::string known;
    for (const auto& [n, run] : system_registry()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown system '" + name + "' (known: " + known + ")");
}

struct BenchmarkConfig {
    std::vector<std::string> systems = {"train-on-k", "prototype-net", "stilts", "cross-task"};
    std::vector<std::size_t> ks = {1, 3, 5, 10};
    std::vector<std::uint64_t> seeds = {42, 16, 32, 64, 128};
    TrainConfig train;  // k, m and seed are set per cell
};

using RowCallback = std::function<void(const MetricReport&)>;

// One row per (system, k); each seed draws its own example set from the
// target pool, shared by every system. A failing run marks its row failed
// and the report carries on.
inline std::vector<MetricReport> benchmark_report(const BenchmarkConfig& config, const BenchmarkData& data,
                                                  const RowCallback& on_row = {}) {
    for (const auto& s : config.systems) find_system(s);
    if (config.ks.empty() || config.seeds.empty()) throw ConfigError("benchmark needs at least one k and one seed");
    std::map<std::pair<std::size_t, std::uint64_t>, ExampleSet> sets;
    std::vector<MetricReport> rows;
    for (const auto& system : config.systems) {
        const auto& run = find_system(system);
        for (auto k : config.ks) {
            std::vector<double> values;
            MetricReport row;
            try {
                for (auto seed : config.seeds) {
                    auto key = std::make_pair(k, seed);
                    if (!sets.count(key)) sets.emplace(key, sample_kshot(data.target_pool, k, seed));
                    TrainConfig cfg = config.train;
                    cfg.k = k;
                    cfg.m = config.train.m ? std::min(config.train.m, k) : 0;
                    cfg.seed = seed;
                    values.push_back(run(data, sets.at(key), cfg));
                }
                row = MetricReport::from_values(system, k, values);
            } catch (const Error& e) {
                row.system_name = system;
                row.k = k;
                row.per_seed = values;
                row.failed = true;
                row.error = e.what();
            }
            rows.push_back(row);
            if (on_row) on_row(row);
        }
    }
    return rows;
}

inline std::string csv_header() { return "system,k,metric,mean,std,seed_values"; }

inline std::string csv_row(const MetricReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << r.system_name << ',' << r.k << ',' << r.metric_name << ',';
    if (r.failed) {
        out << "nan,nan,";
    } else {
        out << r.mean << ',' << r.std << ',';
    }
    for (std::size_t i = 0; i < r.per_seed.size(); ++i) out << (i ? ";" : "") << r.per_seed[i];
    return out.str();
}

// Systems down, k across, "mean±std" in percent.
inline std::string render_table(const std::vector<MetricReport>& rows) {
    std::vector<std::string> systems;
    std::vector<std::size_t> ks;
    std::map<std::pair<std::string, std::size_t>, std::string> cells;
    for (const auto& r : rows) {
        if (std::find(systems.begin(), systems.end(), r.system_name) == systems.end()) systems.push_back(r.system_name);
        if (std::find(ks.begin(), ks.end(), r.k) == ks.end()) ks.push_back(r.k);
        cells[{r.system_name, r.k}] = r.failed ? "failed" : format_cell(r.mean, r.std);
    }
    std::size_t name_w = 6;
    for (const auto& s : systems) name_w = std::max(name_w, s.size());
    std::ostringstream out;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(name_w), "system");
    out << buf;
    for (auto k : ks) {
        std::snprintf(buf, sizeof buf, " | %-14s", ("k=" + std::to_string(k)).c_str());
        out << buf;
    }
    out << '\n' << std::string(name_w, '-');
    for (std::size_t i = 0; i < ks.size(); ++i) out << "-+-" << std::string(14, '-');
    out << '\n';
    for (const auto& s : systems) {
        std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(name_w), s.c_str());
        out << buf;
        for (auto k : ks) {
            auto it = cells.find({s, k});
            const std::string cell = it == cells.end() ? "" : it->second;
            // "±" is two bytes but one column.
            const std::size_t width = cell.size() - (cell.find("±") != std::string::npos ? 1 : 0);
            out << " | " << cell << std::string(width < 14 ? 14 - width : 0, ' ');
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace fewent
