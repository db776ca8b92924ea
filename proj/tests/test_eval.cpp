#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "support.hpp"

using namespace fewent;

namespace {

CorefItem coref(const std::string& pronoun, bool a, bool b) {
    CorefItem it;
    it.pronoun = pronoun;
    it.a_is_coref = a;
    it.b_is_coref = b;
    return it;
}

}  // namespace

TEST(Accuracy, Basics) {
    using L = EntailLabel;
    EXPECT_DOUBLE_EQ(accuracy({L::Entailment, L::Neutral, L::Contradiction, L::Neutral},
                              {L::Entailment, L::Neutral, L::Neutral, L::Neutral}),
                     0.75);
    EXPECT_THROW(accuracy({}, {}), InvalidInput);
    EXPECT_THROW(accuracy({L::Entailment}, {}), InvalidInput);
}

TEST(GapF1, PerfectAndEmptyPredictions) {
    std::vector<std::pair<CorefItem, CorefPrediction>> items{
        {coref("he", true, false), {true, false}},
        {coref("She", false, true), {false, true}},
    };
    auto s = gap_f1(items);
    EXPECT_DOUBLE_EQ(s.overall.f1, 1.0);
    EXPECT_DOUBLE_EQ(s.masculine.f1, 1.0);
    EXPECT_DOUBLE_EQ(s.feminine.f1, 1.0);
    for (auto& [item, pred] : items) pred = {false, false};
    s = gap_f1(items);
    EXPECT_EQ(s.overall.f1, 0.0);
    EXPECT_EQ(s.overall.fn, 2u);
}

TEST(GapF1, HandCounts) {
    // masculine: tp 1, fp 1, fn 1; feminine: tp 1, fp 0, fn 0.
    std::vector<std::pair<CorefItem, CorefPrediction>> items{
        {coref("his", true, false), {true, true}},
        {coref("him", false, true), {false, false}},
        {coref("her", true, false), {true, false}},
    };
    const auto s = gap_f1(items);
    EXPECT_DOUBLE_EQ(s.masculine.precision, 0.5);
    EXPECT_DOUBLE_EQ(s.masculine.recall, 0.5);
    EXPECT_DOUBLE_EQ(s.feminine.f1, 1.0);
    EXPECT_DOUBLE_EQ(s.overall.precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(s.overall.recall, 2.0 / 3.0);
    EXPECT_THROW(gap_f1({{coref("it", true, false), {true, false}}}), InvalidInput);
    EXPECT_THROW(gap_f1({}), InvalidInput);
}

TEST(GapF1, PermutationInvariant) {
    Rng rng(2);
    std::vector<std::pair<CorefItem, CorefPrediction>> items;
    const char* pronouns[] = {"he", "she", "his", "her"};
    for (int i = 0; i < 30; ++i)
        items.push_back({coref(pronouns[rng.below(4)], rng.bernoulli(0.5), rng.bernoulli(0.5)),
                         {rng.bernoulli(0.5), rng.bernoulli(0.5)}});
    const auto a = gap_f1(items);
    rng.shuffle(items);
    const auto b = gap_f1(items);
    EXPECT_EQ(a.overall.f1, b.overall.f1);
    EXPECT_EQ(a.masculine.f1, b.masculine.f1);
    EXPECT_EQ(a.feminine.f1, b.feminine.f1);
}

TEST(AggregateSeeds, MeanAndSampleStd) {
    const auto r = aggregate_seeds({0.8, 0.9, 1.0}, nullptr);
    EXPECT_NEAR(r.mean, 0.9, 1e-15);
    EXPECT_NEAR(r.std, 0.1, 1e-15);
    const auto same = aggregate_seeds({0.7, 0.7, 0.7, 0.7}, nullptr);
    EXPECT_DOUBLE_EQ(same.std, 0.0);
    std::ostringstream warn;
    const auto one = aggregate_seeds({0.42}, &warn);
    EXPECT_DOUBLE_EQ(one.mean, 0.42);
    EXPECT_EQ(one.std, 0.0);
    EXPECT_NE(warn.str().find("single seed"), std::string::npos);
    EXPECT_THROW(aggregate_seeds({}, nullptr), InvalidInput);
}

TEST(AggregateSeeds, PermutationInvariant) {
    std::vector<double> v{0.1, 0.5, 0.3, 0.9, 0.2};
    const auto a = aggregate_seeds(v, nullptr);
    std::reverse(v.begin(), v.end());
    const auto b = aggregate_seeds(v, nullptr);
    EXPECT_NEAR(a.mean, b.mean, 1e-15);
    EXPECT_NEAR(a.std, b.std, 1e-15);
}

TEST(Report, FormatCellAndFromValues) {
    EXPECT_EQ(format_cell(0.6141, 0.0155), "61.41±1.55");
    const auto r = MetricReport::from_values("cross-task", 5, {0.5, 0.7});
    EXPECT_EQ(r.k, 5u);
    EXPECT_EQ(r.metric_name, "accuracy");
    EXPECT_DOUBLE_EQ(r.mean, 0.6);
}

TEST(Report, CsvAndTable) {
    const std::vector<MetricReport> rows{MetricReport::from_values("a-system", 1, {0.5, 0.7}),
                                         MetricReport::from_values("a-system", 3, {0.25, 0.75})};
    EXPECT_EQ(csv_header(), "system,k,metric,mean,std,seed_values");
    EXPECT_EQ(csv_row(rows[0]).substr(0, 24), "a-system,1,accuracy,0.59");
    EXPECT_NE(csv_row(rows[0]).find(",0.5;0.69"), std::string::npos);
    const auto table = render_table(rows);
    EXPECT_NE(table.find("k=1"), std::string::npos);
    EXPECT_NE(table.find(format_cell(rows[1].mean, rows[1].std)), std::string::npos);
}

TEST(Synthetic, BalancedAndDeterministic) {
    SyntheticTaskSpec spec;
    spec.source_per_class = 12;
    spec.target_pool_per_class = 7;
    spec.target_test_per_class = 9;
    const auto a = make_synthetic(spec, 3), b = make_synthetic(spec, 3);
    EXPECT_EQ(a.source.pairs, b.source.pairs);
    for (auto l : scheme_classes(LabelScheme::ThreeWay)) EXPECT_EQ(a.source.count(l), 12u);
    for (auto l : scheme_classes(LabelScheme::TwoWay)) {
        EXPECT_EQ(a.target_pool.count(l), 7u);
        EXPECT_EQ(a.target_test.count(l), 9u);
    }
    EXPECT_NE(make_synthetic(spec, 4).source.pairs, a.source.pairs);
}

TEST(Synthetic, NoiselessTargetRuleIsExact) {
    SyntheticTaskSpec spec;
    spec.noise = 0.0;
    for (double shift : {0.0, 0.5, 1.0}) {
        spec.shift = shift;
        const auto d = make_synthetic(spec, 9);
        for (const auto* ds : {&d.target_pool, &d.target_test})
            for (const auto& p : ds->pairs) EXPECT_EQ(target_rule(p, LabelScheme::TwoWay), p.label);
        for (const auto& p : d.source.pairs) EXPECT_EQ(source_rule(p, LabelScheme::ThreeWay), p.label);
    }
}

TEST(Synthetic, ShiftControlsSourceTransfer) {
    SyntheticTaskSpec spec;
    spec.noise = 0.0;
    auto source_rule_acc = [&](double shift) {
        spec.shift = shift;
        const auto d = make_synthetic(spec, 9);
        std::vector<EntailLabel> g, p;
        for (const auto& x : d.target_test.pairs) g.push_back(x.label), p.push_back(source_rule(x, LabelScheme::TwoWay));
        return accuracy(g, p);
    };
    EXPECT_DOUBLE_EQ(source_rule_acc(1.0), 1.0);
    EXPECT_NEAR(source_rule_acc(0.0), 0.5, 1e-12);
    const double mid = source_rule_acc(0.5);
    EXPECT_GT(mid, 0.6);
    EXPECT_LT(mid, 0.9);
}

TEST(Synthetic, NoiseOnlyOnTrainingSplits) {
    SyntheticTaskSpec spec;
    spec.noise = 0.3;
    const auto d = make_synthetic(spec, 2);
    for (const auto& p : d.target_test.pairs) EXPECT_EQ(target_rule(p, LabelScheme::TwoWay), p.label);
    std::size_t wrong = 0;
    for (const auto& p : d.source.pairs) wrong += source_rule(p, LabelScheme::ThreeWay) != p.label;
    EXPECT_GT(wrong, d.source.size() / 5);
    EXPECT_LT(wrong, d.source.size() * 2 / 5);
}

TEST(Synthetic, ValidatesSpec) {
    SyntheticTaskSpec spec;
    spec.shift = 1.5;
    EXPECT_THROW(make_synthetic(spec, 1), ConfigError);
    spec = {};
    spec.vocab_size = 0;
    EXPECT_THROW(make_synthetic(spec, 1), ConfigError);
}
