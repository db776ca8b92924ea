// fewent: convert, sample, train, evaluate and benchmark few-shot entailment
// models from the command line.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fewent/fewent.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fewent;

namespace {

std::ofstream open_out(const std::string& path) {
    if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write '" + path + "'");
    return out;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

json file_meta(const std::string& format, std::uint64_t seed, const std::string& hash) {
    return {{"format", format}, {"version", kFormatVersion}, {"seed", seed}, {"config_hash", hash}};
}

// ---------------------------------------------------------------------------
// convert
// ---------------------------------------------------------------------------

struct ConvertArgs {
    std::string task, in, out;
};

int cmd_convert(const ConvertArgs& a) {
    std::vector<EntailmentPair> pairs;
    std::size_t items = 0;
    if (a.task == "qa") {
        for (const auto& item : load_qa_jsonl(a.in)) {
            auto p = qa_to_entailment(item);
            pairs.insert(pairs.end(), p.begin(), p.end());
            ++items;
        }
    } else {
        for (const auto& item : load_gap_tsv(a.in)) {
            auto p = coref_to_entailment(item);
            pairs.insert(pairs.end(), p.begin(), p.end());
            ++items;
        }
    }
    if (items == 0) std::cerr << "warning: '" << a.in << "' holds no items\n";
    auto out = open_out(a.out);
    json meta = file_meta("pairs", 0, fnv1a_hex(a.task));
    meta["task"] = a.task;
    meta["scheme"] = "two_way";
    meta["items"] = items;
    out << json{{"_meta", meta}}.dump() << '\n';
    write_jsonl(out, pairs);
    std::size_t ent = 0;
    for (const auto& p : pairs) ent += p.label == EntailLabel::Entailment;
    std::cout << "entailment: " << ent << ", non-entailment: " << pairs.size() - ent << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

struct SampleArgs {
    std::string in, out, scheme = "two_way";
    std::size_t k = 0;
    std::uint64_t seed = 42;
};

int cmd_sample(const SampleArgs& a) {
    const auto ds = load_jsonl(a.in, parse_scheme(a.scheme));
    const auto set = sample_kshot(ds, a.k, a.seed);
    auto out = open_out(a.out);
    write_example_set(out, set, file_meta("example-set", a.seed, fnv1a_hex(a.in + "|" + std::to_string(a.k))));
    std::cout << "wrote " << set.flatten().size() << " pairs (k=" << a.k << ", seed=" << a.seed << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string out_dir;
    std::uint64_t seed = 7;
    SyntheticTaskSpec spec;
    std::string target_scheme = "two_way";
};

int cmd_synth(SynthArgs a) {
    a.spec.target_scheme = parse_scheme(a.target_scheme);
    const auto data = make_synthetic(a.spec, a.seed);
    const std::pair<const char*, const Dataset*> files[] = {
        {"source.jsonl", &data.source}, {"target_pool.jsonl", &data.target_pool}, {"target_test.jsonl", &data.target_test}};
    for (const auto& [name, ds] : files) {
        auto out = open_out((fs::path(a.out_dir) / name).string());
        json meta = file_meta("pairs", a.seed, fnv1a_hex(std::to_string(a.spec.shift) + "|" + std::to_string(a.spec.noise)));
        meta["scheme"] = std::string(to_string(ds->scheme));
        meta["shift"] = a.spec.shift;
        meta["noise"] = a.spec.noise;
        out << json{{"_meta", meta}}.dump() << '\n';
        write_jsonl(out, *ds);
        std::cout << name << ": " << ds->size() << " pairs\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::optional<std::string> config, source, target_examples, out, log, target_dev;
    std::optional<std::size_t> k, m, d, epochs;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr;
    std::vector<std::string> freeze;
};

const std::set<std::string> kPathKeys = {"source", "target_examples", "out", "log", "target_dev"};

int cmd_train(TrainArgs a) {
    TrainConfig cfg;
    std::map<std::string, std::string> paths;
    if (a.config) {
        const json j = read_json_file(*a.config);
        cfg = train_config_from_json(j, cfg, kPathKeys);
        for (const auto& key : kPathKeys)
            if (j.contains(key)) paths[key] = j.at(key).get<std::string>();
    }
    auto take = [&](const char* key, const std::optional<std::string>& v) {
        if (v) paths[key] = *v;
    };
    take("source", a.source);
    take("target_examples", a.target_examples);
    take("out", a.out);
    take("log", a.log);
    take("target_dev", a.target_dev);
    if (a.k) cfg.k = *a.k;
    if (a.m) cfg.m = *a.m;
    if (a.d) cfg.encoder.d = *a.d;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.seed) cfg.seed = *a.seed;
    if (a.lr) cfg.learning_rate = *a.lr;
    if (!a.freeze.empty()) cfg.freeze = a.freeze;

    std::vector<std::string> missing;
    for (const char* key : {"source", "target_examples", "out"})
        if (!paths.count(key)) missing.push_back(key);
    if (!missing.empty()) {
        std::string msg = "missing required setting(s):";
        for (const auto& k : missing) msg += " " + k;
        throw ConfigError(msg);
    }
    const std::string log_path = paths.count("log") ? paths["log"] : paths["out"] + ".log.jsonl";

    const auto source = load_jsonl(paths["source"], LabelScheme::ThreeWay, {TaskKind::Source, "source"});
    const auto target = load_example_set(paths["target_examples"]);
    if (cfg.k == 0) cfg.k = target.k;

    auto log = open_out(log_path);
    log << json{{"_meta", run_meta(cfg, "train-log")}}.dump() << '\n';
    auto res = train(source, target, cfg, [&](const LogRecord& r) { log << to_json(r).dump() << '\n'; });
    log.flush();
    save_checkpoint(paths["out"], *res.model, res.bank, cfg);

    const auto& last = res.log.back().loss;
    std::cout << "final l_S: " << last.l_S << "\nfinal l_T: " << last.l_T << '\n';
    if (paths.count("target_dev")) {
        const auto dev = load_jsonl(paths["target_dev"], target.scheme, {TaskKind::Target, "target"});
        const auto preds = predict(*res.model, dev.pairs, res.bank);
        std::vector<EntailLabel> golds, labels;
        for (std::size_t i = 0; i < preds.size(); ++i) golds.push_back(dev.pairs[i].label), labels.push_back(preds[i].label);
        std::cout << "target-dev accuracy: " << accuracy(golds, labels) << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, test, mode = "entail", out;
};

std::vector<Prediction> score_pairs(const LoadedModel& m, const std::vector<EntailmentPair>& pairs) {
    return predict(*m.model, pairs, m.bank);
}

int cmd_eval(const EvalArgs& a) {
    const auto m = load_checkpoint(a.checkpoint);
    const auto scheme = m.bank.target_scheme;
    std::ofstream out;
    if (!a.out.empty()) {
        out = open_out(a.out);
        json meta = m.meta;
        meta["format"] = "predictions";
        meta["mode"] = a.mode;
        out << json{{"_meta", meta}}.dump() << '\n';
    }
    auto emit = [&](const json& j) {
        if (out.is_open()) out << j.dump() << '\n';
    };

    if (a.mode == "entail") {
        json file_head;
        Dataset ds;
        try {
            ds = load_jsonl(a.test, scheme, {TaskKind::Target, "target"}, &file_head);
        } catch (const SchemeViolation& e) {
            throw SchemeViolation("test data does not fit the checkpoint's " + std::string(to_string(scheme)) +
                                  " scheme: " + e.what());
        }
        if (file_head.is_object() && file_head.contains("scheme") &&
            parse_scheme(file_head["scheme"].get<std::string>()) != scheme)
            throw SchemeViolation("test file is " + file_head["scheme"].get<std::string>() + ", checkpoint is " +
                                  std::string(to_string(scheme)));
        const auto preds = score_pairs(m, ds.pairs);
        std::vector<EntailLabel> golds, labels;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            golds.push_back(ds.pairs[i].label);
            labels.push_back(preds[i].label);
            emit({{"index", i},
                  {"gold", to_string(ds.pairs[i].label)},
                  {"predicted", to_string(preds[i].label)},
                  {"g", preds[i].g.g}});
        }
        std::cout << "accuracy: " << accuracy(golds, labels) << '\n';
        return 0;
    }

    if (scheme != LabelScheme::TwoWay)
        throw SchemeViolation("mode '" + a.mode + "' needs a two_way checkpoint, this one is " +
                              std::string(to_string(scheme)));

    if (a.mode == "qa") {
        const auto items = load_qa_jsonl(a.test);
        if (items.empty()) throw InvalidInput("'" + a.test + "' holds no items");
        std::vector<EntailmentPair> pairs;
        for (const auto& item : items) {
            auto p = qa_to_entailment(item);
            pairs.insert(pairs.end(), p.begin(), p.end());
        }
        const auto preds = score_pairs(m, pairs);
        // Group rows by the item part of origin_id ("<item>:<option>").
        std::map<std::string, std::map<int, double>> grouped;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto& id = *pairs[i].origin_id;
            const auto cut = id.rfind(':');
            grouped[id.substr(0, cut)][std::stoi(id.substr(cut + 1))] = entailment_score(preds[i].g);
        }
        std::size_t hit = 0;
        for (const auto& item : items) {
            const auto& scores = grouped.at(item.item_id);
            const int answer = qa_answer_from_predictions(item.item_id, scores);
            hit += answer == item.answer_index;
            std::vector<double> sv;
            for (const auto& [i, s] : scores) sv.push_back(s);
            emit({{"item_id", item.item_id}, {"scores", sv}, {"predicted", answer}, {"answer", item.answer_index}});
        }
        std::cout << "accuracy: " << static_cast<double>(hit) / static_cast<double>(items.size()) << '\n';
        return 0;
    }

    const auto items = load_gap_tsv(a.test);
    if (items.empty()) throw InvalidInput("'" + a.test + "' holds no items");
    std::vector<EntailmentPair> pairs;
    for (const auto& item : items) {
        auto p = coref_to_entailment(item);
        pairs.insert(pairs.end(), p.begin(), p.end());
    }
    const auto preds = score_pairs(m, pairs);
    std::vector<std::pair<CorefItem, CorefPrediction>> decided;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const double sa = entailment_score(preds[2 * i].g);
        const double sb = entailment_score(preds[2 * i + 1].g);
        const auto d = coref_answer_from_predictions(items[i].item_id, sa, sb);
        decided.emplace_back(items[i], d);
        emit({{"item_id", items[i].item_id}, {"score_a", sa}, {"score_b", sb}, {"a", d.first}, {"b", d.second}});
    }
    const auto f = gap_f1(decided);
    std::cout << "masculine F1: " << f.masculine.f1 << "\nfeminine F1: " << f.feminine.f1
              << "\noverall F1: " << f.overall.f1 << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

struct BenchArgs {
    std::optional<std::string> config, source, target_pool, target_test;
    std::string out = "benchmark";
    std::vector<std::string> systems;
    std::vector<std::size_t> ks;
    std::vector<std::uint64_t> seeds;
    std::optional<std::size_t> epochs;
    std::uint64_t data_seed = 7;
};

int cmd_benchmark(const BenchArgs& a) {
    BenchmarkConfig cfg;
    cfg.train.epochs = 40;
    if (a.config) {
        const json j = read_json_file(*a.config);
        const std::set<std::string> extra = {"systems", "ks", "seeds"};
        cfg.train = train_config_from_json(j, cfg.train, extra);
        try {
            if (j.contains("systems")) cfg.systems = j["systems"].get<std::vector<std::string>>();
            if (j.contains("ks")) cfg.ks = j["ks"].get<std::vector<std::size_t>>();
            if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad benchmark setting: ") + e.what());
        }
    }
    if (!a.systems.empty()) cfg.systems = a.systems;
    if (!a.ks.empty()) cfg.ks = a.ks;
    if (!a.seeds.empty()) cfg.seeds = a.seeds;
    if (a.epochs) cfg.train.epochs = *a.epochs;

    BenchmarkData data;
    if (a.source || a.target_pool || a.target_test) {
        if (!(a.source && a.target_pool && a.target_test))
            throw ConfigError("--source, --target-pool and --target-test go together");
        json head;
        data.source = load_jsonl(*a.source, LabelScheme::ThreeWay, {TaskKind::Source, "source"});
        // The pool's header (or its labels) decides the target scheme.
        LabelScheme scheme = LabelScheme::TwoWay;
        {
            std::ifstream probe(*a.target_pool);
            std::string first;
            std::getline(probe, first);
            try {
                const auto j = json::parse(first);
                if (is_meta_line(j) && j["_meta"].contains("scheme"))
                    scheme = parse_scheme(j["_meta"]["scheme"].get<std::string>());
            } catch (const json::exception&) {
            }
        }
        data.target_pool = load_jsonl(*a.target_pool, scheme, {TaskKind::Target, "target"});
        data.target_test = load_jsonl(*a.target_test, scheme, {TaskKind::Target, "target"});
    } else {
        const auto syn = make_synthetic(SyntheticTaskSpec{}, a.data_seed);
        data = {syn.source, syn.target_pool, syn.target_test};
    }

    auto csv = open_out(a.out + ".csv");
    json meta = run_meta(cfg.train, "benchmark");
    meta["seeds"] = cfg.seeds;
    meta["ks"] = cfg.ks;
    meta["systems"] = cfg.systems;
    csv << "# " << meta.dump() << '\n' << csv_header() << '\n' << std::flush;
    std::size_t failed = 0;
    const auto rows = benchmark_report(cfg, data, [&](const MetricReport& r) {
        csv << csv_row(r) << '\n' << std::flush;
        if (r.failed) {
            ++failed;
            std::cerr << "warning: " << r.system_name << " k=" << r.k << " failed: " << r.error << '\n';
        }
    });
    const auto table = render_table(rows);
    auto txt = open_out(a.out + ".txt");
    txt << table;
    std::cout << table;
    return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot textual entailment across tasks"};
    app.require_subcommand(1);

    ConvertArgs conv;
    auto* c = app.add_subcommand("convert", "Reformulate QA (JSONL) or coreference (GAP TSV) data as entailment pairs");
    c->add_option("task", conv.task, "qa or coref")->required()->check(CLI::IsMember({"qa", "coref"}));
    c->add_option("--in", conv.in, "Input file")->required();
    c->add_option("--out", conv.out, "Output JSONL")->required();

    SampleArgs samp;
    auto* s = app.add_subcommand("sample", "Draw a seeded k-shot example set");
    s->add_option("--in", samp.in, "Entailment JSONL")->required();
    s->add_option("--k", samp.k, "Pairs per class")->required()->check(CLI::PositiveNumber);
    s->add_option("--seed", samp.seed, "Sampling seed");
    s->add_option("--scheme", samp.scheme, "three_way or two_way")->check(CLI::IsMember({"three_way", "two_way"}));
    s->add_option("--out", samp.out, "Example-set file")->required();

    SynthArgs syn;
    auto* y = app.add_subcommand("synth", "Write the synthetic source/target task");
    y->add_option("--out-dir", syn.out_dir, "Output directory")->required();
    y->add_option("--seed", syn.seed, "Generator seed");
    y->add_option("--shift", syn.spec.shift, "Share of target signal drawn from source signal tokens");
    y->add_option("--noise", syn.spec.noise, "Label noise on training splits");
    y->add_option("--target-scheme", syn.target_scheme, "three_way or two_way")
        ->check(CLI::IsMember({"three_way", "two_way"}));

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train the cross-task model");
    t->add_option("--config", tr.config, "JSON file with training settings (flags override it)");
    t->add_option("--source", tr.source, "Three-way source JSONL");
    t->add_option("--target-examples", tr.target_examples, "Target example-set file");
    t->add_option("--k", tr.k, "Examples per target class (defaults to the example set's k)");
    t->add_option("--m", tr.m, "Target queries per class per batch");
    t->add_option("--seed", tr.seed, "Run seed");
    t->add_option("--d", tr.d, "Representation width");
    t->add_option("--epochs", tr.epochs, "Passes over the source remainder");
    t->add_option("--lr", tr.lr, "Learning rate");
    t->add_option("--freeze", tr.freeze, "Glob over tensor names to keep fixed (repeatable)");
    t->add_option("--out", tr.out, "Checkpoint path");
    t->add_option("--log", tr.log, "Training log JSONL (default: <out>.log.jsonl)");
    t->add_option("--target-dev", tr.target_dev, "Labelled target pairs to report accuracy on");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint from train")->required();
    e->add_option("--test", ev.test, "Test file (JSONL pairs, QA JSONL or GAP TSV)")->required();
    e->add_option("--mode", ev.mode, "entail, qa or coref")->check(CLI::IsMember({"entail", "qa", "coref"}));
    e->add_option("--out", ev.out, "Per-item predictions JSONL");

    BenchArgs bn;
    auto* b = app.add_subcommand("benchmark", "Systems x k x seeds accuracy report");
    b->add_option("--config", bn.config, "JSON file: training settings plus systems, ks, seeds");
    b->add_option("--source", bn.source, "Three-way source JSONL");
    b->add_option("--target-pool", bn.target_pool, "Target pairs to draw example sets from");
    b->add_option("--target-test", bn.target_test, "Target test pairs");
    b->add_option("--data-seed", bn.data_seed, "Synthetic data seed when no files are given");
    b->add_option("--systems", bn.systems, "Systems to run");
    b->add_option("--ks", bn.ks, "Example counts");
    b->add_option("--seeds", bn.seeds, "Seeds");
    b->add_option("--epochs", bn.epochs, "Training epochs per run");
    b->add_option("--out", bn.out, "Output prefix for .csv and .txt");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*c) return cmd_convert(conv);
        if (*s) return cmd_sample(samp);
        if (*y) return cmd_synth(syn);
        if (*t) return cmd_train(tr);
        if (*e) return cmd_eval(ev);
        if (*b) return cmd_benchmark(bn);
    } catch (const fewent::Error& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
    return 0;
}
