#pragma once

#include <array>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"

namespace fewent {

// Multiple-choice reading-comprehension item with four options.
struct QAItem {
    std::string document;
    std::string question;
    std::array<std::string, 4> options;
    int answer_index = 0;
    std::string item_id;
};

// Pronoun-resolution item: one pronoun, two candidate antecedents. Offsets
// count Unicode code points, as in the public GAP release.
struct CorefItem {
    std::string text;
    std::string pronoun;
    std::size_t pronoun_offset = 0;
    std::string candidate_a;
    std::size_t a_offset = 0;
    bool a_is_coref = false;
    std::string candidate_b;
    std::size_t b_offset = 0;
    bool b_is_coref = false;
    std::string item_id;
};

// Turns (question, answer) into a hypothesis sentence.
using HypothesisTemplate = std::function<std::string(const std::string& question, const std::string& answer)>;

inline std::string concat_template(const std::string& question, const std::string& answer) {
    return question + " " + answer;
}

inline void validate(const QAItem& item) {
    if (item.answer_index < 0 || item.answer_index > 3)
        throw MalformedItem("QA item '" + item.item_id + "': answer_index out of range");
    for (const auto& o : item.options)
        if (trim(o).empty()) throw MalformedItem("QA item '" + item.item_id + "': empty option");
    if (trim(item.document).empty()) throw MalformedItem("QA item '" + item.item_id + "': empty document");
}

inline std::vector<EntailmentPair> qa_to_entailment(const QAItem& item,
                                                    const HypothesisTemplate& render = concat_template) {
    validate(item);
    std::vector<EntailmentPair> out;
    out.reserve(4);
    for (int i = 0; i < 4; ++i) {
        EntailmentPair p;
        p.premise = item.document;
        p.hypothesis = render(item.question, item.options[static_cast<std::size_t>(i)]);
        if (trim(p.hypothesis).empty()) throw MalformedItem("template produced an empty hypothesis");
        p.label = i == item.answer_index ? EntailLabel::Entailment : EntailLabel::NonEntailment;
        p.task = {TaskKind::Target, "qa"};
        p.origin_id = item.item_id + ":" + std::to_string(i);
        out.push_back(std::move(p));
    }
    return out;
}

// Byte offset of the `cp`-th code point of UTF-8 `text` (text.size() when
// cp equals the code-point length). Throws if cp is past the end.
inline std::size_t utf8_byte_offset(std::string_view text, std::size_t cp) {
    std::size_t byte = 0;
    for (std::size_t n = 0; n < cp; ++n) {
        if (byte >= text.size()) throw MalformedItem("offset past end of text");
        const auto c = static_cast<unsigned char>(text[byte]);
        if (c < 0x80) byte += 1;
        else if ((c >> 5) == 0x6) byte += 2;
        else if ((c >> 4) == 0xE) byte += 3;
        else byte += 4;
    }
    if (byte > text.size()) throw MalformedItem("offset past end of text");
    return byte;
}

inline bool is_possessive_pronoun(std::string_view pronoun) {
    return pronoun == "his" || pronoun == "His" || pronoun == "her" || pronoun == "Her";
}

namespace detail {

inline std::size_t check_span(const CorefItem& item, std::string_view what, std::string_view needle,
                              std::size_t cp_offset) {
    const auto b = utf8_byte_offset(item.text, cp_offset);
    if (item.text.compare(b, needle.size(), needle) != 0)
        throw MalformedItem("coref item '" + item.item_id + "': " + std::string(what) + " '" +
                            std::string(needle) + "' not found at offset " + std::to_string(cp_offset));
    return b;
}

}  // namespace detail

inline void validate(const CorefItem& item) {
    if (item.pronoun.empty()) throw MalformedItem("coref item '" + item.item_id + "': empty pronoun");
    detail::check_span(item, "pronoun", item.pronoun, item.pronoun_offset);
    detail::check_span(item, "candidate A", item.candidate_a, item.a_offset);
    detail::check_span(item, "candidate B", item.candidate_b, item.b_offset);
}

// Hypothesis = text with the pronoun occurrence swapped for `candidate`
// (plus "'s" for the four possessive surface forms).
inline std::string substitute_pronoun(const CorefItem& item, const std::string& candidate) {
    const auto b = detail::check_span(item, "pronoun", item.pronoun, item.pronoun_offset);
    const std::string replacement = is_possessive_pronoun(item.pronoun) ? candidate + "'s" : candidate;
    std::string out;
    out.reserve(item.text.size() + replacement.size());
    out.append(item.text, 0, b);
    out.append(replacement);
    out.append(item.text, b + item.pronoun.size());
    return out;
}

inline std::vector<EntailmentPair> coref_to_entailment(const CorefItem& item) {
    validate(item);
    std::vector<EntailmentPair> out;
    const std::pair<const std::string*, bool> cands[] = {{&item.candidate_a, item.a_is_coref},
                                                         {&item.candidate_b, item.b_is_coref}};
    const char* tags[] = {"A", "B"};
    for (int i = 0; i < 2; ++i) {
        EntailmentPair p;
        p.premise = item.text;
        p.hypothesis = substitute_pronoun(item, *cands[i].first);
        p.label = cands[i].second ? EntailLabel::Entailment : EntailLabel::NonEntailment;
        p.task = {TaskKind::Target, "coref"};
        p.origin_id = item.item_id + ":" + tags[i];
        out.push_back(std::move(p));
    }
    return out;
}

// Argmax over four option scores; ties go to the lowest index.
inline int qa_answer_from_predictions(const std::string& item_id, const std::map<int, double>& scores) {
    for (int i = 0; i < 4; ++i)
        if (!scores.count(i))
            throw InvalidInput("incomplete predictions for item '" + item_id + "': option " + std::to_string(i) +
                               " missing");
    if (scores.size() != 4) throw InvalidInput("item '" + item_id + "' has more than four option scores");
    int best = 0;
    for (int i = 1; i < 4; ++i)
        if (scores.at(i) > scores.at(best)) best = i;
    return best;
}

inline std::pair<bool, bool> coref_answer_from_predictions(const std::string& /*item_id*/, double score_a,
                                                           double score_b, double threshold = 0.5) {
    return {score_a >= threshold, score_b >= threshold};
}

// ---------------------------------------------------------------------------
// Readers
// ---------------------------------------------------------------------------

inline std::vector<QAItem> read_qa_jsonl(std::istream& in) {
    std::vector<QAItem> items;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
        }
        try {
            QAItem item;
            item.item_id = j.at("item_id").get<std::string>();
            item.document = j.at("document").get<std::string>();
            item.question = j.at("question").get<std::string>();
            const auto& opts = j.at("options");
            if (!opts.is_array() || opts.size() != 4) throw ParseError("options must be an array of 4 strings", lineno);
            for (std::size_t i = 0; i < 4; ++i) item.options[i] = opts[i].get<std::string>();
            item.answer_index = j.at("answer_index").get<int>();
            validate(item);
            items.push_back(std::move(item));
        } catch (const json::exception& e) {
            throw ParseError(e.what(), lineno);
        } catch (const MalformedItem& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    return items;
}

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
        const auto tab = line.find('\t', start);
        cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    if (!cols.empty() && !cols.back().empty() && cols.back().back() == '\r') cols.back().pop_back();
    return cols;
}

inline bool parse_flag(const std::string& s, std::size_t lineno) {
    std::string t(trim(s));
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::toupper(c); });
    if (t == "TRUE") return true;
    if (t == "FALSE") return false;
    throw ParseError("coref flag must be TRUE or FALSE, got '" + s + "'", lineno);
}

inline std::size_t parse_offset(const std::string& s, std::size_t lineno) {
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ParseError("bad offset '" + s + "'", lineno);
    }
}

}  // namespace detail

// GAP-style TSV: header row naming ID, Text, Pronoun, Pronoun-offset, A,
// A-offset, A-coref, B, B-offset, B-coref (other columns ignored).
inline std::vector<CorefItem> read_gap_tsv(std::istream& in) {
    std::vector<CorefItem> items;
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, std::size_t> col;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cols = detail::split_tabs(line);
        if (col.empty()) {
            for (std::size_t i = 0; i < cols.size(); ++i) col[std::string(trim(cols[i]))] = i;
            for (const char* name : {"ID", "Text", "Pronoun", "Pronoun-offset", "A", "A-offset", "A-coref", "B",
                                     "B-offset", "B-coref"})
                if (!col.count(name)) throw ParseError(std::string("missing column '") + name + "'", lineno);
            continue;
        }
        auto get = [&](const char* name) -> const std::string& {
            const auto i = col.at(name);
            if (i >= cols.size()) throw ParseError(std::string("row lacks column '") + name + "'", lineno);
            return cols[i];
        };
        CorefItem item;
        item.item_id = get("ID");
        item.text = get("Text");
        item.pronoun = get("Pronoun");
        item.pronoun_offset = detail::parse_offset(get("Pronoun-offset"), lineno);
        item.candidate_a = get("A");
        item.a_offset = detail::parse_offset(get("A-offset"), lineno);
        item.a_is_coref = detail::parse_flag(get("A-coref"), lineno);
        item.candidate_b = get("B");
        item.b_offset = detail::parse_offset(get("B-offset"), lineno);
        item.b_is_coref = detail::parse_flag(get("B-coref"), lineno);
        try {
            validate(item);
        } catch (const MalformedItem& e) {
            throw ParseError(e.what(), lineno);
        }
        items.push_back(std::move(item));
    }
    return items;
}

inline std::vector<CorefItem> load_gap_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open '" + path + "'");
    return read_gap_tsv(in);
}

inline std::vector<QAItem> load_qa_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open '" + path + "'");
    return read_qa_jsonl(in);
}

}  // namespace fewent
