#include "rrag/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "rrag/errors.hpp"
#include "rrag/numeric.hpp"
#include "rrag/strings.hpp"

namespace rrag {

std::string to_string(QuestionCategory c) {
    switch (c) {
        case QuestionCategory::STRING: return "STRING";
        case QuestionCategory::TIME: return "TIME";
        case QuestionCategory::NUMERICAL: return "NUMERICAL";
        case QuestionCategory::MULTI_ANSWER: return "MULTI_ANSWER";
    }
    return "STRING";
}

QuestionCategory question_category_from_string(const std::string& s) {
    if (s == "STRING") return QuestionCategory::STRING;
    if (s == "TIME") return QuestionCategory::TIME;
    if (s == "NUMERICAL") return QuestionCategory::NUMERICAL;
    if (s == "MULTI_ANSWER") return QuestionCategory::MULTI_ANSWER;
    throw DataError("unknown question category '" + s + "'");
}

std::string to_string(EvalSplit s) {
    switch (s) {
        case EvalSplit::unseen_question: return "unseen_question";
        case EvalSplit::unseen_entity: return "unseen_entity";
        case EvalSplit::single: return "single";
    }
    return "single";
}

EvalSplit eval_split_from_string(const std::string& s) {
    if (s == "unseen_question") return EvalSplit::unseen_question;
    if (s == "unseen_entity") return EvalSplit::unseen_entity;
    if (s == "single") return EvalSplit::single;
    throw DataError("unknown eval split '" + s + "'");
}

std::string normalize_answer(const std::string& s) {
    // v1 rules: lowercase; apostrophes removed; other punctuation replaced by
    // a space; the articles a/an/the dropped; whitespace collapsed.
    std::string lowered = to_lower(s);
    std::string depunct;
    depunct.reserve(lowered.size());
    for (char c : lowered) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (c == '\'') continue;
        if (std::ispunct(uc)) {
            depunct.push_back(' ');
        } else {
            depunct.push_back(c);
        }
    }
    std::string out;
    for (const std::string& tok : split(collapse_whitespace(depunct), " ")) {
        if (tok.empty() || tok == "a" || tok == "an" || tok == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

int score_string_time(const std::string& predicted, const std::vector<std::string>& gold) {
    if (gold.empty()) {
        throw DataError("score_string_time: empty gold answer list");
    }
    const std::string pred = normalize_answer(predicted);
    for (const auto& g : gold) {
        if (pred == normalize_answer(g)) return 1;
    }
    return 0;
}

namespace {

std::optional<double> parse_strict_number(const std::string& s) {
    std::string t = strip_commas(trim(s));
    if (t.empty()) return std::nullopt;
    // from_chars has no exponent-localization or whitespace surprises
    double value = 0.0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    if (!std::isfinite(value)) return std::nullopt;
    return value;
}

} // namespace

NumericScore score_numerical(const std::string& predicted, const NumericGold& gold,
                             double tolerance) {
    if (tolerance < 0.0) {
        throw ConfigError("score_numerical: tolerance must be >= 0");
    }
    NumericScore out;
    const std::optional<double> pred = parse_strict_number(predicted);
    if (!pred) {
        out.score = 0;
        out.diagnostic = "unparseable numeric prediction: '" + predicted + "'";
        return out;
    }
    if (!gold.is_range) {
        const double g = gold.lo;
        if (g == 0.0) {
            out.score = (*pred == 0.0) ? 1 : 0;
        } else {
            out.score = (std::abs(*pred - g) <= tolerance * std::abs(g)) ? 1 : 0;
        }
    } else {
        const double lo = gold.lo * (1.0 - tolerance);
        const double hi = gold.hi * (1.0 + tolerance);
        out.score = (*pred >= lo && *pred <= hi) ? 1 : 0;
    }
    return out;
}

AnswerMatcher default_answer_matcher() {
    AnswerMatcher m;
    m.name = "normalized_exact";
    m.equivalent = [](const std::string& a, const std::string& b) {
        return normalize_answer(a) == normalize_answer(b);
    };
    return m;
}

std::vector<std::string> split_multi_answer(const std::string& reply) {
    std::vector<std::string> out;
    for (const auto& part : split(reply, "&&")) {
        std::string t = trim(part);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

int score_multi_answer(const std::vector<std::string>& predicted,
                       const std::vector<std::string>& gold,
                       const AnswerMatcher& matcher) {
    // dedupe within each side under normalization
    auto to_set = [](const std::vector<std::string>& items) {
        std::vector<std::string> out;
        std::set<std::string> seen;
        for (const auto& s : items) {
            std::string norm = normalize_answer(s);
            if (norm.empty()) continue;
            if (seen.insert(norm).second) out.push_back(s);
        }
        return out;
    };
    const std::vector<std::string> pred = to_set(predicted);
    const std::vector<std::string> gd = to_set(gold);
    if (pred.empty() || gd.empty()) return 0;

    // greedy bipartite match under the equivalence hook; with the default
    // exact matcher this reduces to plain set intersection
    std::vector<bool> gold_used(gd.size(), false);
    size_t inter = 0;
    for (const auto& p : pred) {
        for (size_t i = 0; i < gd.size(); ++i) {
            if (gold_used[i]) continue;
            if (matcher.equivalent(p, gd[i])) {
                gold_used[i] = true;
                ++inter;
                break;
            }
        }
    }
    const size_t uni = pred.size() + gd.size() - inter;
    const double iou = static_cast<double>(inter) / static_cast<double>(uni);
    return iou >= 0.5 ? 1 : 0;
}

namespace {

const std::map<std::string, int>& month_names() {
    static const std::map<std::string, int> names = {
        {"january", 1}, {"february", 2}, {"march", 3},     {"april", 4},
        {"may", 5},     {"june", 6},     {"july", 7},      {"august", 8},
        {"september", 9}, {"october", 10}, {"november", 11}, {"december", 12},
        {"jan", 1}, {"feb", 2}, {"mar", 3}, {"apr", 4}, {"jun", 6}, {"jul", 7},
        {"aug", 8}, {"sep", 9}, {"oct", 10}, {"nov", 11}, {"dec", 12},
    };
    return names;
}

std::optional<int> parse_int_token(const std::string& s) {
    if (s.empty() || s.size() > 4) return std::nullopt;
    int value = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return std::nullopt;
        value = value * 10 + (c - '0');
    }
    return value;
}

} // namespace

std::optional<ParsedDate> parse_date(const std::string& s) {
    std::string t = to_lower(collapse_whitespace(s));
    // strip commas and ordinal suffixes like "3rd"
    t = strip_commas(t);
    for (const char* suffix : {"st ", "nd ", "rd ", "th "}) {
        size_t pos;
        while ((pos = t.find(suffix)) != std::string::npos) {
            // only strip when preceded by a digit
            if (pos > 0 && std::isdigit(static_cast<unsigned char>(t[pos - 1]))) {
                t.erase(pos, 2);
            } else {
                break;
            }
        }
    }

    // ISO forms: YYYY, YYYY-MM, YYYY-MM-DD
    {
        std::vector<std::string> parts = split(t, "-");
        bool all_numeric = !parts.empty();
        for (const auto& p : parts) {
            if (!parse_int_token(p)) all_numeric = false;
        }
        if (all_numeric && parts[0].size() == 4 && parts.size() <= 3) {
            ParsedDate d;
            d.year = *parse_int_token(parts[0]);
            if (parts.size() >= 2) d.month = *parse_int_token(parts[1]);
            if (parts.size() == 3) d.day = *parse_int_token(parts[2]);
            if (d.month && (*d.month < 1 || *d.month > 12)) return std::nullopt;
            if (d.day && (*d.day < 1 || *d.day > 31)) return std::nullopt;
            return d;
        }
    }

    // token forms: "YYYY", "month YYYY", "month D YYYY", "D month YYYY"
    std::vector<std::string> tokens;
    for (const auto& tok : split(t, " ")) {
        if (!tok.empty()) tokens.push_back(tok);
    }
    if (tokens.empty() || tokens.size() > 3) return std::nullopt;

    ParsedDate d;
    std::optional<int> year, month, day;
    for (const auto& tok : tokens) {
        auto named = month_names().find(tok);
        if (named != month_names().end()) {
            if (month) return std::nullopt;
            month = named->second;
            continue;
        }
        auto num = parse_int_token(tok);
        if (!num) return std::nullopt;
        if (tok.size() == 4) {
            if (year) return std::nullopt;
            year = *num;
        } else {
            if (day) return std::nullopt;
            if (*num < 1 || *num > 31) return std::nullopt;
            day = *num;
        }
    }
    if (!year) return std::nullopt;
    d.year = *year;
    d.month = month;
    d.day = day;
    if (d.day && !d.month) return std::nullopt;
    return d;
}

int score_time(const std::string& predicted, const std::vector<std::string>& gold,
               bool normalize_dates) {
    if (normalize_dates) {
        auto pred_date = parse_date(predicted);
        if (pred_date) {
            for (const auto& g : gold) {
                auto gold_date = parse_date(g);
                if (gold_date && *pred_date == *gold_date) return 1;
            }
        }
    }
    return score_string_time(predicted, gold);
}

EvalRow EvalRow::from_json(const json& j) {
    EvalRow row;
    if (!j.contains("query_id") || !j["query_id"].is_string()) {
        throw DataError("eval row: missing 'query_id'");
    }
    row.query_id = j["query_id"].get<std::string>();
    if (!j.contains("split") || !j["split"].is_string()) {
        throw DataError("eval row '" + row.query_id + "': missing 'split'");
    }
    row.split = eval_split_from_string(j["split"].get<std::string>());
    if (!j.contains("category") || !j["category"].is_string()) {
        throw DataError("eval row '" + row.query_id + "': missing 'category'");
    }
    row.category = question_category_from_string(j["category"].get<std::string>());
    if (!j.contains("predicted")) {
        throw DataError("eval row '" + row.query_id + "': missing 'predicted'");
    }
    row.predicted = j["predicted"];
    if (!j.contains("gold")) {
        throw DataError("eval row '" + row.query_id + "': missing 'gold'");
    }
    row.gold = j["gold"];
    return row;
}

namespace {

std::vector<std::string> string_list(const json& j, const std::string& where) {
    std::vector<std::string> out;
    if (j.is_string()) {
        out.push_back(j.get<std::string>());
    } else if (j.is_array()) {
        for (const auto& x : j) {
            if (!x.is_string()) throw DataError(where + ": expected strings");
            out.push_back(x.get<std::string>());
        }
    } else {
        throw DataError(where + ": expected a string or string array");
    }
    return out;
}

NumericGold numeric_gold(const json& j, const std::string& where) {
    NumericGold g;
    if (j.is_number()) {
        g.lo = g.hi = j.get<double>();
        return g;
    }
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
        g.lo = j[0].get<double>();
        g.hi = j[1].get<double>();
        g.is_range = true;
        if (g.lo > g.hi) throw DataError(where + ": gold range is inverted");
        return g;
    }
    if (j.is_string()) {
        auto v = parse_strict_number(j.get<std::string>());
        if (v) {
            g.lo = g.hi = *v;
            return g;
        }
    }
    throw DataError(where + ": NUMERICAL gold must be a number, [lo, hi], or numeric string");
}

} // namespace

EvalOutcome score_row(const EvalRow& row, const ScoringConfig& cfg,
                      std::vector<std::string>* diagnostics) {
    const std::string where = "eval row '" + row.query_id + "'";
    EvalOutcome out;
    out.query_id = row.query_id;
    out.split = row.split;
    out.category = row.category;

    switch (row.category) {
        case QuestionCategory::STRING: {
            if (!row.predicted.is_string()) throw DataError(where + ": predicted must be a string");
            out.score = score_string_time(row.predicted.get<std::string>(),
                                          string_list(row.gold, where));
            break;
        }
        case QuestionCategory::TIME: {
            if (!row.predicted.is_string()) throw DataError(where + ": predicted must be a string");
            out.score = score_time(row.predicted.get<std::string>(),
                                   string_list(row.gold, where),
                                   cfg.normalize_time_as_date);
            break;
        }
        case QuestionCategory::NUMERICAL: {
            std::string pred;
            if (row.predicted.is_string()) {
                pred = row.predicted.get<std::string>();
            } else if (row.predicted.is_number()) {
                pred = row.predicted.dump();
            } else {
                throw DataError(where + ": predicted must be a string or number");
            }
            NumericScore ns = score_numerical(pred, numeric_gold(row.gold, where),
                                              cfg.relaxed_tolerance);
            if (ns.diagnostic && diagnostics != nullptr) {
                diagnostics->push_back(where + ": " + *ns.diagnostic);
            }
            out.score = ns.score;
            break;
        }
        case QuestionCategory::MULTI_ANSWER: {
            std::vector<std::string> pred;
            if (row.predicted.is_string()) {
                pred = split_multi_answer(row.predicted.get<std::string>());
            } else {
                pred = string_list(row.predicted, where);
            }
            out.score = score_multi_answer(pred, string_list(row.gold, where), cfg.matcher);
            break;
        }
    }
    return out;
}

double geometric_mean(const std::vector<double>& values) {
    if (values.empty()) {
        throw DataError("geometric_mean: no values");
    }
    double product = 1.0;
    for (double v : values) {
        if (v < 0.0) {
            throw DataError("geometric_mean: negative value");
        }
        product *= v;
    }
    return std::pow(product, 1.0 / static_cast<double>(values.size()));
}

MetricReport aggregate(const std::vector<EvalOutcome>& outcomes,
                       const std::vector<EvalSplit>& expected_splits) {
    MetricReport report;
    report.total = outcomes.size();

    struct Acc {
        KahanSum sum;
        std::map<std::string, KahanSum> per_category;
    };
    std::map<std::string, Acc> by_split;
    for (const auto& o : outcomes) {
        Acc& acc = by_split[to_string(o.split)];
        acc.sum.add(o.score);
        acc.per_category[to_string(o.category)].add(o.score);
    }
    for (EvalSplit s : expected_splits) {
        if (by_split.find(to_string(s)) == by_split.end()) {
            throw DataError("aggregate: split '" + to_string(s) + "' has zero outcomes");
        }
    }
    if (by_split.empty()) {
        throw DataError("aggregate: no outcomes");
    }

    std::vector<double> split_averages;
    for (auto& [name, acc] : by_split) {
        SplitReport sr;
        sr.count = acc.sum.count();
        sr.average = acc.sum.mean() * 100.0;
        for (auto& [cat, csum] : acc.per_category) {
            sr.per_category_average[cat] = csum.mean() * 100.0;
            sr.per_category_count[cat] = csum.count();
        }
        split_averages.push_back(sr.average);
        report.splits.emplace(name, std::move(sr));
    }
    report.overall = split_averages.size() == 1 ? split_averages[0]
                                                : geometric_mean(split_averages);
    return report;
}

json MetricReport::to_json() const {
    json j;
    j["overall"] = overall;
    j["total"] = total;
    j["relaxed_tolerance"] = relaxed_tolerance;
    j["answer_matcher"] = matcher_name;
    j["normalization"] = normalization_version;
    json js = json::object();
    for (const auto& [name, sr] : splits) {
        json s;
        s["count"] = sr.count;
        s["average"] = sr.average;
        s["per_category_average"] = sr.per_category_average;
        s["per_category_count"] = sr.per_category_count;
        js[name] = s;
    }
    j["splits"] = js;
    return j;
}

std::string MetricReport::to_text_table() const {
    // column per category that actually occurs, plus the split average
    std::set<std::string> categories;
    for (const auto& [_, sr] : splits) {
        for (const auto& [cat, __] : sr.per_category_average) categories.insert(cat);
    }

    std::ostringstream out;
    out << std::fixed << std::setprecision(1);
    out << "relaxed tolerance: " << std::setprecision(2) << relaxed_tolerance
        << std::setprecision(1) << "  answer matcher: " << matcher_name
        << "  normalization: " << normalization_version << "\n";

    const int name_w = 18, col_w = 13;
    out << std::left << std::setw(name_w) << "split" << std::right << std::setw(8) << "count";
    for (const auto& cat : categories) out << std::setw(col_w) << cat;
    out << std::setw(col_w) << "avg" << "\n";
    for (const auto& [name, sr] : splits) {
        out << std::left << std::setw(name_w) << name << std::right << std::setw(8) << sr.count;
        for (const auto& cat : categories) {
            auto it = sr.per_category_average.find(cat);
            if (it == sr.per_category_average.end()) {
                out << std::setw(col_w) << "--";
            } else {
                out << std::setw(col_w) << it->second;
            }
        }
        out << std::setw(col_w) << sr.average << "\n";
    }
    out << "overall (geometric mean of split averages): " << overall << "\n";
    return out.str();
}

} // namespace rrag
