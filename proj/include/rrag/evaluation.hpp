#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rrag/jsonl.hpp"

namespace rrag {

enum class QuestionCategory { STRING, TIME, NUMERICAL, MULTI_ANSWER };
enum class EvalSplit { unseen_question, unseen_entity, single };

std::string to_string(QuestionCategory c);
QuestionCategory question_category_from_string(const std::string& s);
std::string to_string(EvalSplit s);
EvalSplit eval_split_from_string(const std::string& s);

// Answer normalization applied before exact matching: lowercase, strip
// punctuation, drop the articles a/an/the, collapse whitespace. The rule set
// is versioned so reports are self-describing.
inline constexpr const char* kAnswerNormalizationVersion = "v1";
std::string normalize_answer(const std::string& s);

// 1 iff the normalized prediction equals any normalized gold answer.
int score_string_time(const std::string& predicted, const std::vector<std::string>& gold);

// Point gold or [lo, hi] range; within relative tolerance counts as correct.
struct NumericGold {
    double lo = 0.0;
    double hi = 0.0; // == lo for point gold
    bool is_range = false;
};

struct NumericScore {
    int score = 0;
    std::optional<std::string> diagnostic; // set when the prediction did not parse
};

// Strict numeric parse of the whole trimmed string (thousands separators
// allowed); unparseable predictions score 0 with a diagnostic.
NumericScore score_numerical(const std::string& predicted, const NumericGold& gold,
                             double tolerance);

// Pairwise answer-equivalence hook; the default is normalized exact match. A
// semantic matcher can be plugged in without touching the IoU arithmetic.
struct AnswerMatcher {
    std::string name = "normalized_exact";
    std::function<bool(const std::string&, const std::string&)> equivalent;
};
AnswerMatcher default_answer_matcher();

// 1 iff |pred ∩ gold| / |pred ∪ gold| >= 0.5 over normalized answer sets.
int score_multi_answer(const std::vector<std::string>& predicted,
                       const std::vector<std::string>& gold,
                       const AnswerMatcher& matcher = default_answer_matcher());

// Splits a model reply on the '&&' multi-answer delimiter and trims parts.
std::vector<std::string> split_multi_answer(const std::string& reply);

// Best-effort date reading for the TIME category toggle; month/day optional.
struct ParsedDate {
    int year = 0;
    std::optional<int> month;
    std::optional<int> day;
    bool operator==(const ParsedDate&) const = default;
};
std::optional<ParsedDate> parse_date(const std::string& s);

// TIME scoring: plain normalized string match by default; with
// normalize_dates, predictions and golds that both parse as dates compare by
// (year, month, day) instead.
int score_time(const std::string& predicted, const std::vector<std::string>& gold,
               bool normalize_dates);

struct EvalOutcome {
    std::string query_id;
    QuestionCategory category = QuestionCategory::STRING;
    EvalSplit split = EvalSplit::single;
    double score = 0.0; // 0 or 1 at the per-question level
};

// One scoring task: predicted/gold carried as raw JSON so each category can
// interpret them (strings, string lists, numbers, [lo,hi] ranges).
struct EvalRow {
    std::string query_id;
    EvalSplit split = EvalSplit::single;
    QuestionCategory category = QuestionCategory::STRING;
    json predicted;
    json gold;

    static EvalRow from_json(const json& j);
};

struct ScoringConfig {
    double relaxed_tolerance = 0.10;
    bool normalize_time_as_date = false;
    AnswerMatcher matcher = default_answer_matcher();
};

// Dispatches on the row's category and returns the 0/1 outcome. Numeric
// diagnostics, when any, are appended to *diagnostics.
EvalOutcome score_row(const EvalRow& row, const ScoringConfig& cfg,
                      std::vector<std::string>* diagnostics = nullptr);

struct SplitReport {
    size_t count = 0;
    double average = 0.0; // percentage
    std::map<std::string, double> per_category_average;
    std::map<std::string, size_t> per_category_count;
};

struct MetricReport {
    std::map<std::string, SplitReport> splits; // keyed by split name
    double overall = 0.0;                      // geometric mean of split averages
    size_t total = 0;
    double relaxed_tolerance = 0.10;
    std::string matcher_name = "normalized_exact";
    std::string normalization_version = kAnswerNormalizationVersion;

    json to_json() const;
    std::string to_text_table() const;
};

// Per-split averages (x100) plus their geometric mean as the overall score.
// A single-split set reports the plain average. When expected_splits is
// given, a missing or empty split is an error naming the split.
MetricReport aggregate(const std::vector<EvalOutcome>& outcomes,
                       const std::vector<EvalSplit>& expected_splits = {});

double geometric_mean(const std::vector<double>& values);

} // namespace rrag
