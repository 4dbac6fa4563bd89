#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace rrag {

// Candidate-ranking criteria: the full product of the entry score, the
// relevance probability, and the answer confidence, every proper subset, and
// a seeded random baseline.
enum class RankingMode {
    random,
    ans,
    ret,
    rel,
    ret_ans,
    rel_ans,
    ret_rel,
    ret_rel_ans,
};

inline constexpr RankingMode kDefaultRankingMode = RankingMode::ret_rel_ans;

std::string to_string(RankingMode mode);
RankingMode ranking_mode_from_string(const std::string& s);
std::vector<RankingMode> all_ranking_modes();

// One answer generated from one relevant paragraph, with the score triple
// used for ranking. s_ret is the entry's retrieval score mapped to (0,1] via
// (raw + 1) / 2, which is monotone and therefore rank-preserving; the raw
// cosine average is kept alongside for reporting.
struct AnswerCandidate {
    std::string answer_text;
    std::string entry_id;
    int entry_index = 0;     // 0-based position in the retrieval ranking
    int paragraph_index = 0;
    double s_ret = 0.0;      // entry-level score, (0,1]
    double s_ret_raw = 0.0;  // cosine-average retrieval score, [-1,1]
    double s_rel = 0.0;      // probability of the Relevant judgment, (0,1]
    double s_ans = 0.0;      // geometric-mean answer confidence, (0,1]
    std::vector<double> token_logprobs;
};

// Geometric mean of the token probabilities, computed in log domain:
// exp(mean(logprobs)). Constant sequences return exp(logprobs[0]) exactly.
double answer_confidence(std::span<const double> token_logprobs);

// Product of the factors the mode selects, multiplied directly. For the
// random mode an rng must be provided; the draw is uniform on [0,1).
double composite_score(const AnswerCandidate& candidate, RankingMode mode,
                       std::mt19937_64* rng = nullptr);

// Sum of logs of the selected factors; what select_final compares. Throws
// DataError when a selected factor is not strictly positive.
double composite_log_score(const AnswerCandidate& candidate, RankingMode mode);

struct RankedCandidate {
    AnswerCandidate candidate;
    double score = 0.0; // composite product, or the draw for random mode
};

struct SelectionResult {
    std::string final_answer;
    std::vector<RankedCandidate> ranked; // best first
};

// Orders candidates by composite score descending with deterministic
// (entry_index, paragraph_index) tie-breaks and returns the top answer along
// with the full ranking. The seed only matters for the random mode.
SelectionResult select_final(std::vector<AnswerCandidate> candidates, RankingMode mode,
                             uint64_t seed = 0);

} // namespace rrag
