#include "rrag/ranking.hpp"

#include <algorithm>
#include <cmath>

#include "rrag/errors.hpp"
#include "rrag/numeric.hpp"
#include "rrag/rng.hpp"

namespace rrag {

std::string to_string(RankingMode mode) {
    switch (mode) {
        case RankingMode::random: return "random";
        case RankingMode::ans: return "ans";
        case RankingMode::ret: return "ret";
        case RankingMode::rel: return "rel";
        case RankingMode::ret_ans: return "ret_ans";
        case RankingMode::rel_ans: return "rel_ans";
        case RankingMode::ret_rel: return "ret_rel";
        case RankingMode::ret_rel_ans: return "ret_rel_ans";
    }
    return "ret_rel_ans";
}

RankingMode ranking_mode_from_string(const std::string& s) {
    for (RankingMode mode : all_ranking_modes()) {
        if (to_string(mode) == s) return mode;
    }
    throw ConfigError("unknown ranking mode '" + s + "'");
}

std::vector<RankingMode> all_ranking_modes() {
    return {RankingMode::random,  RankingMode::ans,     RankingMode::ret,
            RankingMode::rel,     RankingMode::ret_ans, RankingMode::rel_ans,
            RankingMode::ret_rel, RankingMode::ret_rel_ans};
}

double answer_confidence(std::span<const double> token_logprobs) {
    if (token_logprobs.empty()) {
        throw DataError("answer_confidence: empty logprob sequence");
    }
    bool all_equal = true;
    for (double lp : token_logprobs) {
        if (!std::isfinite(lp)) {
            throw DataError("answer_confidence: non-finite logprob");
        }
        if (lp > 0.0) {
            throw DataError("answer_confidence: logprob above 0");
        }
        if (lp != token_logprobs[0]) all_equal = false;
    }
    if (all_equal) {
        return std::exp(token_logprobs[0]);
    }
    KahanSum sum;
    for (double lp : token_logprobs) sum.add(lp);
    return std::exp(sum.sum() / static_cast<double>(token_logprobs.size()));
}

namespace {

struct FactorSet {
    bool ret = false;
    bool rel = false;
    bool ans = false;
};

FactorSet factors_for(RankingMode mode) {
    switch (mode) {
        case RankingMode::random: return {};
        case RankingMode::ans: return {false, false, true};
        case RankingMode::ret: return {true, false, false};
        case RankingMode::rel: return {false, true, false};
        case RankingMode::ret_ans: return {true, false, true};
        case RankingMode::rel_ans: return {false, true, true};
        case RankingMode::ret_rel: return {true, true, false};
        case RankingMode::ret_rel_ans: return {true, true, true};
    }
    return {};
}

void require_positive(double value, const char* name, const AnswerCandidate& c) {
    if (!(value > 0.0)) {
        throw DataError(std::string("ranking: mode requires positive ") + name +
                        " but candidate (entry " + std::to_string(c.entry_index) +
                        ", paragraph " + std::to_string(c.paragraph_index) + ") has " +
                        std::to_string(value));
    }
}

bool provenance_less(const AnswerCandidate& a, const AnswerCandidate& b) {
    if (a.entry_index != b.entry_index) return a.entry_index < b.entry_index;
    return a.paragraph_index < b.paragraph_index;
}

} // namespace

double composite_score(const AnswerCandidate& candidate, RankingMode mode,
                       std::mt19937_64* rng) {
    if (mode == RankingMode::random) {
        if (rng == nullptr) {
            throw DataError("ranking: random mode needs an rng");
        }
        return uniform_unit(*rng);
    }
    const FactorSet f = factors_for(mode);
    double product = 1.0;
    if (f.ret) {
        require_positive(candidate.s_ret, "s_ret", candidate);
        product *= candidate.s_ret;
    }
    if (f.rel) {
        require_positive(candidate.s_rel, "s_rel", candidate);
        product *= candidate.s_rel;
    }
    if (f.ans) {
        require_positive(candidate.s_ans, "s_ans", candidate);
        product *= candidate.s_ans;
    }
    return product;
}

double composite_log_score(const AnswerCandidate& candidate, RankingMode mode) {
    if (mode == RankingMode::random) {
        throw DataError("ranking: random mode has no log score");
    }
    const FactorSet f = factors_for(mode);
    double log_sum = 0.0;
    if (f.ret) {
        require_positive(candidate.s_ret, "s_ret", candidate);
        log_sum += std::log(candidate.s_ret);
    }
    if (f.rel) {
        require_positive(candidate.s_rel, "s_rel", candidate);
        log_sum += std::log(candidate.s_rel);
    }
    if (f.ans) {
        require_positive(candidate.s_ans, "s_ans", candidate);
        log_sum += std::log(candidate.s_ans);
    }
    return log_sum;
}

SelectionResult select_final(std::vector<AnswerCandidate> candidates, RankingMode mode,
                             uint64_t seed) {
    if (candidates.empty()) {
        throw DataError("select_final: no candidates");
    }
    // canonical provenance order first, so random draws and tie-breaks never
    // depend on caller ordering
    std::sort(candidates.begin(), candidates.end(), provenance_less);

    struct Keyed {
        size_t index;
        double key;   // compared
        double score; // reported
    };
    std::vector<Keyed> keyed;
    keyed.reserve(candidates.size());
    if (mode == RankingMode::random) {
        std::mt19937_64 rng(seed);
        for (size_t i = 0; i < candidates.size(); ++i) {
            double draw = uniform_unit(rng);
            keyed.push_back({i, draw, draw});
        }
    } else {
        for (size_t i = 0; i < candidates.size(); ++i) {
            keyed.push_back({i, composite_log_score(candidates[i], mode),
                             composite_score(candidates[i], mode)});
        }
    }

    std::sort(keyed.begin(), keyed.end(), [&](const Keyed& a, const Keyed& b) {
        if (a.key != b.key) return a.key > b.key;
        return provenance_less(candidates[a.index], candidates[b.index]);
    });

    SelectionResult result;
    result.ranked.reserve(keyed.size());
    for (const auto& k : keyed) {
        result.ranked.push_back(RankedCandidate{candidates[k.index], k.score});
    }
    result.final_answer = result.ranked.front().candidate.answer_text;
    return result;
}

} // namespace rrag
