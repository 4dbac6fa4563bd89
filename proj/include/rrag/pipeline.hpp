#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rrag/generator_backend.hpp"
#include "rrag/jsonl.hpp"
#include "rrag/knowledge_base.hpp"
#include "rrag/ranking.hpp"
#include "rrag/retrieval.hpp"

namespace rrag {

struct Query {
    std::string query_id;
    std::string question;
    std::string image_ref;                  // opaque reference, may be empty
    std::vector<float> image_embedding;     // needed only when retrieval runs
    std::vector<std::string> gold_answers;  // optional, for evaluation
    std::optional<std::string> question_category; // STRING | TIME | NUMERICAL

    json to_json() const;
    static Query from_json(const json& j);
};

// One decision in the run, in execution order. Only fields relevant to the
// step are set; every backend call contributes exactly one event carrying its
// mode and returned probability.
struct TraceEvent {
    std::string step;
    std::optional<std::string> mode;
    std::optional<std::string> token;
    std::optional<double> prob;
    std::optional<double> answer_confidence;
    std::optional<std::string> entry_id;
    std::optional<int> entry_index;
    std::optional<int> paragraph_index;
    std::optional<int> count;
    std::optional<std::string> detail;
    bool fallback = false;

    json to_json() const;
};

enum class FallbackPolicy {
    direct_answer, // answer from image+question when nothing was relevant
    abstain,
};

std::string to_string(FallbackPolicy policy);
FallbackPolicy fallback_policy_from_string(const std::string& s);

inline constexpr const char* kAbstainMarker = "[ABSTAIN]";

struct PipelineConfig {
    size_t top_n = 5;
    RetrievalMode retrieval_mode = RetrievalMode::combined;
    RankingMode ranking_mode = kDefaultRankingMode;
    unsigned parallelism = 1;
    FallbackPolicy fallback_policy = FallbackPolicy::direct_answer;
    std::string prompt_template_id = "answer_single";
    SegmentOptions segment;
    size_t max_paragraphs_per_entry = 0; // 0 = unlimited
    bool skip_failed_paragraphs = true;
    bool renormalize_reflection_prob = false;
    bool ablate_ranking = false; // also rank under every mode
    // the random baseline has no single answer; the ablation carries one
    // selection per seed (seed, seed+1, ...) and reports their mean
    size_t random_ablation_seeds = 5;
    uint64_t seed = 0;
};

enum class PipelineBranch { no_retrieval, retrieval };

std::string to_string(PipelineBranch branch);

struct PipelineResult {
    std::string query_id;
    PipelineBranch branch = PipelineBranch::no_retrieval;
    std::optional<std::string> direct_answer;
    std::vector<AnswerCandidate> candidates; // sorted by (entry_index, paragraph_index)
    std::optional<std::string> final_answer;
    std::optional<RankingMode> ranking_mode;
    std::vector<RankedCandidate> ranked;
    // mode name -> final answer(s) under that mode; deterministic modes carry
    // one answer, the random mode one per ablation seed
    std::map<std::string, std::vector<std::string>> ranking_ablation;
    std::vector<TraceEvent> trace;

    json to_json() const;
};

// Executes the full reflective control flow for one query: the retrieval
// decision, the optional top-N scan with per-paragraph relevance judgments,
// candidate collection, and final-answer ranking.
PipelineResult run_query(const Query& query, const KnowledgeBase& kb,
                         GeneratorBackend& backend, const PipelineConfig& cfg);

struct BatchItem {
    std::string query_id;
    std::optional<PipelineResult> result;
    std::optional<std::string> error;

    json to_json() const;
};

// Runs queries independently, up to cfg.parallelism at a time; results come
// back in input order and match a serial run exactly. Per-query failures are
// captured, not fatal.
std::vector<BatchItem> run_batch(const std::vector<Query>& queries, const KnowledgeBase& kb,
                                 GeneratorBackend& backend, const PipelineConfig& cfg);

std::vector<Query> load_queries_jsonl(const std::string& path);

} // namespace rrag
