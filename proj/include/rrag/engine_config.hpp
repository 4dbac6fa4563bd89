#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "rrag/jsonl.hpp"
#include "rrag/pipeline.hpp"

namespace rrag {

// Prompt texts the serving side receives by template id. The engine never
// assembles prompts itself; it only selects the template.
std::map<std::string, std::string> default_prompt_templates();

inline constexpr const char* kPromptAnswerSingle = "answer_single";
inline constexpr const char* kPromptAnswerMulti = "answer_multi";

// Shared run configuration. Precedence: CLI flags > config file > defaults;
// the resolved values are echoed at the start of every run.
struct EngineConfig {
    std::string kb_path;
    std::string backend_spec;          // http(s) URL or scripted fixture path
    std::string judge_spec = "heuristic";
    size_t top_n = 5;
    RetrievalMode retrieval_mode = RetrievalMode::combined;
    RankingMode ranking_mode = kDefaultRankingMode;
    double relaxed_tolerance = 0.10;
    unsigned parallelism = 1;
    FallbackPolicy fallback_policy = FallbackPolicy::direct_answer;
    std::string prompt_template_id = kPromptAnswerSingle;
    std::map<std::string, std::string> prompt_templates = default_prompt_templates();
    std::string judge_prompt; // empty -> built-in default
    uint64_t seed = 0;
    size_t min_paragraph_chars = 20;
    size_t max_paragraphs_per_entry = 0;
    bool skip_failed_paragraphs = true;
    bool renormalize_reflection_prob = false;
    bool normalize_time_as_date = false;

    void apply_json(const json& j); // overlay file values onto defaults
    static EngineConfig load(const std::string& path);
    json to_json() const;
    void validate() const;

    PipelineConfig pipeline_config() const;
};

} // namespace rrag
