#include "rrag/engine_config.hpp"

#include "rrag/errors.hpp"

namespace rrag {

std::map<std::string, std::string> default_prompt_templates() {
    return {
        {kPromptAnswerSingle,
         "Based on the retrieved document, answer the question with a single word or "
         "phrase."},
        {kPromptAnswerMulti,
         "Based on the retrieved documents, answer the question as briefly as possible, "
         "using '&&' to connect multiple different answers."},
    };
}

void EngineConfig::apply_json(const json& j) {
    if (!j.is_object()) {
        throw ConfigError("config file must hold a JSON object");
    }
    auto get_string = [&](const char* key, std::string& target) {
        if (j.contains(key)) {
            if (!j[key].is_string()) throw ConfigError(std::string("config: '") + key + "' must be a string");
            target = j[key].get<std::string>();
        }
    };
    get_string("kb_path", kb_path);
    get_string("backend", backend_spec);
    get_string("judge", judge_spec);
    get_string("prompt_template_id", prompt_template_id);
    get_string("judge_prompt", judge_prompt);
    if (j.contains("top_n")) top_n = j["top_n"].get<size_t>();
    if (j.contains("retrieval_mode")) {
        retrieval_mode = retrieval_mode_from_string(j["retrieval_mode"].get<std::string>());
    }
    if (j.contains("ranking_mode")) {
        ranking_mode = ranking_mode_from_string(j["ranking_mode"].get<std::string>());
    }
    if (j.contains("relaxed_tolerance")) relaxed_tolerance = j["relaxed_tolerance"].get<double>();
    if (j.contains("parallelism")) parallelism = j["parallelism"].get<unsigned>();
    if (j.contains("fallback_policy")) {
        fallback_policy = fallback_policy_from_string(j["fallback_policy"].get<std::string>());
    }
    if (j.contains("prompt_templates") && j["prompt_templates"].is_object()) {
        for (const auto& [key, value] : j["prompt_templates"].items()) {
            prompt_templates[key] = value.get<std::string>();
        }
    }
    if (j.contains("seed")) seed = j["seed"].get<uint64_t>();
    if (j.contains("min_paragraph_chars")) min_paragraph_chars = j["min_paragraph_chars"].get<size_t>();
    if (j.contains("max_paragraphs_per_entry")) {
        max_paragraphs_per_entry = j["max_paragraphs_per_entry"].get<size_t>();
    }
    if (j.contains("skip_failed_paragraphs")) {
        skip_failed_paragraphs = j["skip_failed_paragraphs"].get<bool>();
    }
    if (j.contains("renormalize_reflection_prob")) {
        renormalize_reflection_prob = j["renormalize_reflection_prob"].get<bool>();
    }
    if (j.contains("normalize_time_as_date")) {
        normalize_time_as_date = j["normalize_time_as_date"].get<bool>();
    }
}

EngineConfig EngineConfig::load(const std::string& path) {
    EngineConfig cfg;
    json j;
    try {
        j = read_json_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    cfg.apply_json(j);
    return cfg;
}

json EngineConfig::to_json() const {
    json j;
    j["kb_path"] = kb_path;
    j["backend"] = backend_spec;
    j["judge"] = judge_spec;
    j["top_n"] = top_n;
    j["retrieval_mode"] = to_string(retrieval_mode);
    j["ranking_mode"] = to_string(ranking_mode);
    j["relaxed_tolerance"] = relaxed_tolerance;
    j["parallelism"] = parallelism;
    j["fallback_policy"] = to_string(fallback_policy);
    j["prompt_template_id"] = prompt_template_id;
    j["seed"] = seed;
    j["min_paragraph_chars"] = min_paragraph_chars;
    j["max_paragraphs_per_entry"] = max_paragraphs_per_entry;
    j["skip_failed_paragraphs"] = skip_failed_paragraphs;
    j["renormalize_reflection_prob"] = renormalize_reflection_prob;
    j["normalize_time_as_date"] = normalize_time_as_date;
    return j;
}

void EngineConfig::validate() const {
    if (top_n < 1) throw ConfigError("config: top_n must be >= 1");
    if (parallelism < 1) throw ConfigError("config: parallelism must be >= 1");
    if (relaxed_tolerance < 0.0) throw ConfigError("config: relaxed_tolerance must be >= 0");
    if (!prompt_templates.count(prompt_template_id)) {
        throw ConfigError("config: unknown prompt_template_id '" + prompt_template_id + "'");
    }
}

PipelineConfig EngineConfig::pipeline_config() const {
    PipelineConfig cfg;
    cfg.top_n = top_n;
    cfg.retrieval_mode = retrieval_mode;
    cfg.ranking_mode = ranking_mode;
    cfg.parallelism = parallelism;
    cfg.fallback_policy = fallback_policy;
    cfg.prompt_template_id = prompt_template_id;
    cfg.segment.min_paragraph_chars = min_paragraph_chars;
    cfg.max_paragraphs_per_entry = max_paragraphs_per_entry;
    cfg.skip_failed_paragraphs = skip_failed_paragraphs;
    cfg.renormalize_reflection_prob = renormalize_reflection_prob;
    cfg.seed = seed;
    return cfg;
}

} // namespace rrag
