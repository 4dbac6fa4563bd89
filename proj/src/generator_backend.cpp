#include "rrag/generator_backend.hpp"

#include <cmath>
#include <set>
#include <tuple>

#include "httplib.h"

#include "rrag/errors.hpp"
#include "rrag/strings.hpp"

namespace rrag {

std::string to_string(GenerationMode mode) {
    switch (mode) {
        case GenerationMode::retrieval_reflection: return "retrieval_reflection";
        case GenerationMode::direct_answer: return "direct_answer";
        case GenerationMode::relevance_and_answer: return "relevance_and_answer";
    }
    return "retrieval_reflection";
}

GenerationMode generation_mode_from_string(const std::string& s) {
    if (s == "retrieval_reflection") return GenerationMode::retrieval_reflection;
    if (s == "direct_answer") return GenerationMode::direct_answer;
    if (s == "relevance_and_answer") return GenerationMode::relevance_and_answer;
    throw DataError("unknown generation mode '" + s + "'");
}

std::string to_string(ReflectionToken token) {
    switch (token) {
        case ReflectionToken::retrieval: return "Retrieval";
        case ReflectionToken::no_retrieval: return "NoRetrieval";
        case ReflectionToken::relevant: return "Relevant";
        case ReflectionToken::irrelevant: return "Irrelevant";
    }
    return "NoRetrieval";
}

ReflectionToken reflection_token_from_string(const std::string& s) {
    std::string t = to_lower(trim(s));
    // strip optional surrounding brackets
    if (t.size() >= 2 && t.front() == '[' && t.back() == ']') {
        t = trim(t.substr(1, t.size() - 2));
    }
    // drop inner spaces so "no retrieval" and "noretrieval" both parse
    std::string compact;
    for (char c : t) {
        if (c != ' ') compact.push_back(c);
    }
    if (compact == "retrieval") return ReflectionToken::retrieval;
    if (compact == "noretrieval") return ReflectionToken::no_retrieval;
    if (compact == "relevant") return ReflectionToken::relevant;
    if (compact == "irrelevant") return ReflectionToken::irrelevant;
    throw DataError("unknown reflection token '" + s + "'");
}

json GenerationRequest::to_json() const {
    json j;
    j["mode"] = rrag::to_string(mode);
    j["question"] = question;
    if (image_ref) j["image_ref"] = *image_ref;
    if (context_paragraph) j["context_paragraph"] = *context_paragraph;
    j["prompt_template_id"] = prompt_template_id;
    return j;
}

GenerationRequest GenerationRequest::from_json(const json& j) {
    GenerationRequest r;
    if (!j.contains("mode") || !j["mode"].is_string()) {
        throw DataError("generation request: missing 'mode'");
    }
    r.mode = generation_mode_from_string(j["mode"].get<std::string>());
    if (!j.contains("question") || !j["question"].is_string()) {
        throw DataError("generation request: missing 'question'");
    }
    r.question = j["question"].get<std::string>();
    if (j.contains("image_ref") && !j["image_ref"].is_null()) {
        r.image_ref = j["image_ref"].get<std::string>();
    }
    if (j.contains("context_paragraph") && !j["context_paragraph"].is_null()) {
        r.context_paragraph = j["context_paragraph"].get<std::string>();
    }
    if (j.contains("prompt_template_id") && j["prompt_template_id"].is_string()) {
        r.prompt_template_id = j["prompt_template_id"].get<std::string>();
    }
    return r;
}

json GenerationResponse::to_json() const {
    json j;
    if (reflection_token) j["reflection_token"] = rrag::to_string(*reflection_token);
    if (reflection_prob) j["reflection_prob"] = *reflection_prob;
    if (other_token_prob) j["other_token_prob"] = *other_token_prob;
    if (answer_text) j["answer_text"] = *answer_text;
    if (answer_token_logprobs) j["answer_token_logprobs"] = *answer_token_logprobs;
    return j;
}

GenerationResponse GenerationResponse::from_json(const json& j) {
    GenerationResponse r;
    if (j.contains("reflection_token") && !j["reflection_token"].is_null()) {
        if (!j["reflection_token"].is_string()) {
            throw DataError("generation response: 'reflection_token' must be a string");
        }
        r.reflection_token =
            reflection_token_from_string(j["reflection_token"].get<std::string>());
    }
    if (j.contains("reflection_prob") && !j["reflection_prob"].is_null()) {
        if (!j["reflection_prob"].is_number()) {
            throw DataError("generation response: 'reflection_prob' must be a number");
        }
        r.reflection_prob = j["reflection_prob"].get<double>();
    }
    if (j.contains("other_token_prob") && !j["other_token_prob"].is_null()) {
        if (!j["other_token_prob"].is_number()) {
            throw DataError("generation response: 'other_token_prob' must be a number");
        }
        r.other_token_prob = j["other_token_prob"].get<double>();
    }
    if (j.contains("answer_text") && !j["answer_text"].is_null()) {
        if (!j["answer_text"].is_string()) {
            throw DataError("generation response: 'answer_text' must be a string");
        }
        r.answer_text = j["answer_text"].get<std::string>();
    }
    if (j.contains("answer_token_logprobs") && !j["answer_token_logprobs"].is_null()) {
        if (!j["answer_token_logprobs"].is_array()) {
            throw DataError("generation response: 'answer_token_logprobs' must be an array");
        }
        std::vector<double> lps;
        for (const auto& x : j["answer_token_logprobs"]) {
            if (!x.is_number()) {
                throw DataError("generation response: non-numeric token logprob");
            }
            lps.push_back(x.get<double>());
        }
        r.answer_token_logprobs = std::move(lps);
    }
    return r;
}

void validate_request(const GenerationRequest& request) {
    if (trim(request.question).empty()) {
        throw DataError("generation request: question is empty");
    }
    const bool has_context = request.context_paragraph.has_value();
    if (request.mode == GenerationMode::relevance_and_answer && !has_context) {
        throw DataError("generation request: relevance_and_answer requires context_paragraph");
    }
    if (request.mode != GenerationMode::relevance_and_answer && has_context) {
        throw DataError("generation request: context_paragraph only valid for relevance_and_answer");
    }
}

namespace {

void check_reflection_prob(const GenerationResponse& r) {
    if (!r.reflection_prob) {
        throw DataError("generation response: reflection_prob missing");
    }
    const double p = *r.reflection_prob;
    if (!std::isfinite(p) || p <= 0.0 || p > 1.0) {
        throw DataError("generation response: reflection_prob must lie in (0,1]");
    }
    if (r.other_token_prob) {
        const double q = *r.other_token_prob;
        if (!std::isfinite(q) || q < 0.0 || q > 1.0) {
            throw DataError("generation response: other_token_prob must lie in [0,1]");
        }
    }
}

void check_answer_fields(const GenerationResponse& r) {
    if (!r.answer_text || !r.answer_token_logprobs) {
        throw DataError("generation response: answer_text and answer_token_logprobs required");
    }
    if (r.answer_token_logprobs->empty()) {
        throw DataError("generation response: answer_token_logprobs is empty");
    }
    for (double lp : *r.answer_token_logprobs) {
        if (!std::isfinite(lp) || lp > 0.0) {
            throw DataError("generation response: token logprobs must be finite and <= 0");
        }
    }
}

void check_no_answer_fields(const GenerationResponse& r) {
    if (r.answer_text || r.answer_token_logprobs) {
        throw DataError("generation response: unexpected answer fields");
    }
}

void check_no_reflection_fields(const GenerationResponse& r) {
    if (r.reflection_token || r.reflection_prob) {
        throw DataError("generation response: unexpected reflection fields");
    }
}

} // namespace

void validate_response(const GenerationRequest& request, const GenerationResponse& response) {
    switch (request.mode) {
        case GenerationMode::retrieval_reflection: {
            if (!response.reflection_token ||
                (*response.reflection_token != ReflectionToken::retrieval &&
                 *response.reflection_token != ReflectionToken::no_retrieval)) {
                throw DataError("generation response: retrieval_reflection must emit "
                                "Retrieval or NoRetrieval");
            }
            check_reflection_prob(response);
            check_no_answer_fields(response);
            break;
        }
        case GenerationMode::direct_answer: {
            check_no_reflection_fields(response);
            check_answer_fields(response);
            break;
        }
        case GenerationMode::relevance_and_answer: {
            if (!response.reflection_token ||
                (*response.reflection_token != ReflectionToken::relevant &&
                 *response.reflection_token != ReflectionToken::irrelevant)) {
                throw DataError("generation response: relevance_and_answer must emit "
                                "Relevant or Irrelevant");
            }
            check_reflection_prob(response);
            if (*response.reflection_token == ReflectionToken::relevant) {
                check_answer_fields(response);
            } else {
                check_no_answer_fields(response);
            }
            break;
        }
    }
}

double effective_reflection_prob(const GenerationResponse& response, bool renormalize) {
    if (!response.reflection_prob) {
        throw DataError("generation response carries no reflection probability");
    }
    const double p = *response.reflection_prob;
    if (renormalize && response.other_token_prob) {
        const double q = *response.other_token_prob;
        if (p + q > 0.0) return p / (p + q);
    }
    return p;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptedRule> rules, ScriptedBackendOptions opts)
    : rules_(std::move(rules)), opts_(opts) {}

std::vector<ScriptedRule> ScriptedBackend::load_fixture_rules(const std::string& path) {
    std::vector<ScriptedRule> rules;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for_each_jsonl_line(path, [&](size_t line_no, const json& j) {
        const std::string where = path + ":" + std::to_string(line_no);
        if (!j.contains("request_key") || !j["request_key"].is_object() ||
            !j.contains("response") || !j["response"].is_object()) {
            throw DataError(where + ": fixture row needs 'request_key' and 'response'");
        }
        const json& key = j["request_key"];
        ScriptedRule rule;
        rule.line_no = line_no;
        if (!key.contains("mode") || !key["mode"].is_string()) {
            throw DataError(where + ": request_key needs a 'mode'");
        }
        rule.mode = generation_mode_from_string(key["mode"].get<std::string>());
        if (!key.contains("question") || !key["question"].is_string()) {
            throw DataError(where + ": request_key needs a 'question'");
        }
        rule.question = key["question"].get<std::string>();
        if (key.contains("context_contains") && !key["context_contains"].is_null()) {
            rule.context_contains = key["context_contains"].get<std::string>();
        }
        auto fingerprint = std::make_tuple(to_string(rule.mode), rule.question,
                                           rule.context_contains.value_or("\x01"));
        if (!seen.insert(fingerprint).second) {
            throw DataError(where + ": duplicate fixture key");
        }
        try {
            rule.response = GenerationResponse::from_json(j["response"]);
            GenerationRequest probe;
            probe.mode = rule.mode;
            probe.question = rule.question;
            if (rule.mode == GenerationMode::relevance_and_answer) {
                probe.context_paragraph = rule.context_contains.value_or("");
            }
            validate_response(probe, rule.response);
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
        rules.push_back(std::move(rule));
    });
    return rules;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_fixture(const std::string& path,
                                                               ScriptedBackendOptions opts) {
    return std::make_unique<ScriptedBackend>(load_fixture_rules(path), opts);
}

GenerationResponse ScriptedBackend::default_response(const GenerationRequest& request) const {
    GenerationResponse r;
    switch (request.mode) {
        case GenerationMode::retrieval_reflection:
            r.reflection_token = opts_.default_retrieval_token;
            r.reflection_prob = opts_.default_reflection_prob;
            break;
        case GenerationMode::relevance_and_answer:
            r.reflection_token = opts_.default_relevance_token;
            r.reflection_prob = opts_.default_reflection_prob;
            if (*r.reflection_token == ReflectionToken::relevant) {
                r.answer_text = opts_.default_answer_text;
                r.answer_token_logprobs = {opts_.default_answer_logprob};
            }
            break;
        case GenerationMode::direct_answer:
            r.answer_text = opts_.default_answer_text;
            r.answer_token_logprobs = {opts_.default_answer_logprob};
            break;
    }
    return r;
}

GenerationResponse ScriptedBackend::generate(const GenerationRequest& request) {
    validate_request(request);
    const ScriptedRule* match = nullptr;
    for (const auto& rule : rules_) {
        if (rule.mode != request.mode || rule.question != request.question) continue;
        if (rule.context_contains) {
            if (!request.context_paragraph ||
                request.context_paragraph->find(*rule.context_contains) == std::string::npos) {
                continue;
            }
        }
        match = &rule;
        break;
    }
    {
        std::lock_guard<std::mutex> lock(mu_);
        log_.push_back(CallRecord{request, match != nullptr});
    }
    return match != nullptr ? match->response : default_response(request);
}

std::vector<ScriptedBackend::CallRecord> ScriptedBackend::calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return log_;
}

size_t ScriptedBackend::call_count(GenerationMode mode) const {
    std::lock_guard<std::mutex> lock(mu_);
    size_t n = 0;
    for (const auto& c : log_) {
        if (c.request.mode == mode) ++n;
    }
    return n;
}

size_t ScriptedBackend::unmatched_count() const {
    std::lock_guard<std::mutex> lock(mu_);
    size_t n = 0;
    for (const auto& c : log_) {
        if (!c.matched) ++n;
    }
    return n;
}

void ScriptedBackend::reset_call_log() {
    std::lock_guard<std::mutex> lock(mu_);
    log_.clear();
}

RemoteBackend::RemoteBackend(std::string base_url, RemoteBackendOptions opts)
    : base_url_(std::move(base_url)), opts_(opts) {}

GenerationResponse RemoteBackend::generate(const GenerationRequest& request) {
    validate_request(request);
    // one client per call keeps concurrent generate() calls independent
    httplib::Client client(base_url_);
    const time_t sec = static_cast<time_t>(opts_.timeout_seconds);
    const time_t usec = static_cast<time_t>((opts_.timeout_seconds - static_cast<double>(sec)) * 1e6);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);

    auto res = client.Post("/generate", request.to_json().dump(), "application/json");
    if (!res) {
        throw BackendError("backend unreachable at " + base_url_ + ": " +
                           httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw BackendError("backend returned HTTP " + std::to_string(res->status) +
                           ": " + res->body);
    }
    GenerationResponse response;
    try {
        response = GenerationResponse::from_json(json::parse(res->body));
        validate_response(request, response);
    } catch (const json::parse_error& e) {
        throw BackendError(std::string("backend reply is not JSON: ") + e.what());
    } catch (const DataError& e) {
        throw BackendError(std::string("backend reply violates the response schema: ") +
                           e.what());
    }
    return response;
}

std::unique_ptr<GeneratorBackend> make_backend(const std::string& spec) {
    if (starts_with(spec, "http://") || starts_with(spec, "https://")) {
        return std::make_unique<RemoteBackend>(spec);
    }
    return ScriptedBackend::from_fixture(spec);
}

} // namespace rrag
