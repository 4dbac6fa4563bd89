#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rrag/jsonl.hpp"

namespace rrag {

// The three generation calls the pipeline issues. retrieval_reflection asks
// whether a question needs external knowledge; direct_answer answers from the
// image/question alone; relevance_and_answer judges one paragraph and, when
// relevant, answers conditioned on it.
enum class GenerationMode {
    retrieval_reflection,
    direct_answer,
    relevance_and_answer,
};

enum class ReflectionToken {
    retrieval,
    no_retrieval,
    relevant,
    irrelevant,
};

std::string to_string(GenerationMode mode);
GenerationMode generation_mode_from_string(const std::string& s);
std::string to_string(ReflectionToken token);
// Accepts both plain ("NoRetrieval") and bracketed ("[No Retrieval]") forms.
ReflectionToken reflection_token_from_string(const std::string& s);

struct GenerationRequest {
    GenerationMode mode = GenerationMode::retrieval_reflection;
    std::string question;
    std::optional<std::string> image_ref;       // opaque; resolved by the backend
    std::optional<std::string> context_paragraph; // required iff relevance_and_answer
    std::string prompt_template_id;

    json to_json() const;
    static GenerationRequest from_json(const json& j);
};

struct GenerationResponse {
    std::optional<ReflectionToken> reflection_token;
    // Probability the backend assigned to the emitted reflection token, in (0,1].
    std::optional<double> reflection_prob;
    // Probability of the other token of the pair, when the server reports it;
    // only consumed when pair renormalization is enabled.
    std::optional<double> other_token_prob;
    std::optional<std::string> answer_text;
    std::optional<std::vector<double>> answer_token_logprobs; // all <= 0

    json to_json() const;
    static GenerationResponse from_json(const json& j);
};

// Throws DataError when the request violates the mode/field coupling.
void validate_request(const GenerationRequest& request);
// Throws DataError when the response shape is invalid for the request's mode.
void validate_response(const GenerationRequest& request, const GenerationResponse& response);

// reflection_prob, optionally renormalized over the two-token pair when the
// server reported the other token's probability. Plain generation probability
// is the default behaviour.
double effective_reflection_prob(const GenerationResponse& response, bool renormalize);

class GeneratorBackend {
public:
    virtual ~GeneratorBackend() = default;
    // Must tolerate concurrent calls.
    virtual GenerationResponse generate(const GenerationRequest& request) = 0;
};

// One fixture rule: a request key plus the canned response. A request matches
// when mode and question are equal and, if context_contains is set, the
// request's context paragraph contains that substring. Rules are tried in
// file order; the first match wins.
struct ScriptedRule {
    GenerationMode mode = GenerationMode::retrieval_reflection;
    std::string question;
    std::optional<std::string> context_contains;
    GenerationResponse response;
    size_t line_no = 0;
};

struct ScriptedBackendOptions {
    ReflectionToken default_retrieval_token = ReflectionToken::no_retrieval;
    ReflectionToken default_relevance_token = ReflectionToken::irrelevant;
    double default_reflection_prob = 0.5;
    std::string default_answer_text = "unknown";
    double default_answer_logprob = -0.6931471805599453; // log 0.5
};

// Deterministic table-driven backend; answers from the fixture and records
// every request in an internally synchronized call log.
class ScriptedBackend final : public GeneratorBackend {
public:
    explicit ScriptedBackend(std::vector<ScriptedRule> rules,
                             ScriptedBackendOptions opts = {});
    static std::unique_ptr<ScriptedBackend> from_fixture(const std::string& path,
                                                         ScriptedBackendOptions opts = {});
    static std::vector<ScriptedRule> load_fixture_rules(const std::string& path);

    GenerationResponse generate(const GenerationRequest& request) override;

    struct CallRecord {
        GenerationRequest request;
        bool matched = false;
    };
    std::vector<CallRecord> calls() const;
    size_t call_count(GenerationMode mode) const;
    size_t unmatched_count() const;
    void reset_call_log();

private:
    GenerationResponse default_response(const GenerationRequest& request) const;

    std::vector<ScriptedRule> rules_;
    ScriptedBackendOptions opts_;
    mutable std::mutex mu_;
    std::vector<CallRecord> log_;
};

struct RemoteBackendOptions {
    double timeout_seconds = 30.0;
};

// HTTP client for a serving process exposing POST /generate. The server owns
// prompt assembly, decoding, and probability extraction; this client only
// validates the reply shape.
class RemoteBackend final : public GeneratorBackend {
public:
    explicit RemoteBackend(std::string base_url, RemoteBackendOptions opts = {});
    GenerationResponse generate(const GenerationRequest& request) override;
    const std::string& base_url() const { return base_url_; }

private:
    std::string base_url_;
    RemoteBackendOptions opts_;
};

// "http(s)://..." -> RemoteBackend, anything else -> scripted fixture path.
std::unique_ptr<GeneratorBackend> make_backend(const std::string& spec);

} // namespace rrag
