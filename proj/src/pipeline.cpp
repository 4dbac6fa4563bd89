#include "rrag/pipeline.hpp"

#include <algorithm>

#include "rrag/errors.hpp"
#include "rrag/parallel.hpp"
#include "rrag/strings.hpp"

namespace rrag {

json Query::to_json() const {
    json j;
    j["query_id"] = query_id;
    j["question"] = question;
    if (!image_ref.empty()) j["image_ref"] = image_ref;
    if (!image_embedding.empty()) j["image_embedding"] = image_embedding;
    if (!gold_answers.empty()) j["gold_answers"] = gold_answers;
    if (question_category) j["question_category"] = *question_category;
    return j;
}

Query Query::from_json(const json& j) {
    Query q;
    if (!j.contains("query_id") || !j["query_id"].is_string()) {
        throw DataError("query: missing 'query_id'");
    }
    q.query_id = j["query_id"].get<std::string>();
    if (!j.contains("question") || !j["question"].is_string() ||
        trim(j["question"].get<std::string>()).empty()) {
        throw DataError("query '" + q.query_id + "': missing or empty 'question'");
    }
    q.question = j["question"].get<std::string>();
    if (j.contains("image_ref") && j["image_ref"].is_string()) {
        q.image_ref = j["image_ref"].get<std::string>();
    }
    if (j.contains("image_embedding") && j["image_embedding"].is_array()) {
        for (const auto& x : j["image_embedding"]) {
            if (!x.is_number()) {
                throw DataError("query '" + q.query_id + "': non-numeric embedding value");
            }
            q.image_embedding.push_back(static_cast<float>(x.get<double>()));
        }
    }
    if (j.contains("gold_answers") && j["gold_answers"].is_array()) {
        for (const auto& a : j["gold_answers"]) {
            q.gold_answers.push_back(a.get<std::string>());
        }
    }
    if (j.contains("question_category") && j["question_category"].is_string()) {
        const std::string cat = j["question_category"].get<std::string>();
        if (cat != "STRING" && cat != "TIME" && cat != "NUMERICAL") {
            throw DataError("query '" + q.query_id + "': unknown question_category '" +
                            cat + "'");
        }
        q.question_category = cat;
    }
    return q;
}

json TraceEvent::to_json() const {
    json j;
    j["step"] = step;
    if (mode) j["mode"] = *mode;
    if (token) j["token"] = *token;
    if (prob) j["prob"] = *prob;
    if (answer_confidence) j["answer_confidence"] = *answer_confidence;
    if (entry_id) j["entry_id"] = *entry_id;
    if (entry_index) j["entry_index"] = *entry_index;
    if (paragraph_index) j["paragraph_index"] = *paragraph_index;
    if (count) j["count"] = *count;
    if (detail) j["detail"] = *detail;
    if (fallback) j["fallback"] = true;
    return j;
}

std::string to_string(FallbackPolicy policy) {
    return policy == FallbackPolicy::direct_answer ? "direct_answer" : "abstain";
}

FallbackPolicy fallback_policy_from_string(const std::string& s) {
    if (s == "direct_answer") return FallbackPolicy::direct_answer;
    if (s == "abstain") return FallbackPolicy::abstain;
    throw ConfigError("unknown fallback policy '" + s +
                      "' (expected direct_answer or abstain)");
}

std::string to_string(PipelineBranch branch) {
    return branch == PipelineBranch::no_retrieval ? "no_retrieval" : "retrieval";
}

namespace {

json candidate_to_json(const AnswerCandidate& c) {
    json j;
    j["answer_text"] = c.answer_text;
    j["entry_id"] = c.entry_id;
    j["entry_index"] = c.entry_index;
    j["paragraph_index"] = c.paragraph_index;
    j["s_ret"] = c.s_ret;
    j["s_ret_raw"] = c.s_ret_raw;
    j["s_rel"] = c.s_rel;
    j["s_ans"] = c.s_ans;
    j["token_logprobs"] = c.token_logprobs;
    return j;
}

} // namespace

json PipelineResult::to_json() const {
    json j;
    j["query_id"] = query_id;
    j["branch"] = to_string(branch);
    if (direct_answer) j["direct_answer"] = *direct_answer;
    if (final_answer) j["final_answer"] = *final_answer;
    json cands = json::array();
    for (const auto& c : candidates) cands.push_back(candidate_to_json(c));
    j["candidates"] = cands;
    if (ranking_mode) j["ranking_mode"] = rrag::to_string(*ranking_mode);
    if (!ranked.empty()) {
        json r = json::array();
        for (const auto& rc : ranked) {
            json item;
            item["entry_index"] = rc.candidate.entry_index;
            item["paragraph_index"] = rc.candidate.paragraph_index;
            item["answer_text"] = rc.candidate.answer_text;
            item["score"] = rc.score;
            r.push_back(item);
        }
        j["ranked"] = r;
    }
    if (!ranking_ablation.empty()) {
        json ab = json::object();
        for (const auto& [mode, answers] : ranking_ablation) {
            if (answers.size() == 1) {
                ab[mode] = answers.front();
            } else {
                ab[mode] = answers;
            }
        }
        j["ranking_ablation"] = ab;
    }
    json t = json::array();
    for (const auto& ev : trace) t.push_back(ev.to_json());
    j["trace"] = t;
    return j;
}

json BatchItem::to_json() const {
    if (result) return result->to_json();
    json j;
    j["query_id"] = query_id;
    j["error"] = error.value_or("unknown error");
    return j;
}

namespace {

GenerationRequest make_request(GenerationMode mode, const Query& query,
                               const PipelineConfig& cfg) {
    GenerationRequest req;
    req.mode = mode;
    req.question = query.question;
    if (!query.image_ref.empty()) req.image_ref = query.image_ref;
    req.prompt_template_id = cfg.prompt_template_id;
    return req;
}

// Issues the direct-answer call and records it in the trace.
std::string direct_answer_step(const Query& query, GeneratorBackend& backend,
                               const PipelineConfig& cfg, bool is_fallback,
                               std::vector<TraceEvent>& trace) {
    GenerationRequest req = make_request(GenerationMode::direct_answer, query, cfg);
    GenerationResponse resp = backend.generate(req);
    validate_response(req, resp);
    TraceEvent ev;
    ev.step = "direct_answer";
    ev.mode = to_string(req.mode);
    ev.answer_confidence = answer_confidence(*resp.answer_token_logprobs);
    ev.fallback = is_fallback;
    trace.push_back(std::move(ev));
    return *resp.answer_text;
}

struct ParagraphTask {
    size_t entry_pos = 0; // index into hits
    Paragraph paragraph;
};

struct ParagraphOutcome {
    TraceEvent event;
    std::optional<AnswerCandidate> candidate;
    std::optional<std::string> error;
};

} // namespace

PipelineResult run_query(const Query& query, const KnowledgeBase& kb,
                         GeneratorBackend& backend, const PipelineConfig& cfg) {
    if (cfg.top_n < 1) {
        throw ConfigError("pipeline: top_n must be >= 1");
    }
    if (trim(query.question).empty()) {
        throw DataError("query '" + query.query_id + "': empty question");
    }

    PipelineResult result;
    result.query_id = query.query_id;

    // step 1: decide whether the question needs external knowledge
    GenerationRequest ret_req = make_request(GenerationMode::retrieval_reflection, query, cfg);
    GenerationResponse ret_resp = backend.generate(ret_req);
    validate_response(ret_req, ret_resp);
    const double ret_prob =
        effective_reflection_prob(ret_resp, cfg.renormalize_reflection_prob);
    {
        TraceEvent ev;
        ev.step = "retrieval_reflection";
        ev.mode = to_string(ret_req.mode);
        ev.token = to_string(*ret_resp.reflection_token);
        ev.prob = ret_prob;
        result.trace.push_back(std::move(ev));
    }

    if (*ret_resp.reflection_token == ReflectionToken::no_retrieval) {
        result.branch = PipelineBranch::no_retrieval;
        std::string answer = direct_answer_step(query, backend, cfg, false, result.trace);
        result.direct_answer = answer;
        result.final_answer = std::move(answer);
        return result;
    }

    // step 2: retrieve and judge every paragraph of the top-N articles
    result.branch = PipelineBranch::retrieval;
    if (query.image_embedding.empty()) {
        throw DataError("query '" + query.query_id +
                        "': retrieval requested but query has no image embedding");
    }
    if (kb.size() > 0 && query.image_embedding.size() != kb.dimension()) {
        throw DataError("query '" + query.query_id + "': embedding dimension " +
                        std::to_string(query.image_embedding.size()) +
                        " does not match KB dimension " + std::to_string(kb.dimension()));
    }
    std::vector<RetrievalHit> hits =
        top_n(query.image_embedding, kb, cfg.top_n, cfg.retrieval_mode);
    {
        TraceEvent ev;
        ev.step = "retrieve";
        ev.mode = to_string(cfg.retrieval_mode);
        ev.count = static_cast<int>(hits.size());
        result.trace.push_back(std::move(ev));
    }

    std::vector<ParagraphTask> tasks;
    for (size_t i = 0; i < hits.size(); ++i) {
        const KbEntry* entry = kb.find(hits[i].entry_id);
        std::vector<Paragraph> paragraphs =
            segment_article(hits[i].entry_id, entry->article, cfg.segment);
        if (cfg.max_paragraphs_per_entry > 0 &&
            paragraphs.size() > cfg.max_paragraphs_per_entry) {
            paragraphs.resize(cfg.max_paragraphs_per_entry);
        }
        for (auto& p : paragraphs) {
            tasks.push_back(ParagraphTask{i, std::move(p)});
        }
    }

    std::vector<ParagraphOutcome> outcomes(tasks.size());
    parallel_for_indexed(tasks.size(), cfg.parallelism, [&](size_t t) {
        const ParagraphTask& task = tasks[t];
        const RetrievalHit& hit = hits[task.entry_pos];
        ParagraphOutcome& out = outcomes[t];
        out.event.step = "relevance_and_answer";
        out.event.mode = to_string(GenerationMode::relevance_and_answer);
        out.event.entry_id = hit.entry_id;
        out.event.entry_index = static_cast<int>(task.entry_pos);
        out.event.paragraph_index = task.paragraph.paragraph_index;
        try {
            GenerationRequest req =
                make_request(GenerationMode::relevance_and_answer, query, cfg);
            req.context_paragraph = task.paragraph.text;
            GenerationResponse resp = backend.generate(req);
            validate_response(req, resp);
            const double rel_prob =
                effective_reflection_prob(resp, cfg.renormalize_reflection_prob);
            out.event.token = to_string(*resp.reflection_token);
            out.event.prob = rel_prob;
            if (*resp.reflection_token == ReflectionToken::relevant) {
                AnswerCandidate c;
                c.answer_text = *resp.answer_text;
                c.entry_id = hit.entry_id;
                c.entry_index = static_cast<int>(task.entry_pos);
                c.paragraph_index = task.paragraph.paragraph_index;
                c.s_ret_raw = hit.score;
                c.s_ret = (hit.score + 1.0) / 2.0;
                c.s_rel = rel_prob;
                c.token_logprobs = *resp.answer_token_logprobs;
                c.s_ans = answer_confidence(c.token_logprobs);
                out.event.answer_confidence = c.s_ans;
                out.candidate = std::move(c);
            }
        } catch (const std::exception& e) {
            if (!cfg.skip_failed_paragraphs) throw;
            out.event.detail = e.what();
            out.error = e.what();
        }
    });

    // outcomes are appended in task order, so the trace and the candidate list
    // never depend on completion order
    for (auto& out : outcomes) {
        result.trace.push_back(std::move(out.event));
        if (out.candidate) {
            result.candidates.push_back(std::move(*out.candidate));
        }
    }

    if (result.candidates.empty()) {
        if (cfg.fallback_policy == FallbackPolicy::direct_answer) {
            std::string answer = direct_answer_step(query, backend, cfg, true, result.trace);
            result.direct_answer = answer;
            result.final_answer = std::move(answer);
        } else {
            TraceEvent ev;
            ev.step = "abstain";
            ev.detail = "no relevant paragraph";
            result.trace.push_back(std::move(ev));
            result.final_answer = kAbstainMarker;
        }
        return result;
    }

    SelectionResult sel = select_final(result.candidates, cfg.ranking_mode, cfg.seed);
    result.ranking_mode = cfg.ranking_mode;
    result.final_answer = sel.final_answer;
    result.ranked = std::move(sel.ranked);
    {
        TraceEvent ev;
        ev.step = "ranking";
        ev.mode = to_string(cfg.ranking_mode);
        ev.count = static_cast<int>(result.candidates.size());
        ev.prob = result.ranked.front().score;
        result.trace.push_back(std::move(ev));
    }

    if (cfg.ablate_ranking) {
        for (RankingMode mode : all_ranking_modes()) {
            std::vector<std::string> answers;
            if (mode == RankingMode::random) {
                const size_t seeds = std::max<size_t>(1, cfg.random_ablation_seeds);
                for (size_t s = 0; s < seeds; ++s) {
                    answers.push_back(
                        select_final(result.candidates, mode, cfg.seed + s).final_answer);
                }
            } else {
                answers.push_back(select_final(result.candidates, mode, cfg.seed).final_answer);
            }
            result.ranking_ablation[to_string(mode)] = std::move(answers);
        }
    }
    return result;
}

std::vector<BatchItem> run_batch(const std::vector<Query>& queries, const KnowledgeBase& kb,
                                 GeneratorBackend& backend, const PipelineConfig& cfg) {
    std::vector<BatchItem> items(queries.size());
    if (queries.empty()) return items;

    const unsigned workers = static_cast<unsigned>(
        std::min<size_t>(std::max(1u, cfg.parallelism), queries.size()));
    PipelineConfig inner = cfg;
    inner.parallelism = std::max(1u, cfg.parallelism / workers);

    parallel_for_indexed(queries.size(), workers, [&](size_t i) {
        items[i].query_id = queries[i].query_id;
        try {
            items[i].result = run_query(queries[i], kb, backend, inner);
        } catch (const std::exception& e) {
            items[i].error = e.what();
        }
    });
    return items;
}

std::vector<Query> load_queries_jsonl(const std::string& path) {
    std::vector<Query> queries;
    for_each_jsonl_line(path, [&](size_t line_no, const json& j) {
        try {
            queries.push_back(Query::from_json(j));
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    });
    return queries;
}

} // namespace rrag
