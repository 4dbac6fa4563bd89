#include "rrag/annotation.hpp"

#include <algorithm>
#include <random>

#include "httplib.h"

#include "rrag/errors.hpp"
#include "rrag/rng.hpp"
#include "rrag/strings.hpp"

namespace rrag {

std::string to_string(ParagraphLabel label) {
    switch (label) {
        case ParagraphLabel::Relevant: return "Relevant";
        case ParagraphLabel::Irrelevant: return "Irrelevant";
        case ParagraphLabel::Unjudged: return "Unjudged";
    }
    return "Irrelevant";
}

ParagraphLabel paragraph_label_from_string(const std::string& s) {
    if (s == "Relevant") return ParagraphLabel::Relevant;
    if (s == "Irrelevant") return ParagraphLabel::Irrelevant;
    if (s == "Unjudged") return ParagraphLabel::Unjudged;
    throw DataError("unknown paragraph label '" + s + "'");
}

std::string to_string(AnnotationSource source) {
    switch (source) {
        case AnnotationSource::infoseek: return "infoseek";
        case AnnotationSource::enc_vqa: return "enc_vqa";
        case AnnotationSource::nq: return "nq";
    }
    return "infoseek";
}

AnnotationSource annotation_source_from_string(const std::string& s) {
    if (s == "infoseek") return AnnotationSource::infoseek;
    if (s == "enc_vqa" || s == "enc-vqa") return AnnotationSource::enc_vqa;
    if (s == "nq") return AnnotationSource::nq;
    throw DataError("unknown annotation source '" + s + "'");
}

json AnnotationRecord::to_json() const {
    json j;
    j["sample_id"] = sample_id;
    j["question"] = question;
    j["image_ref"] = image_ref;
    j["gold_answers"] = gold_answers;
    j["source"] = rrag::to_string(source);
    json paras = json::array();
    for (const auto& p : paragraphs) {
        json pj;
        pj["text"] = p.text;
        pj["label"] = rrag::to_string(p.label);
        if (p.evidence_sentence) pj["evidence_sentence"] = *p.evidence_sentence;
        paras.push_back(pj);
    }
    j["paragraphs"] = paras;
    if (!flags.empty()) j["flags"] = flags;
    return j;
}

AnnotationRecord AnnotationRecord::from_json(const json& j) {
    AnnotationRecord r;
    if (!j.contains("sample_id") || !j["sample_id"].is_string()) {
        throw DataError("annotation record: missing 'sample_id'");
    }
    r.sample_id = j["sample_id"].get<std::string>();
    if (!j.contains("question") || !j["question"].is_string()) {
        throw DataError("annotation record '" + r.sample_id + "': missing 'question'");
    }
    r.question = j["question"].get<std::string>();
    if (j.contains("image_ref") && j["image_ref"].is_string()) {
        r.image_ref = j["image_ref"].get<std::string>();
    }
    if (j.contains("gold_answers") && j["gold_answers"].is_array()) {
        for (const auto& a : j["gold_answers"]) r.gold_answers.push_back(a.get<std::string>());
    }
    if (j.contains("source") && j["source"].is_string()) {
        r.source = annotation_source_from_string(j["source"].get<std::string>());
    }
    if (!j.contains("paragraphs") || !j["paragraphs"].is_array() || j["paragraphs"].empty()) {
        throw DataError("annotation record '" + r.sample_id + "': needs >= 1 paragraph");
    }
    for (const auto& pj : j["paragraphs"]) {
        AnnotatedParagraph p;
        if (!pj.contains("text") || !pj["text"].is_string()) {
            throw DataError("annotation record '" + r.sample_id + "': paragraph without text");
        }
        p.text = pj["text"].get<std::string>();
        if (pj.contains("label") && pj["label"].is_string()) {
            p.label = paragraph_label_from_string(pj["label"].get<std::string>());
        }
        if (pj.contains("evidence_sentence") && pj["evidence_sentence"].is_string()) {
            p.evidence_sentence = pj["evidence_sentence"].get<std::string>();
        }
        r.paragraphs.push_back(std::move(p));
    }
    if (j.contains("flags") && j["flags"].is_array()) {
        for (const auto& f : j["flags"]) r.flags.push_back(f.get<std::string>());
    }
    return r;
}

JudgeVerdict HeuristicJudge::judge(const std::string& /*question*/,
                                   const std::vector<std::string>& gold_answers,
                                   const std::string& paragraph) {
    for (const auto& answer : gold_answers) {
        if (!contains_answer(paragraph, answer)) continue;
        JudgeVerdict v;
        v.label = ParagraphLabel::Relevant;
        for (const auto& sentence : split_sentences(paragraph)) {
            if (contains_answer(sentence, answer)) {
                v.evidence_sentence = sentence;
                break;
            }
        }
        return v;
    }
    return JudgeVerdict{ParagraphLabel::Irrelevant, std::nullopt};
}

std::string default_judge_prompt() {
    return "Instruction:\n"
           "Given a question and its corresponding answer, I need your help to verify "
           "whether the retrieved document provided below can fully and effectively "
           "support the corresponding answer to the question, and then accurately locate "
           "the source of the answer within the paragraph. If so, please respond with "
           "[Relevant] and find the evidence sentence supporting the answer. If not, "
           "please just respond with [Irrelevant].\n"
           "There are only two formats for your response:\n"
           "1. [Relevant]\n"
           "Answer source: source sentence.\n"
           "2. [Irrelevant]\n"
           "\n"
           "Input:\n"
           "Question: {question}.\n"
           "Answer: {answer}.\n"
           "Retrieved document: {paragraph}.";
}

namespace {

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < items.size(); ++i) {
        if (i > 0) out += sep;
        out += items[i];
    }
    return out;
}

} // namespace

std::string render_judge_prompt(const std::string& prompt_template,
                                const std::string& question,
                                const std::vector<std::string>& gold_answers,
                                const std::string& paragraph) {
    std::string out = replace_all(prompt_template, "{question}", question);
    out = replace_all(out, "{answer}", join(gold_answers, "; "));
    out = replace_all(out, "{paragraph}", paragraph);
    return out;
}

JudgeVerdict parse_judge_response(const std::string& text) {
    const std::string t = trim(text);
    const std::string lowered = to_lower(t);
    if (starts_with(lowered, "[irrelevant]")) {
        return JudgeVerdict{ParagraphLabel::Irrelevant, std::nullopt};
    }
    if (starts_with(lowered, "[relevant]")) {
        JudgeVerdict v;
        v.label = ParagraphLabel::Relevant;
        const std::string rest = trim(t.substr(std::string("[relevant]").size()));
        const std::string marker = "answer source:";
        const std::string rest_lower = to_lower(rest);
        size_t pos = rest_lower.find(marker);
        if (pos != std::string::npos) {
            std::string sentence = trim(rest.substr(pos + marker.size()));
            if (!sentence.empty()) v.evidence_sentence = sentence;
        }
        return v;
    }
    throw DataError("unparseable judge response: '" + t.substr(0, 80) + "'");
}

RemoteJudge::RemoteJudge(std::string base_url, std::string prompt_template,
                         double timeout_seconds)
    : base_url_(std::move(base_url)),
      prompt_template_(std::move(prompt_template)),
      timeout_seconds_(timeout_seconds) {}

JudgeVerdict RemoteJudge::judge(const std::string& question,
                                const std::vector<std::string>& gold_answers,
                                const std::string& paragraph) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(static_cast<time_t>(timeout_seconds_), 0);
    client.set_read_timeout(static_cast<time_t>(timeout_seconds_), 0);

    json body;
    body["prompt"] = render_judge_prompt(prompt_template_, question, gold_answers, paragraph);
    auto res = client.Post("/judge", body.dump(), "application/json");
    if (!res) {
        throw BackendError("judge unreachable at " + base_url_ + ": " +
                           httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw BackendError("judge returned HTTP " + std::to_string(res->status));
    }
    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw BackendError(std::string("judge reply is not JSON: ") + e.what());
    }
    if (!reply.contains("text") || !reply["text"].is_string()) {
        throw BackendError("judge reply has no 'text' field");
    }
    return parse_judge_response(reply["text"].get<std::string>());
}

ScriptedJudge::ScriptedJudge(std::vector<Rule> rules, std::string default_response)
    : rules_(std::move(rules)), default_response_(std::move(default_response)) {}

JudgeVerdict ScriptedJudge::judge(const std::string& question,
                                  const std::vector<std::string>& /*gold_answers*/,
                                  const std::string& paragraph) {
    for (const auto& rule : rules_) {
        if (rule.question == question &&
            paragraph.find(rule.paragraph_contains) != std::string::npos) {
            return parse_judge_response(rule.raw_response);
        }
    }
    return parse_judge_response(default_response_);
}

std::unique_ptr<EvidenceJudge> make_judge(const std::string& spec) {
    if (spec == "heuristic") {
        return std::make_unique<HeuristicJudge>();
    }
    if (starts_with(spec, "remote:")) {
        return std::make_unique<RemoteJudge>(spec.substr(std::string("remote:").size()));
    }
    throw ConfigError("unknown judge spec '" + spec + "' (expected heuristic or remote:<url>)");
}

InfoseekSample InfoseekSample::from_json(const json& j) {
    InfoseekSample s;
    if (!j.contains("sample_id") || !j["sample_id"].is_string()) {
        throw DataError("infoseek sample: missing 'sample_id'");
    }
    s.sample_id = j["sample_id"].get<std::string>();
    if (!j.contains("question") || !j["question"].is_string()) {
        throw DataError("infoseek sample '" + s.sample_id + "': missing 'question'");
    }
    s.question = j["question"].get<std::string>();
    if (j.contains("image_ref") && j["image_ref"].is_string()) {
        s.image_ref = j["image_ref"].get<std::string>();
    }
    if (!j.contains("article") || !j["article"].is_string()) {
        throw DataError("infoseek sample '" + s.sample_id + "': missing 'article'");
    }
    s.article = j["article"].get<std::string>();
    if (!j.contains("answers") || !j["answers"].is_array() || j["answers"].empty()) {
        throw DataError("infoseek sample '" + s.sample_id + "': missing 'answers'");
    }
    for (const auto& a : j["answers"]) s.answers.push_back(a.get<std::string>());
    return s;
}

AnnotationRecord annotate_infoseek(const InfoseekSample& sample, EvidenceJudge& judge,
                                   const SegmentOptions& opts) {
    AnnotationRecord record;
    record.sample_id = sample.sample_id;
    record.question = sample.question;
    record.image_ref = sample.image_ref;
    record.gold_answers = sample.answers;
    record.source = AnnotationSource::infoseek;

    bool judge_failed = false;
    bool any_relevant = false;
    for (const auto& paragraph : segment_article(sample.sample_id, sample.article, opts)) {
        AnnotatedParagraph ap;
        ap.text = paragraph.text;
        try {
            JudgeVerdict v = judge.judge(sample.question, sample.answers, paragraph.text);
            ap.label = v.label;
            ap.evidence_sentence = std::move(v.evidence_sentence);
            any_relevant = any_relevant || ap.label == ParagraphLabel::Relevant;
        } catch (const std::exception&) {
            ap.label = ParagraphLabel::Unjudged;
            judge_failed = true;
        }
        record.paragraphs.push_back(std::move(ap));
    }
    if (judge_failed) record.flags.push_back("judge-failure");
    if (!any_relevant) record.flags.push_back("no-evidence");
    return record;
}

NqSample NqSample::from_json(const json& j) {
    NqSample s;
    if (j.contains("sample_id") && j["sample_id"].is_string()) {
        s.sample_id = j["sample_id"].get<std::string>();
    }
    if (j.contains("question") && j["question"].is_string()) {
        s.question = j["question"].get<std::string>();
    }
    if (j.contains("long_answer") && j["long_answer"].is_string()) {
        s.long_answer = j["long_answer"].get<std::string>();
    }
    if (j.contains("short_answer") && j["short_answer"].is_string()) {
        s.short_answer = j["short_answer"].get<std::string>();
    }
    if (j.contains("distractors") && j["distractors"].is_array()) {
        for (const auto& d : j["distractors"]) s.distractors.push_back(d.get<std::string>());
    }
    return s;
}

NqConversion convert_nq(const NqSample& sample, const NqConvertOptions& opts) {
    NqConversion out;
    if (trim(sample.question).empty()) {
        out.skip_reason = "missing question";
        return out;
    }
    if (trim(sample.long_answer).empty()) {
        out.skip_reason = "missing long answer";
        return out;
    }
    if (trim(sample.short_answer).empty()) {
        out.skip_reason = "missing short answer";
        return out;
    }

    AnnotationRecord record;
    record.sample_id = sample.sample_id;
    record.question = sample.question;
    record.gold_answers = {sample.short_answer};
    record.source = AnnotationSource::nq;

    AnnotatedParagraph evidence;
    evidence.text = sample.long_answer;
    evidence.label = ParagraphLabel::Relevant;
    record.paragraphs.push_back(std::move(evidence));

    std::vector<std::string> distractors;
    for (const auto& d : sample.distractors) {
        if (!trim(d).empty()) distractors.push_back(d);
    }
    if (opts.max_distractors >= 0 &&
        distractors.size() > static_cast<size_t>(opts.max_distractors)) {
        // seeded subsample, original order preserved
        std::mt19937_64 rng(opts.seed);
        std::vector<size_t> indices(distractors.size());
        for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
        for (size_t i = 0; i < static_cast<size_t>(opts.max_distractors); ++i) {
            size_t pick = i + uniform_index(rng, indices.size() - i);
            std::swap(indices[i], indices[pick]);
        }
        indices.resize(static_cast<size_t>(opts.max_distractors));
        std::sort(indices.begin(), indices.end());
        std::vector<std::string> kept;
        for (size_t idx : indices) kept.push_back(distractors[idx]);
        distractors = std::move(kept);
    }
    for (auto& d : distractors) {
        AnnotatedParagraph p;
        p.text = std::move(d);
        p.label = ParagraphLabel::Irrelevant;
        record.paragraphs.push_back(std::move(p));
    }
    out.record = std::move(record);
    return out;
}

AnnotationRecord enc_vqa_record_from_json(const json& j) {
    AnnotationRecord r;
    if (!j.contains("sample_id") || !j["sample_id"].is_string()) {
        throw DataError("enc_vqa sample: missing 'sample_id'");
    }
    r.sample_id = j["sample_id"].get<std::string>();
    if (!j.contains("question") || !j["question"].is_string()) {
        throw DataError("enc_vqa sample '" + r.sample_id + "': missing 'question'");
    }
    r.question = j["question"].get<std::string>();
    if (j.contains("image_ref") && j["image_ref"].is_string()) {
        r.image_ref = j["image_ref"].get<std::string>();
    }
    if (!j.contains("answers") || !j["answers"].is_array() || j["answers"].empty()) {
        throw DataError("enc_vqa sample '" + r.sample_id + "': missing 'answers'");
    }
    for (const auto& a : j["answers"]) r.gold_answers.push_back(a.get<std::string>());
    if (!j.contains("paragraphs") || !j["paragraphs"].is_array() || j["paragraphs"].empty()) {
        throw DataError("enc_vqa sample '" + r.sample_id + "': missing 'paragraphs'");
    }
    for (const auto& pj : j["paragraphs"]) {
        AnnotatedParagraph p;
        if (!pj.contains("text") || !pj["text"].is_string()) {
            throw DataError("enc_vqa sample '" + r.sample_id + "': paragraph without text");
        }
        p.text = pj["text"].get<std::string>();
        if (!pj.contains("is_evidence") || !pj["is_evidence"].is_boolean()) {
            throw DataError("enc_vqa sample '" + r.sample_id + "': paragraph without is_evidence");
        }
        p.label = pj["is_evidence"].get<bool>() ? ParagraphLabel::Relevant
                                                : ParagraphLabel::Irrelevant;
        r.paragraphs.push_back(std::move(p));
    }
    r.source = AnnotationSource::enc_vqa;
    return r;
}

EncVqaFilterResult filter_enc_vqa(const AnnotationRecord& record) {
    EncVqaFilterResult out;
    if (record.source != AnnotationSource::enc_vqa) {
        throw DataError("filter_enc_vqa: record '" + record.sample_id +
                        "' has source " + to_string(record.source));
    }
    for (const auto& answer : record.gold_answers) {
        bool in_relevant = false;
        for (size_t i = 0; i < record.paragraphs.size(); ++i) {
            const auto& p = record.paragraphs[i];
            const bool hit = contains_answer(p.text, answer);
            if (!hit) continue;
            if (p.label == ParagraphLabel::Relevant) {
                in_relevant = true;
            } else {
                out.reason = "answer '" + answer + "' appears in non-evidence paragraph " +
                             std::to_string(i);
                out.violating_paragraph = static_cast<int>(i);
                return out;
            }
        }
        if (!in_relevant) {
            out.reason = "answer '" + answer + "' not found in any evidence paragraph";
            return out;
        }
    }
    out.accepted = true;
    out.record = record;
    return out;
}

} // namespace rrag
