#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rrag/jsonl.hpp"
#include "rrag/knowledge_base.hpp"

namespace rrag {

enum class ParagraphLabel { Relevant, Irrelevant, Unjudged };
enum class AnnotationSource { infoseek, enc_vqa, nq };

std::string to_string(ParagraphLabel label);
ParagraphLabel paragraph_label_from_string(const std::string& s);
std::string to_string(AnnotationSource source);
AnnotationSource annotation_source_from_string(const std::string& s);

struct AnnotatedParagraph {
    std::string text;
    ParagraphLabel label = ParagraphLabel::Irrelevant;
    std::optional<std::string> evidence_sentence;
};

struct AnnotationRecord {
    std::string sample_id;
    std::string question;
    std::string image_ref;
    std::vector<std::string> gold_answers;
    std::vector<AnnotatedParagraph> paragraphs;
    AnnotationSource source = AnnotationSource::infoseek;
    std::vector<std::string> flags; // "no-evidence", "judge-failure"

    bool flagged() const { return !flags.empty(); }
    json to_json() const;
    static AnnotationRecord from_json(const json& j);
};

struct JudgeVerdict {
    ParagraphLabel label = ParagraphLabel::Irrelevant;
    std::optional<std::string> evidence_sentence;
};

// Decides whether one paragraph is evidence for (question, answers).
class EvidenceJudge {
public:
    virtual ~EvidenceJudge() = default;
    virtual JudgeVerdict judge(const std::string& question,
                               const std::vector<std::string>& gold_answers,
                               const std::string& paragraph) = 0;
    virtual std::string name() const = 0;
};

// Relevant iff a gold answer string occurs in the paragraph (case-insensitive,
// whitespace-normalized, thousands separators stripped for numeric answers);
// the evidence sentence is the first sentence containing the match.
class HeuristicJudge final : public EvidenceJudge {
public:
    JudgeVerdict judge(const std::string& question,
                       const std::vector<std::string>& gold_answers,
                       const std::string& paragraph) override;
    std::string name() const override { return "heuristic"; }
};

// Template for the remote judge; {question}/{answer}/{paragraph} are replaced
// with the sample's fields before sending.
std::string default_judge_prompt();

// Fills the prompt template's placeholders.
std::string render_judge_prompt(const std::string& prompt_template,
                                const std::string& question,
                                const std::vector<std::string>& gold_answers,
                                const std::string& paragraph);

// Parses a judge reply of the form "[Relevant]\nAnswer source: ..." or
// "[Irrelevant]". Throws DataError for anything else.
JudgeVerdict parse_judge_response(const std::string& text);

// POSTs the rendered prompt to <base_url>/judge as {"prompt": ...} and parses
// {"text": ...} replies with parse_judge_response.
class RemoteJudge final : public EvidenceJudge {
public:
    explicit RemoteJudge(std::string base_url,
                         std::string prompt_template = default_judge_prompt(),
                         double timeout_seconds = 30.0);
    JudgeVerdict judge(const std::string& question,
                       const std::vector<std::string>& gold_answers,
                       const std::string& paragraph) override;
    std::string name() const override { return "remote"; }

private:
    std::string base_url_;
    std::string prompt_template_;
    double timeout_seconds_;
};

// Test double: maps (question, paragraph-substring) to a canned raw reply
// which goes through the production parser.
class ScriptedJudge final : public EvidenceJudge {
public:
    struct Rule {
        std::string question;
        std::string paragraph_contains;
        std::string raw_response;
    };
    explicit ScriptedJudge(std::vector<Rule> rules, std::string default_response = "[Irrelevant]");
    JudgeVerdict judge(const std::string& question,
                       const std::vector<std::string>& gold_answers,
                       const std::string& paragraph) override;
    std::string name() const override { return "scripted"; }

private:
    std::vector<Rule> rules_;
    std::string default_response_;
};

// "heuristic" or "remote:<url>".
std::unique_ptr<EvidenceJudge> make_judge(const std::string& spec);

struct InfoseekSample {
    std::string sample_id;
    std::string question;
    std::string image_ref;
    std::string article;
    std::vector<std::string> answers;

    static InfoseekSample from_json(const json& j);
};

// Segments the article with the same rule the inference pipeline uses and
// labels every paragraph through the judge. Judge failures mark the paragraph
// Unjudged and flag the record; a record with no Relevant paragraph is
// flagged "no-evidence".
AnnotationRecord annotate_infoseek(const InfoseekSample& sample, EvidenceJudge& judge,
                                   const SegmentOptions& opts = {});

struct NqSample {
    std::string sample_id;
    std::string question;
    std::string long_answer;
    std::string short_answer;
    std::vector<std::string> distractors;

    static NqSample from_json(const json& j);
};

struct NqConvertOptions {
    // cap on Irrelevant distractor paragraphs taken per sample; when more are
    // available a seeded subsample is drawn. -1 keeps all.
    int max_distractors = -1;
    uint64_t seed = 0;
};

struct NqConversion {
    std::optional<AnnotationRecord> record;
    std::optional<std::string> skip_reason;
};

// Long answer becomes the single Relevant paragraph, the short answer the
// gold; samples without either are skipped with a reason.
NqConversion convert_nq(const NqSample& sample, const NqConvertOptions& opts = {});

struct EncVqaFilterResult {
    bool accepted = false;
    std::optional<AnnotationRecord> record;
    std::optional<std::string> reason;
    std::optional<int> violating_paragraph; // index of the offending paragraph
};

// Strict string filter: every gold answer must occur in at least one Relevant
// paragraph and in no Irrelevant paragraph.
EncVqaFilterResult filter_enc_vqa(const AnnotationRecord& record);

// Builds the pre-labeled record from an enc_vqa dataset row
// {sample_id, question, image_ref?, answers, paragraphs:[{text, is_evidence}]}.
AnnotationRecord enc_vqa_record_from_json(const json& j);

} // namespace rrag
