#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rrag/annotation.hpp"
#include "rrag/generator_backend.hpp"
#include "rrag/jsonl.hpp"

namespace rrag {

// Instruction-tuning record kinds. L1 samples train the no-retrieval branch
// (reflection token plus answer from image and question alone); L2 samples
// train the retrieval branch, one record per paragraph, with answer tokens
// present only for evidence paragraphs.
enum class TrainingKind { L1, L2_relevant, L2_irrelevant };

// Which corpus a record came from: plain visual instruction tuning, or the
// knowledge-grounded instruction-tuning set built by the annotation pipeline.
enum class TrainingSource { visual_it, knowledge_it };

std::string to_string(TrainingKind kind);
TrainingKind training_kind_from_string(const std::string& s);
std::string to_string(TrainingSource source);
TrainingSource training_source_from_string(const std::string& s);

// One scorable piece of a record's target sequence: reflection token(s) plus,
// when present, the answer tokens, under the stated conditioning.
struct TargetSegment {
    std::string segment_id;
    std::vector<ReflectionToken> reflection_tokens;
    std::optional<std::string> answer_text;
    bool conditioned_on_context = false;
    bool include_in_loss = true;
};

struct TrainingRecord {
    std::string record_id;
    TrainingKind kind = TrainingKind::L1;
    TrainingSource source = TrainingSource::visual_it;
    std::string dataset; // finer origin tag: visual, infoseek, enc_vqa, nq
    std::string question;
    std::string image_ref;
    std::optional<std::string> context_paragraph; // present iff kind is L2_*
    std::vector<ReflectionToken> target_reflection_tokens;
    std::optional<std::string> target_answer;
    std::vector<bool> loss_mask; // per segment

    // Derives the segment structure from the kind; the record itself only
    // stores the flat token list and the mask.
    std::vector<TargetSegment> segments() const;
    void validate() const;
    json to_json() const;
    static TrainingRecord from_json(const json& j);
};

// visual_it: one L1 record per sample. knowledge_it: one L2_relevant record
// per Relevant paragraph and one L2_irrelevant per Irrelevant paragraph.
std::vector<TrainingRecord> assemble_records(const std::vector<AnnotationRecord>& annotated,
                                             TrainingSource source);

// Supplies log p(segment targets | conditioning) for loss evaluation; the
// serving side owns tokenization and probability extraction.
class SegmentScorer {
public:
    virtual ~SegmentScorer() = default;
    virtual double segment_logprob(const TrainingRecord& record,
                                   const TargetSegment& segment) = 0;
};

struct RecordLoss {
    std::string record_id;
    TrainingKind kind = TrainingKind::L1;
    double loss = 0.0;
};

struct LossReport {
    double l1 = 0.0; // mean over L1 records
    double l2 = 0.0; // mean over L2 records
    size_t l1_count = 0;
    size_t l2_count = 0;
    std::vector<RecordLoss> per_record;
    std::map<std::string, double> per_dataset_mean;

    json to_json() const;
};

// Negative mean log-likelihood per loss family. Answer tokens of
// L2_irrelevant records are structurally absent from every scored segment, so
// the scorer is never asked for them.
LossReport evaluate_loss(const std::vector<TrainingRecord>& records, SegmentScorer& scorer);

void write_training_records_jsonl(const std::string& path,
                                  const std::vector<TrainingRecord>& records);
std::vector<TrainingRecord> load_training_records_jsonl(const std::string& path);

} // namespace rrag
