#include "rrag/training_targets.hpp"

#include "rrag/errors.hpp"
#include "rrag/numeric.hpp"
#include "rrag/strings.hpp"

namespace rrag {

std::string to_string(TrainingKind kind) {
    switch (kind) {
        case TrainingKind::L1: return "L1";
        case TrainingKind::L2_relevant: return "L2_relevant";
        case TrainingKind::L2_irrelevant: return "L2_irrelevant";
    }
    return "L1";
}

TrainingKind training_kind_from_string(const std::string& s) {
    if (s == "L1") return TrainingKind::L1;
    if (s == "L2_relevant") return TrainingKind::L2_relevant;
    if (s == "L2_irrelevant") return TrainingKind::L2_irrelevant;
    throw DataError("unknown training kind '" + s + "'");
}

std::string to_string(TrainingSource source) {
    return source == TrainingSource::visual_it ? "visual_it" : "knowledge_it";
}

TrainingSource training_source_from_string(const std::string& s) {
    if (s == "visual_it") return TrainingSource::visual_it;
    if (s == "knowledge_it") return TrainingSource::knowledge_it;
    throw DataError("unknown training source '" + s + "'");
}

std::vector<TargetSegment> TrainingRecord::segments() const {
    std::vector<TargetSegment> out;
    switch (kind) {
        case TrainingKind::L1: {
            TargetSegment s;
            s.segment_id = "no_retrieval_answer";
            s.reflection_tokens = {ReflectionToken::no_retrieval};
            s.answer_text = target_answer;
            s.conditioned_on_context = false;
            s.include_in_loss = loss_mask.empty() ? true : loss_mask[0];
            out.push_back(std::move(s));
            break;
        }
        case TrainingKind::L2_relevant: {
            TargetSegment head;
            head.segment_id = "retrieval_decision";
            head.reflection_tokens = {ReflectionToken::retrieval};
            head.conditioned_on_context = false;
            head.include_in_loss = loss_mask.empty() ? true : loss_mask[0];
            out.push_back(std::move(head));
            TargetSegment body;
            body.segment_id = "relevance_and_answer";
            body.reflection_tokens = {ReflectionToken::relevant};
            body.answer_text = target_answer;
            body.conditioned_on_context = true;
            body.include_in_loss = loss_mask.size() > 1 ? loss_mask[1] : true;
            out.push_back(std::move(body));
            break;
        }
        case TrainingKind::L2_irrelevant: {
            TargetSegment head;
            head.segment_id = "retrieval_decision";
            head.reflection_tokens = {ReflectionToken::retrieval};
            head.conditioned_on_context = false;
            head.include_in_loss = loss_mask.empty() ? true : loss_mask[0];
            out.push_back(std::move(head));
            TargetSegment body;
            body.segment_id = "relevance_judgment";
            body.reflection_tokens = {ReflectionToken::irrelevant};
            // no answer tokens for non-evidence paragraphs
            body.conditioned_on_context = true;
            body.include_in_loss = loss_mask.size() > 1 ? loss_mask[1] : true;
            out.push_back(std::move(body));
            break;
        }
    }
    return out;
}

void TrainingRecord::validate() const {
    if (trim(record_id).empty()) throw DataError("training record: empty record_id");
    if (trim(question).empty()) {
        throw DataError("training record '" + record_id + "': empty question");
    }
    const size_t expect_segments = kind == TrainingKind::L1 ? 1 : 2;
    if (!loss_mask.empty() && loss_mask.size() != expect_segments) {
        throw DataError("training record '" + record_id + "': loss_mask length " +
                        std::to_string(loss_mask.size()) + ", expected " +
                        std::to_string(expect_segments));
    }
    switch (kind) {
        case TrainingKind::L1:
            if (context_paragraph) {
                throw DataError("training record '" + record_id + "': L1 must not carry context");
            }
            if (!target_answer) {
                throw DataError("training record '" + record_id + "': L1 needs a target answer");
            }
            if (target_reflection_tokens != std::vector<ReflectionToken>{ReflectionToken::no_retrieval}) {
                throw DataError("training record '" + record_id +
                                "': L1 targets must be [NoRetrieval]");
            }
            break;
        case TrainingKind::L2_relevant:
            if (!context_paragraph) {
                throw DataError("training record '" + record_id + "': L2 needs a context paragraph");
            }
            if (!target_answer) {
                throw DataError("training record '" + record_id +
                                "': L2_relevant needs a target answer");
            }
            if (target_reflection_tokens !=
                std::vector<ReflectionToken>{ReflectionToken::retrieval, ReflectionToken::relevant}) {
                throw DataError("training record '" + record_id +
                                "': L2_relevant targets must be [Retrieval, Relevant]");
            }
            break;
        case TrainingKind::L2_irrelevant:
            if (!context_paragraph) {
                throw DataError("training record '" + record_id + "': L2 needs a context paragraph");
            }
            if (target_answer) {
                throw DataError("training record '" + record_id +
                                "': L2_irrelevant must not carry answer tokens");
            }
            if (target_reflection_tokens !=
                std::vector<ReflectionToken>{ReflectionToken::retrieval, ReflectionToken::irrelevant}) {
                throw DataError("training record '" + record_id +
                                "': L2_irrelevant targets must be [Retrieval, Irrelevant]");
            }
            break;
    }
}

json TrainingRecord::to_json() const {
    json j;
    j["record_id"] = record_id;
    j["kind"] = rrag::to_string(kind);
    j["source"] = rrag::to_string(source);
    if (!dataset.empty()) j["dataset"] = dataset;
    j["question"] = question;
    j["image_ref"] = image_ref;
    if (context_paragraph) j["context_paragraph"] = *context_paragraph;
    json toks = json::array();
    for (ReflectionToken t : target_reflection_tokens) toks.push_back(rrag::to_string(t));
    j["target_reflection_tokens"] = toks;
    if (target_answer) j["target_answer"] = *target_answer;
    j["loss_mask"] = loss_mask;
    return j;
}

TrainingRecord TrainingRecord::from_json(const json& j) {
    TrainingRecord r;
    r.record_id = j.value("record_id", "");
    r.kind = training_kind_from_string(j.value("kind", ""));
    if (j.contains("source")) r.source = training_source_from_string(j["source"].get<std::string>());
    r.dataset = j.value("dataset", "");
    r.question = j.value("question", "");
    r.image_ref = j.value("image_ref", "");
    if (j.contains("context_paragraph") && !j["context_paragraph"].is_null()) {
        r.context_paragraph = j["context_paragraph"].get<std::string>();
    }
    if (j.contains("target_reflection_tokens")) {
        for (const auto& t : j["target_reflection_tokens"]) {
            r.target_reflection_tokens.push_back(
                reflection_token_from_string(t.get<std::string>()));
        }
    }
    if (j.contains("target_answer") && !j["target_answer"].is_null()) {
        r.target_answer = j["target_answer"].get<std::string>();
    }
    if (j.contains("loss_mask")) {
        for (const auto& m : j["loss_mask"]) r.loss_mask.push_back(m.get<bool>());
    }
    r.validate();
    return r;
}

std::vector<TrainingRecord> assemble_records(const std::vector<AnnotationRecord>& annotated,
                                             TrainingSource source) {
    std::vector<TrainingRecord> out;
    for (const auto& rec : annotated) {
        if (rec.gold_answers.empty()) {
            throw DataError("annotation record '" + rec.sample_id + "': no gold answers");
        }
        const std::string& answer = rec.gold_answers.front();

        if (source == TrainingSource::visual_it) {
            TrainingRecord r;
            r.record_id = rec.sample_id;
            r.kind = TrainingKind::L1;
            r.source = TrainingSource::visual_it;
            r.dataset = "visual";
            r.question = rec.question;
            r.image_ref = rec.image_ref;
            r.target_reflection_tokens = {ReflectionToken::no_retrieval};
            r.target_answer = answer;
            r.loss_mask = {true};
            r.validate();
            out.push_back(std::move(r));
            continue;
        }

        if (rec.paragraphs.empty()) {
            throw DataError("annotation record '" + rec.sample_id +
                            "': knowledge_it assembly needs >= 1 paragraph");
        }
        for (size_t i = 0; i < rec.paragraphs.size(); ++i) {
            const auto& p = rec.paragraphs[i];
            if (p.label == ParagraphLabel::Unjudged) {
                throw DataError("annotation record '" + rec.sample_id + "': paragraph " +
                                std::to_string(i) + " is unjudged; exclude flagged records");
            }
            TrainingRecord r;
            r.record_id = rec.sample_id + "/p" + std::to_string(i);
            r.source = TrainingSource::knowledge_it;
            r.dataset = to_string(rec.source);
            r.question = rec.question;
            r.image_ref = rec.image_ref;
            r.context_paragraph = p.text;
            if (p.label == ParagraphLabel::Relevant) {
                r.kind = TrainingKind::L2_relevant;
                r.target_reflection_tokens = {ReflectionToken::retrieval,
                                              ReflectionToken::relevant};
                r.target_answer = answer;
            } else {
                r.kind = TrainingKind::L2_irrelevant;
                r.target_reflection_tokens = {ReflectionToken::retrieval,
                                              ReflectionToken::irrelevant};
            }
            r.loss_mask = {true, true};
            r.validate();
            out.push_back(std::move(r));
        }
    }
    return out;
}

LossReport evaluate_loss(const std::vector<TrainingRecord>& records, SegmentScorer& scorer) {
    LossReport report;
    KahanSum l1_sum;
    KahanSum l2_sum;
    std::map<std::string, KahanSum> per_dataset;

    for (const auto& rec : records) {
        rec.validate();
        KahanSum logprob;
        for (const auto& seg : rec.segments()) {
            if (!seg.include_in_loss) continue;
            double lp = scorer.segment_logprob(rec, seg);
            if (!std::isfinite(lp) || lp > 0.0) {
                throw DataError("segment logprob for record '" + rec.record_id +
                                "' segment '" + seg.segment_id +
                                "' must be finite and <= 0");
            }
            logprob.add(lp);
        }
        const double loss = -logprob.sum();
        report.per_record.push_back(RecordLoss{rec.record_id, rec.kind, loss});
        if (rec.kind == TrainingKind::L1) {
            l1_sum.add(loss);
        } else {
            l2_sum.add(loss);
        }
        per_dataset[rec.dataset.empty() ? to_string(rec.source) : rec.dataset].add(loss);
    }

    report.l1_count = l1_sum.count();
    report.l2_count = l2_sum.count();
    report.l1 = l1_sum.mean();
    report.l2 = l2_sum.mean();
    for (auto& [name, sum] : per_dataset) {
        report.per_dataset_mean[name] = sum.mean();
    }
    return report;
}

json LossReport::to_json() const {
    json j;
    j["l1"] = l1;
    j["l2"] = l2;
    j["l1_count"] = l1_count;
    j["l2_count"] = l2_count;
    j["per_dataset_mean"] = per_dataset_mean;
    json rows = json::array();
    for (const auto& r : per_record) {
        json row;
        row["record_id"] = r.record_id;
        row["kind"] = rrag::to_string(r.kind);
        row["loss"] = r.loss;
        rows.push_back(row);
    }
    j["per_record"] = rows;
    return j;
}

void write_training_records_jsonl(const std::string& path,
                                  const std::vector<TrainingRecord>& records) {
    std::vector<json> rows;
    rows.reserve(records.size());
    for (const auto& r : records) rows.push_back(r.to_json());
    write_jsonl(path, rows);
}

std::vector<TrainingRecord> load_training_records_jsonl(const std::string& path) {
    std::vector<TrainingRecord> out;
    for_each_jsonl_line(path, [&](size_t line_no, const json& j) {
        try {
            out.push_back(TrainingRecord::from_json(j));
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    });
    return out;
}

} // namespace rrag
