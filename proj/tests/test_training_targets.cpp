#include "doctest.h"

#include <cmath>
#include <map>
#include <random>

#include "rrag/errors.hpp"
#include "rrag/rng.hpp"
#include "rrag/training_targets.hpp"
#include "test_support.hpp"

using namespace rrag;
using rrag::testing::TempDir;

namespace {

AnnotationRecord visual_sample(const std::string& id) {
    AnnotationRecord rec;
    rec.sample_id = id;
    rec.question = "What color is the car?";
    rec.image_ref = "img://" + id;
    rec.gold_answers = {"red"};
    return rec;
}

AnnotationRecord knowledge_sample(const std::string& id, size_t evidence_index,
                                  size_t n_paragraphs) {
    AnnotationRecord rec;
    rec.sample_id = id;
    rec.question = "When was it built?";
    rec.image_ref = "img://" + id;
    rec.gold_answers = {"1936"};
    rec.source = AnnotationSource::infoseek;
    for (size_t i = 0; i < n_paragraphs; ++i) {
        AnnotatedParagraph p;
        p.text = "Paragraph " + std::to_string(i) + " of " + id + ".";
        p.label = i == evidence_index ? ParagraphLabel::Relevant : ParagraphLabel::Irrelevant;
        rec.paragraphs.push_back(std::move(p));
    }
    return rec;
}

// Scorer with per-(record, segment) logprobs and a full call log.
class MockScorer final : public SegmentScorer {
public:
    explicit MockScorer(double default_logprob = -1.0) : default_logprob_(default_logprob) {}

    void set(const std::string& record_id, const std::string& segment_id, double lp) {
        table_[record_id + "#" + segment_id] = lp;
    }

    double segment_logprob(const TrainingRecord& record, const TargetSegment& segment) override {
        calls.push_back({record.record_id, segment.segment_id, record.kind,
                         segment.answer_text.has_value()});
        auto it = table_.find(record.record_id + "#" + segment.segment_id);
        return it == table_.end() ? default_logprob_ : it->second;
    }

    struct Call {
        std::string record_id;
        std::string segment_id;
        TrainingKind kind;
        bool answer_requested;
    };
    std::vector<Call> calls;

private:
    std::map<std::string, double> table_;
    double default_logprob_;
};

} // namespace

TEST_CASE("visual samples become L1 records with [NoRetrieval] + answer targets") {
    auto records = assemble_records({visual_sample("v1")}, TrainingSource::visual_it);
    REQUIRE(records.size() == 1);
    const TrainingRecord& r = records[0];
    CHECK(r.kind == TrainingKind::L1);
    CHECK(r.target_reflection_tokens ==
          std::vector<ReflectionToken>{ReflectionToken::no_retrieval});
    CHECK(r.target_answer == "red");
    CHECK_FALSE(r.context_paragraph.has_value());
    auto segs = r.segments();
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].answer_text == "red");
    CHECK_FALSE(segs[0].conditioned_on_context);
}

TEST_CASE("knowledge samples yield one L2 record per paragraph") {
    auto records = assemble_records({knowledge_sample("k1", 0, 3)},
                                    TrainingSource::knowledge_it);
    REQUIRE(records.size() == 3);
    CHECK(records[0].kind == TrainingKind::L2_relevant);
    CHECK(records[1].kind == TrainingKind::L2_irrelevant);
    CHECK(records[2].kind == TrainingKind::L2_irrelevant);
    CHECK(records[0].target_answer == "1936");
    CHECK_FALSE(records[1].target_answer.has_value());
    for (const auto& r : records) {
        REQUIRE(r.context_paragraph.has_value());
        CHECK(r.target_reflection_tokens[0] == ReflectionToken::retrieval);
        auto segs = r.segments();
        REQUIRE(segs.size() == 2);
        CHECK_FALSE(segs[0].conditioned_on_context);
        CHECK(segs[1].conditioned_on_context);
        if (r.kind == TrainingKind::L2_irrelevant) {
            CHECK_FALSE(segs[1].answer_text.has_value());
        }
    }
}

TEST_CASE("knowledge assembly rejects empty and unjudged paragraph lists") {
    AnnotationRecord empty = visual_sample("k2");
    CHECK_THROWS_WITH_AS(assemble_records({empty}, TrainingSource::knowledge_it),
                         doctest::Contains("paragraph"), DataError);

    AnnotationRecord unjudged = knowledge_sample("k3", 0, 2);
    unjudged.paragraphs[1].label = ParagraphLabel::Unjudged;
    CHECK_THROWS_WITH_AS(assemble_records({unjudged}, TrainingSource::knowledge_it),
                         doctest::Contains("unjudged"), DataError);
}

TEST_CASE("record counts follow the corpus shape") {
    std::mt19937_64 rng(73);
    std::vector<AnnotationRecord> knowledge;
    size_t total_paragraphs = 0;
    for (int i = 0; i < 25; ++i) {
        const size_t n = 1 + uniform_index(rng, 6);
        knowledge.push_back(knowledge_sample("k" + std::to_string(i), uniform_index(rng, n), n));
        total_paragraphs += n;
    }
    auto l2 = assemble_records(knowledge, TrainingSource::knowledge_it);
    CHECK(l2.size() == total_paragraphs);

    std::vector<AnnotationRecord> visual;
    for (int i = 0; i < 10; ++i) visual.push_back(visual_sample("v" + std::to_string(i)));
    auto l1 = assemble_records(visual, TrainingSource::visual_it);
    CHECK(l1.size() == visual.size());
}

TEST_CASE("evaluate_loss: certain predictions have zero loss") {
    auto records = assemble_records({visual_sample("v1"), knowledge_sample("k1", 0, 2)},
                                    TrainingSource::visual_it);
    auto l2 = assemble_records({knowledge_sample("k1", 0, 2)}, TrainingSource::knowledge_it);
    records.insert(records.end(), l2.begin(), l2.end());

    MockScorer scorer(0.0); // log 1 everywhere
    LossReport report = evaluate_loss(records, scorer);
    CHECK(report.l1 == doctest::Approx(0.0));
    CHECK(report.l2 == doctest::Approx(0.0));
}

TEST_CASE("evaluate_loss: a single L1 record at p=e^-2 has loss 2") {
    auto records = assemble_records({visual_sample("v1")}, TrainingSource::visual_it);
    MockScorer scorer;
    scorer.set("v1", "no_retrieval_answer", -2.0);
    LossReport report = evaluate_loss(records, scorer);
    CHECK(report.l1 == doctest::Approx(2.0));
    CHECK(report.l1_count == 1);
    CHECK(report.l2_count == 0);
}

TEST_CASE("evaluate_loss matches a hand-summed oracle on a mixed batch") {
    std::mt19937_64 rng(79);
    std::vector<AnnotationRecord> visual, knowledge;
    for (int i = 0; i < 7; ++i) visual.push_back(visual_sample("v" + std::to_string(i)));
    for (int i = 0; i < 5; ++i) {
        const size_t n = 1 + uniform_index(rng, 4);
        knowledge.push_back(knowledge_sample("k" + std::to_string(i), uniform_index(rng, n), n));
    }
    auto records = assemble_records(visual, TrainingSource::visual_it);
    auto l2 = assemble_records(knowledge, TrainingSource::knowledge_it);
    records.insert(records.end(), l2.begin(), l2.end());

    MockScorer scorer;
    std::map<std::string, double> expected_loss; // record_id -> loss
    for (const auto& r : records) {
        double total = 0.0;
        for (const auto& seg : r.segments()) {
            const double lp = -3.0 * uniform_unit(rng) - 0.01;
            scorer.set(r.record_id, seg.segment_id, lp);
            total += lp;
        }
        expected_loss[r.record_id] = -total;
    }

    LossReport report = evaluate_loss(records, scorer);

    // independent summation
    double l1_sum = 0.0, l2_sum = 0.0;
    size_t l1_n = 0, l2_n = 0;
    for (const auto& r : records) {
        if (r.kind == TrainingKind::L1) {
            l1_sum += expected_loss[r.record_id];
            ++l1_n;
        } else {
            l2_sum += expected_loss[r.record_id];
            ++l2_n;
        }
    }
    CHECK(report.l1 == doctest::Approx(l1_sum / l1_n).epsilon(1e-12));
    CHECK(report.l2 == doctest::Approx(l2_sum / l2_n).epsilon(1e-12));
    for (const auto& rl : report.per_record) {
        CHECK(rl.loss == doctest::Approx(expected_loss[rl.record_id]).epsilon(1e-12));
    }
}

TEST_CASE("no answer logprob is ever requested for L2_irrelevant records") {
    auto records = assemble_records({knowledge_sample("k1", 0, 4)},
                                    TrainingSource::knowledge_it);
    MockScorer scorer;
    evaluate_loss(records, scorer);
    CHECK_FALSE(scorer.calls.empty());
    for (const auto& call : scorer.calls) {
        if (call.kind == TrainingKind::L2_irrelevant) {
            CHECK_FALSE(call.answer_requested);
        }
    }
}

TEST_CASE("masked segments are never scored") {
    auto records = assemble_records({knowledge_sample("k1", 0, 1)},
                                    TrainingSource::knowledge_it);
    REQUIRE(records.size() == 1);
    records[0].loss_mask = {false, true};
    MockScorer scorer;
    evaluate_loss(records, scorer);
    REQUIRE(scorer.calls.size() == 1);
    CHECK(scorer.calls[0].segment_id == "relevance_and_answer");
}

TEST_CASE("losses are non-negative whenever probabilities stay <= 1") {
    std::mt19937_64 rng(83);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<AnnotationRecord> samples;
        for (int i = 0; i < 4; ++i) {
            samples.push_back(knowledge_sample("k" + std::to_string(i), 0,
                                               1 + uniform_index(rng, 3)));
        }
        auto records = assemble_records(samples, TrainingSource::knowledge_it);
        MockScorer scorer(-uniform_unit(rng) * 4.0);
        LossReport report = evaluate_loss(records, scorer);
        CHECK(report.l2 >= 0.0);
        for (const auto& rl : report.per_record) CHECK(rl.loss >= 0.0);
    }
}

TEST_CASE("scorer outputs above 0 are rejected") {
    auto records = assemble_records({visual_sample("v1")}, TrainingSource::visual_it);
    MockScorer scorer(0.5);
    CHECK_THROWS_AS(evaluate_loss(records, scorer), DataError);
}

TEST_CASE("training records survive a JSONL round trip") {
    TempDir dir;
    auto records = assemble_records({knowledge_sample("k1", 1, 3)},
                                    TrainingSource::knowledge_it);
    auto visual = assemble_records({visual_sample("v1")}, TrainingSource::visual_it);
    records.insert(records.end(), visual.begin(), visual.end());

    const std::string path = dir.file("training.jsonl");
    write_training_records_jsonl(path, records);
    auto loaded = load_training_records_jsonl(path);
    REQUIRE(loaded.size() == records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        CHECK(loaded[i].record_id == records[i].record_id);
        CHECK(loaded[i].kind == records[i].kind);
        CHECK(loaded[i].source == records[i].source);
        CHECK(loaded[i].question == records[i].question);
        CHECK(loaded[i].context_paragraph == records[i].context_paragraph);
        CHECK(loaded[i].target_reflection_tokens == records[i].target_reflection_tokens);
        CHECK(loaded[i].target_answer == records[i].target_answer);
        CHECK(loaded[i].loss_mask == records[i].loss_mask);
    }
}

TEST_CASE("record validation rejects malformed target structures") {
    TrainingRecord r;
    r.record_id = "x";
    r.question = "q";
    r.kind = TrainingKind::L2_irrelevant;
    r.context_paragraph = "p";
    r.target_reflection_tokens = {ReflectionToken::retrieval, ReflectionToken::irrelevant};

    SUBCASE("irrelevant with answer tokens") {
        r.target_answer = "leak";
        CHECK_THROWS_AS(r.validate(), DataError);
    }
    SUBCASE("wrong token sequence") {
        r.target_reflection_tokens = {ReflectionToken::irrelevant};
        CHECK_THROWS_AS(r.validate(), DataError);
    }
    SUBCASE("L1 with context") {
        r.kind = TrainingKind::L1;
        r.target_reflection_tokens = {ReflectionToken::no_retrieval};
        r.target_answer = "a";
        CHECK_THROWS_AS(r.validate(), DataError);
    }
    SUBCASE("well-formed validates") {
        CHECK_NOTHROW(r.validate());
    }
}
