#include "doctest.h"

#include <algorithm>
#include <random>

#include "rrag/errors.hpp"
#include "rrag/retrieval.hpp"
#include "test_support.hpp"

using namespace rrag;

namespace {

// Independent oracle: long-double cosine math plus a stable full sort. Kept
// deliberately separate from the implementation path it checks.
struct OracleHit {
    std::string entry_id;
    double score;
};

double oracle_cosine(const std::vector<float>& a, const std::vector<float>& b) {
    long double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<long double>(a[i]) * b[i];
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    return static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

std::vector<OracleHit> oracle_top_n(const std::vector<float>& query, const KnowledgeBase& kb,
                                    size_t n, RetrievalMode mode) {
    std::vector<OracleHit> all;
    for (const auto& e : kb.entries()) {
        const double ci = oracle_cosine(query, e.image_embedding);
        const double ui = oracle_cosine(query, e.title_embedding);
        double s = 0;
        switch (mode) {
            case RetrievalMode::combined: s = (ci + ui) / 2.0; break;
            case RetrievalMode::cross_modal_only: s = ci; break;
            case RetrievalMode::uni_modal_only: s = ui; break;
        }
        all.push_back({e.entry_id, s});
    }
    std::stable_sort(all.begin(), all.end(), [](const OracleHit& a, const OracleHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.entry_id < b.entry_id;
    });
    if (all.size() > n) all.resize(n);
    return all;
}

} // namespace

TEST_CASE("cosine similarity basics") {
    std::vector<float> ex = {1, 0};
    std::vector<float> ey = {0, 1};
    std::vector<float> diag = {1, 1};
    CHECK(cosine_similarity(ex, ex) == doctest::Approx(1.0));
    CHECK(cosine_similarity(ex, ey) == doctest::Approx(0.0));
    CHECK(cosine_similarity(diag, ex) == doctest::Approx(0.7071).epsilon(1e-4));
}

TEST_CASE("cosine similarity rejects zero vectors and dimension mismatches") {
    std::vector<float> ok = {1, 0};
    std::vector<float> zero = {0, 0};
    std::vector<float> three = {1, 0, 0};
    CHECK_THROWS_AS(cosine_similarity(ok, zero), DataError);
    CHECK_THROWS_AS(cosine_similarity(ok, three), DataError);
}

TEST_CASE("score_entry selects the mode's component") {
    // engineered so sim(query, image)=0.8 and sim(query, title)=0.6
    KbEntry e;
    e.entry_id = "e";
    e.title = "t";
    e.article = "A sufficiently long article body.";
    e.image_embedding = {0.8f, 0.6f, 0.f};
    e.title_embedding = {0.6f, 0.8f, 0.f};
    std::vector<float> query = {1, 0, 0};

    auto combined = score_entry(query, e, RetrievalMode::combined);
    CHECK(combined.cross_modal_sim == doctest::Approx(0.8));
    CHECK(combined.uni_modal_sim == doctest::Approx(0.6));
    CHECK(combined.score == doctest::Approx(0.7));
    CHECK(combined.score == (combined.cross_modal_sim + combined.uni_modal_sim) / 2.0);

    auto cross = score_entry(query, e, RetrievalMode::cross_modal_only);
    CHECK(cross.score == doctest::Approx(0.8));
    CHECK(cross.uni_modal_sim == doctest::Approx(0.6)); // reported but unused

    auto uni = score_entry(query, e, RetrievalMode::uni_modal_only);
    CHECK(uni.score == doctest::Approx(0.6));
}

TEST_CASE("equal component sims give the same score in every mode") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        KbEntry e;
        e.entry_id = "e";
        e.title = "t";
        e.article = "A sufficiently long article body.";
        e.image_embedding = testing::random_unit_vector(rng, 6);
        e.title_embedding = e.image_embedding;
        auto query = testing::random_unit_vector(rng, 6);
        auto a = score_entry(query, e, RetrievalMode::combined);
        auto b = score_entry(query, e, RetrievalMode::cross_modal_only);
        auto c = score_entry(query, e, RetrievalMode::uni_modal_only);
        CHECK(a.score == doctest::Approx(b.score));
        CHECK(b.score == doctest::Approx(c.score));
    }
}

TEST_CASE("top_n orders a forced example correctly") {
    // scores: e1=0.9, e2=0.7, e3=0.8 against query [1,0]
    auto mk = [](const std::string& id, double s) {
        KbEntry e;
        e.entry_id = id;
        e.title = "t";
        e.article = "A sufficiently long article body.";
        float x = static_cast<float>(s);
        float y = static_cast<float>(std::sqrt(1.0 - s * s));
        e.image_embedding = {x, y};
        e.title_embedding = {x, y};
        return e;
    };
    KnowledgeBase kb = KnowledgeBase::from_entries(
        {mk("e1", 0.9), mk("e2", 0.7), mk("e3", 0.8)}, false);
    std::vector<float> query = {1, 0};

    auto hits = top_n(query, kb, 2, RetrievalMode::combined);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].entry_id == "e1");
    CHECK(hits[1].entry_id == "e3");
    CHECK(hits[0].rank == 1);
    CHECK(hits[1].rank == 2);

    auto all = top_n(query, kb, 10, RetrievalMode::combined);
    REQUIRE(all.size() == 3);
    CHECK(all[2].entry_id == "e2");
}

TEST_CASE("top_n breaks exact ties by entry_id ascending") {
    std::mt19937_64 rng(5);
    auto shared = testing::random_unit_vector(rng, 4);
    std::vector<KbEntry> entries;
    for (const char* id : {"zeta", "alpha", "mid"}) {
        KbEntry e;
        e.entry_id = id;
        e.title = "t";
        e.article = "A sufficiently long article body.";
        e.image_embedding = shared;
        e.title_embedding = shared;
        entries.push_back(e);
    }
    KnowledgeBase kb = KnowledgeBase::from_entries(entries, false);
    auto hits = top_n(testing::random_unit_vector(rng, 4), kb, 3, RetrievalMode::combined);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].entry_id == "alpha");
    CHECK(hits[1].entry_id == "mid");
    CHECK(hits[2].entry_id == "zeta");
}

TEST_CASE("top_n rejects empty KBs and n < 1") {
    std::mt19937_64 rng(7);
    KnowledgeBase kb = testing::random_kb(rng, 3, 4);
    std::vector<float> q = testing::random_unit_vector(rng, 4);
    CHECK_THROWS_AS(top_n(q, kb, 0, RetrievalMode::combined), ConfigError);
    KnowledgeBase empty = KnowledgeBase::from_entries({}, false);
    CHECK_THROWS_AS(top_n(q, empty, 1, RetrievalMode::combined), DataError);
}

TEST_CASE("top_n equals the brute-force oracle on random instances") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const size_t n_entries = 5 + uniform_index(rng, 120);
        const size_t dim = 2 + uniform_index(rng, 15);
        KnowledgeBase kb = testing::random_kb(rng, n_entries, dim, 1);
        auto query = testing::random_unit_vector(rng, dim);
        for (RetrievalMode mode : all_retrieval_modes()) {
            auto hits = top_n(query, kb, n_entries, mode);
            auto oracle = oracle_top_n(query, kb, n_entries, mode);
            REQUIRE(hits.size() == oracle.size());
            for (size_t i = 0; i < hits.size(); ++i) {
                CHECK(hits[i].entry_id == oracle[i].entry_id);
                CHECK(hits[i].score == doctest::Approx(oracle[i].score).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("mode dominance: combined lies between the component sims") {
    std::mt19937_64 rng(13);
    KnowledgeBase kb = testing::random_kb(rng, 30, 8, 1);
    for (int trial = 0; trial < 30; ++trial) {
        auto query = testing::random_unit_vector(rng, 8);
        for (const auto& e : kb.entries()) {
            auto hit = score_entry(query, e, RetrievalMode::combined);
            CHECK(hit.score >= std::min(hit.cross_modal_sim, hit.uni_modal_sim) - 1e-12);
            CHECK(hit.score <= std::max(hit.cross_modal_sim, hit.uni_modal_sim) + 1e-12);
            CHECK(hit.cross_modal_sim >= -1.0 - 1e-6);
            CHECK(hit.cross_modal_sim <= 1.0 + 1e-6);
        }
    }
}

TEST_CASE("scaling the query embedding never changes the ranking") {
    std::mt19937_64 rng(17);
    KnowledgeBase kb = testing::random_kb(rng, 60, 6, 1);
    for (int trial = 0; trial < 25; ++trial) {
        auto query = testing::random_unit_vector(rng, 6);
        const double c = 0.05 + uniform_unit(rng) * 20.0;
        std::vector<float> scaled = query;
        for (auto& x : scaled) x = static_cast<float>(x * c);
        auto base = top_n(query, kb, 10, RetrievalMode::combined);
        auto other = top_n(scaled, kb, 10, RetrievalMode::combined);
        REQUIRE(base.size() == other.size());
        for (size_t i = 0; i < base.size(); ++i) {
            CHECK(base[i].entry_id == other[i].entry_id);
        }
    }
}

TEST_CASE("partitioned scans match the single-threaded scan exactly") {
    std::mt19937_64 rng(19);
    KnowledgeBase kb = testing::random_kb(rng, 200, 12, 1);
    auto query = testing::random_unit_vector(rng, 12);
    auto serial = top_n(query, kb, 50, RetrievalMode::combined, 1);
    auto parallel = top_n(query, kb, 50, RetrievalMode::combined, 8);
    REQUIRE(serial.size() == parallel.size());
    for (size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].entry_id == parallel[i].entry_id);
        CHECK(serial[i].score == parallel[i].score); // bitwise
    }
}

TEST_CASE("recall_at_k counts gold entries within the cutoff") {
    std::vector<RetrievalRun> runs = {
        {"gold", {"gold", "other"}},
        {"gold", {"other", "gold"}},
    };
    CHECK(recall_at_k(runs, 1) == doctest::Approx(0.5));
    CHECK(recall_at_k(runs, 2) == doctest::Approx(1.0));

    std::vector<RetrievalRun> missing = {
        {"gold", {"a", "b"}},
        {"gold", {"c"}},
    };
    CHECK(recall_at_k(missing, 1) == doctest::Approx(0.0));
    CHECK(recall_at_k(missing, 5) == doctest::Approx(0.0));

    std::vector<RetrievalRun> saturated = {
        {"x", {"a", "x"}},
        {"y", {"y", "b"}},
    };
    CHECK(recall_at_k(saturated, 2) == doctest::Approx(1.0));
}

TEST_CASE("recall_at_k rejects k < 1 and empty runs") {
    std::vector<RetrievalRun> runs = {{"g", {"g"}}};
    CHECK_THROWS_AS(recall_at_k(runs, 0), ConfigError);
    CHECK_THROWS_AS(recall_at_k({}, 1), DataError);
    std::vector<RetrievalRun> empty_hits = {{"g", {}}};
    CHECK_THROWS_AS(recall_at_k(empty_hits, 1), DataError);
}

TEST_CASE("recall_at_k is non-decreasing in k") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<RetrievalRun> runs;
        const size_t n_runs = 1 + uniform_index(rng, 20);
        for (size_t r = 0; r < n_runs; ++r) {
            RetrievalRun run;
            run.gold_entry_id = "g" + std::to_string(uniform_index(rng, 12));
            const size_t n_hits = 1 + uniform_index(rng, 10);
            for (size_t h = 0; h < n_hits; ++h) {
                run.ranked_entry_ids.push_back("g" + std::to_string(uniform_index(rng, 12)));
            }
            runs.push_back(std::move(run));
        }
        double prev = 0.0;
        for (size_t k = 1; k <= 12; ++k) {
            double r = recall_at_k(runs, k);
            CHECK(r >= prev - 1e-12);
            prev = r;
        }
    }
}
