#include "rrag/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "rrag/errors.hpp"
#include "rrag/parallel.hpp"

namespace rrag {

std::string to_string(RetrievalMode mode) {
    switch (mode) {
        case RetrievalMode::cross_modal_only: return "cross_modal_only";
        case RetrievalMode::uni_modal_only: return "uni_modal_only";
        case RetrievalMode::combined: return "combined";
    }
    return "combined";
}

RetrievalMode retrieval_mode_from_string(const std::string& s) {
    if (s == "cross_modal_only") return RetrievalMode::cross_modal_only;
    if (s == "uni_modal_only") return RetrievalMode::uni_modal_only;
    if (s == "combined") return RetrievalMode::combined;
    throw ConfigError("unknown retrieval mode '" + s +
                      "' (expected cross_modal_only, uni_modal_only, or combined)");
}

std::vector<RetrievalMode> all_retrieval_modes() {
    return {RetrievalMode::cross_modal_only, RetrievalMode::uni_modal_only,
            RetrievalMode::combined};
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw DataError("cosine_similarity: dimension mismatch (" +
                        std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    }
    if (a.empty()) {
        throw DataError("cosine_similarity: empty vectors");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        const double y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) {
        throw DataError("cosine_similarity: zero vector");
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

RetrievalHit score_entry(std::span<const float> query_image_emb, const KbEntry& entry,
                         RetrievalMode mode) {
    RetrievalHit hit;
    hit.entry_id = entry.entry_id;
    hit.cross_modal_sim = cosine_similarity(query_image_emb, entry.image_embedding);
    hit.uni_modal_sim = cosine_similarity(query_image_emb, entry.title_embedding);
    switch (mode) {
        case RetrievalMode::combined:
            hit.score = (hit.cross_modal_sim + hit.uni_modal_sim) / 2.0;
            break;
        case RetrievalMode::cross_modal_only:
            hit.score = hit.cross_modal_sim;
            break;
        case RetrievalMode::uni_modal_only:
            hit.score = hit.uni_modal_sim;
            break;
    }
    return hit;
}

std::vector<RetrievalHit> top_n(std::span<const float> query_image_emb,
                                const KnowledgeBase& kb, size_t n, RetrievalMode mode,
                                unsigned n_threads) {
    if (n < 1) {
        throw ConfigError("top_n: n must be >= 1");
    }
    if (kb.size() == 0) {
        throw DataError("top_n: knowledge base is empty");
    }
    kb.note_scan();

    std::vector<RetrievalHit> hits(kb.size());
    parallel_for_indexed(kb.size(), n_threads, [&](size_t i) {
        hits[i] = score_entry(query_image_emb, kb.entry(i), mode);
        hits[i].kb_index = i;
    });

    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.entry_id < b.entry_id;
    });
    if (hits.size() > n) hits.resize(n);
    for (size_t i = 0; i < hits.size(); ++i) {
        hits[i].rank = static_cast<int>(i + 1);
    }
    return hits;
}

double recall_at_k(const std::vector<RetrievalRun>& runs, size_t k) {
    if (k < 1) {
        throw ConfigError("recall_at_k: k must be >= 1");
    }
    if (runs.empty()) {
        throw DataError("recall_at_k: no runs");
    }
    size_t found = 0;
    for (const auto& run : runs) {
        if (run.ranked_entry_ids.empty()) {
            throw DataError("recall_at_k: run for gold '" + run.gold_entry_id +
                            "' has no hits");
        }
        const size_t limit = std::min(k, run.ranked_entry_ids.size());
        for (size_t i = 0; i < limit; ++i) {
            if (run.ranked_entry_ids[i] == run.gold_entry_id) {
                ++found;
                break;
            }
        }
    }
    return static_cast<double>(found) / static_cast<double>(runs.size());
}

} // namespace rrag
