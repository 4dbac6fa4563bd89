#pragma once

#include <span>
#include <string>
#include <vector>

#include "rrag/knowledge_base.hpp"

namespace rrag {

// Table-7 ablation axis; combined averages the image-image and image-title
// cosine similarities, the single-modal modes score with one of them alone.
enum class RetrievalMode {
    cross_modal_only,
    uni_modal_only,
    combined,
};

std::string to_string(RetrievalMode mode);
RetrievalMode retrieval_mode_from_string(const std::string& s);
std::vector<RetrievalMode> all_retrieval_modes();

struct RetrievalHit {
    std::string entry_id;
    int rank = 0;                // 1-based
    double score = 0.0;          // mode-selected retrieval score
    double cross_modal_sim = 0.0; // sim(query image, entry image)
    double uni_modal_sim = 0.0;   // sim(query image, entry title)
    size_t kb_index = 0;         // position in the KB entry array, not serialized
};

double cosine_similarity(std::span<const float> a, std::span<const float> b);

RetrievalHit score_entry(std::span<const float> query_image_emb, const KbEntry& entry,
                         RetrievalMode mode);

// Scores the whole KB and returns the best min(n, |KB|) hits ordered by score
// descending, ties broken by entry_id ascending. The scan may be partitioned
// across threads; output is identical to the single-threaded scan.
std::vector<RetrievalHit> top_n(std::span<const float> query_image_emb,
                                const KnowledgeBase& kb, size_t n, RetrievalMode mode,
                                unsigned n_threads = 1);

struct RetrievalRun {
    std::string gold_entry_id;
    std::vector<std::string> ranked_entry_ids; // best first
};

// Fraction of runs whose gold entry appears within the first k hits.
double recall_at_k(const std::vector<RetrievalRun>& runs, size_t k);

} // namespace rrag
