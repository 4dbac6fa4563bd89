#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace rrag {

// One external knowledge entry: a titled article plus precomputed unit-norm
// embeddings of the entry image and of the title text. Embedding computation
// is out of process; records arrive with the vectors already attached.
struct KbEntry {
    std::string entry_id;
    std::string title;
    std::string article;
    std::vector<float> image_embedding;
    std::vector<float> title_embedding;
};

struct Paragraph {
    std::string entry_id;
    int paragraph_index = 0; // 0-based, contiguous within an entry
    std::string text;
};

struct SegmentOptions {
    // Paragraphs shorter than this are merged into the following paragraph
    // (into the preceding one when they are last). 0 disables merging.
    size_t min_paragraph_chars = 20;
};

// Delimiter that separates paragraphs both when splitting articles and when
// rejoining segmented paragraphs.
inline constexpr const char* kParagraphDelimiter = "\n\n";

// Splits an article on blank-line boundaries (runs of two or more newlines),
// trims each piece, and applies the short-paragraph merge rule. Throws
// DataError for an all-whitespace article. Segmenting the rejoined output
// again yields identical paragraphs.
std::vector<Paragraph> segment_article(const std::string& entry_id,
                                       const std::string& article,
                                       const SegmentOptions& opts = {});

std::string join_paragraphs(const std::vector<Paragraph>& paragraphs);

struct IngestOptions {
    // L2-normalize embeddings at ingestion. When off, records must already be
    // unit-norm to within 1e-4.
    bool normalize = false;
    // Load packed float32 vectors from the "<path>.vec" sidecar when present
    // and consistent with the JSONL; the JSONL stays the source of truth.
    bool use_sidecar = true;
};

// Immutable after ingestion; safe to share across concurrent readers.
class KnowledgeBase {
public:
    static KnowledgeBase ingest(const std::string& path, const IngestOptions& opts = {});
    static KnowledgeBase from_entries(std::vector<KbEntry> entries, bool normalize);

    KnowledgeBase(const KnowledgeBase&) = delete;
    KnowledgeBase& operator=(const KnowledgeBase&) = delete;
    KnowledgeBase(KnowledgeBase&& other) noexcept;
    KnowledgeBase& operator=(KnowledgeBase&& other) noexcept;

    size_t size() const { return entries_.size(); }
    size_t dimension() const { return dim_; }
    const std::vector<KbEntry>& entries() const { return entries_; }
    const KbEntry& entry(size_t index) const { return entries_.at(index); }
    const KbEntry* find(const std::string& entry_id) const;

    std::vector<Paragraph> paragraphs_for(const std::string& entry_id,
                                          const SegmentOptions& opts = {}) const;

    void save_jsonl(const std::string& path) const;
    void write_sidecar(const std::string& jsonl_path) const;

    // Full scans performed by retrieval; lets callers assert that the
    // no-retrieval branch never touched the KB.
    uint64_t scan_count() const { return scan_count_.load(); }
    void note_scan() const { scan_count_.fetch_add(1); }

private:
    KnowledgeBase() = default;
    void validate_and_index(bool normalize);

    std::vector<KbEntry> entries_;
    std::unordered_map<std::string, size_t> index_by_id_;
    size_t dim_ = 0;
    mutable std::atomic<uint64_t> scan_count_{0};
};

std::string sidecar_path_for(const std::string& jsonl_path);

} // namespace rrag
