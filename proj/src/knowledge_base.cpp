#include "rrag/knowledge_base.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rrag/errors.hpp"
#include "rrag/jsonl.hpp"
#include "rrag/strings.hpp"

namespace fs = std::filesystem;

namespace rrag {

namespace {

constexpr char kSidecarMagic[8] = {'R', 'R', 'A', 'G', 'V', 'E', 'C', '1'};
constexpr double kNormTolerance = 1e-4;

std::string normalize_newlines(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\r') {
            if (i + 1 < s.size() && s[i + 1] == '\n') continue;
            out.push_back('\n');
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

double l2_norm(const std::vector<float>& v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(s);
}

void check_finite(const std::vector<float>& v, const std::string& where) {
    for (float x : v) {
        if (!std::isfinite(x)) {
            throw DataError(where + ": non-finite embedding component");
        }
    }
}

void normalize_vector(std::vector<float>& v, const std::string& where) {
    double norm = l2_norm(v);
    if (norm == 0.0) {
        throw DataError(where + ": zero-norm embedding cannot be normalized");
    }
    for (float& x : v) x = static_cast<float>(static_cast<double>(x) / norm);
}

std::vector<float> parse_embedding(const json& j, const char* field,
                                   const std::string& where) {
    if (!j.contains(field) || !j[field].is_array()) {
        throw DataError(where + ": missing or non-array field '" + field + "'");
    }
    std::vector<float> out;
    out.reserve(j[field].size());
    for (const auto& x : j[field]) {
        if (!x.is_number()) {
            throw DataError(where + ": non-numeric value in '" + field + "'");
        }
        out.push_back(static_cast<float>(x.get<double>()));
    }
    if (out.empty()) {
        throw DataError(where + ": empty embedding '" + field + "'");
    }
    return out;
}

std::string require_string(const json& j, const char* field, const std::string& where) {
    if (!j.contains(field) || !j[field].is_string()) {
        throw DataError(where + ": missing or non-string field '" + field + "'");
    }
    std::string v = j[field].get<std::string>();
    if (trim(v).empty()) {
        throw DataError(where + ": field '" + field + "' is empty");
    }
    return v;
}

// Sidecar layout: 8-byte magic, u32 dim, u64 count, then count * 2 * dim
// little-endian float32 (image vector first, then title vector).
struct SidecarData {
    size_t dim = 0;
    std::vector<float> packed; // 2 * dim floats per entry
};

bool try_load_sidecar(const std::string& path, size_t expected_entries, SidecarData& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    char magic[8];
    uint32_t dim = 0;
    uint64_t count = 0;
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kSidecarMagic, 8) != 0) {
        return false;
    }
    if (!in.read(reinterpret_cast<char*>(&dim), sizeof(dim))) return false;
    if (!in.read(reinterpret_cast<char*>(&count), sizeof(count))) return false;
    if (count != expected_entries || dim == 0) return false;
    const size_t floats = static_cast<size_t>(count) * 2 * dim;
    out.dim = dim;
    out.packed.resize(floats);
    if (!in.read(reinterpret_cast<char*>(out.packed.data()),
                 static_cast<std::streamsize>(floats * sizeof(float)))) {
        return false;
    }
    // trailing bytes mean a stale or corrupt cache
    char extra;
    if (in.read(&extra, 1)) return false;
    return true;
}

size_t count_jsonl_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open file: " + path);
    }
    size_t n = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) ++n;
    }
    return n;
}

} // namespace

std::vector<Paragraph> segment_article(const std::string& entry_id,
                                       const std::string& article,
                                       const SegmentOptions& opts) {
    const std::string text = normalize_newlines(article);
    if (trim(text).empty()) {
        throw DataError("article for entry '" + entry_id + "' is empty");
    }

    // split on runs of two or more newlines
    std::vector<std::string> pieces;
    std::string cur;
    size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '\n') {
            size_t j = i;
            while (j < text.size() && text[j] == '\n') ++j;
            if (j - i >= 2) {
                pieces.push_back(cur);
                cur.clear();
            } else {
                cur.push_back('\n');
            }
            i = j;
        } else {
            cur.push_back(text[i]);
            ++i;
        }
    }
    pieces.push_back(cur);

    std::vector<std::string> trimmed;
    for (auto& p : pieces) {
        std::string t = trim(p);
        if (!t.empty()) trimmed.push_back(std::move(t));
    }

    // Short pieces accumulate onto the following paragraph; a short tail goes
    // onto the preceding one. Joining with the delimiter keeps re-segmentation
    // idempotent.
    std::vector<std::string> merged;
    std::string pending;
    for (auto& p : trimmed) {
        std::string candidate = pending.empty() ? std::move(p)
                                                : pending + kParagraphDelimiter + p;
        if (candidate.size() < opts.min_paragraph_chars) {
            pending = std::move(candidate);
            continue;
        }
        merged.push_back(std::move(candidate));
        pending.clear();
    }
    if (!pending.empty()) {
        if (merged.empty()) {
            merged.push_back(std::move(pending));
        } else {
            merged.back() += kParagraphDelimiter + pending;
        }
    }

    std::vector<Paragraph> out;
    out.reserve(merged.size());
    for (size_t idx = 0; idx < merged.size(); ++idx) {
        out.push_back(Paragraph{entry_id, static_cast<int>(idx), std::move(merged[idx])});
    }
    return out;
}

std::string join_paragraphs(const std::vector<Paragraph>& paragraphs) {
    std::string out;
    for (size_t i = 0; i < paragraphs.size(); ++i) {
        if (i > 0) out += kParagraphDelimiter;
        out += paragraphs[i].text;
    }
    return out;
}

KnowledgeBase::KnowledgeBase(KnowledgeBase&& other) noexcept
    : entries_(std::move(other.entries_)),
      index_by_id_(std::move(other.index_by_id_)),
      dim_(other.dim_),
      scan_count_(other.scan_count_.load()) {}

KnowledgeBase& KnowledgeBase::operator=(KnowledgeBase&& other) noexcept {
    if (this != &other) {
        entries_ = std::move(other.entries_);
        index_by_id_ = std::move(other.index_by_id_);
        dim_ = other.dim_;
        scan_count_.store(other.scan_count_.load());
    }
    return *this;
}

void KnowledgeBase::validate_and_index(bool normalize) {
    index_by_id_.clear();
    dim_ = 0;
    for (size_t i = 0; i < entries_.size(); ++i) {
        KbEntry& e = entries_[i];
        const std::string where = "entry '" + e.entry_id + "'";
        if (trim(e.entry_id).empty()) throw DataError("entry " + std::to_string(i) + ": empty entry_id");
        if (trim(e.title).empty()) throw DataError(where + ": empty title");
        if (trim(e.article).empty()) throw DataError(where + ": empty article");
        if (e.image_embedding.size() != e.title_embedding.size()) {
            throw DataError(where + ": image/title embedding dimensions differ (" +
                            std::to_string(e.image_embedding.size()) + " vs " +
                            std::to_string(e.title_embedding.size()) + ")");
        }
        if (dim_ == 0) {
            dim_ = e.image_embedding.size();
        } else if (e.image_embedding.size() != dim_) {
            throw DataError(where + ": embedding dimension " +
                            std::to_string(e.image_embedding.size()) +
                            " does not match KB dimension " + std::to_string(dim_));
        }
        check_finite(e.image_embedding, where + " image_embedding");
        check_finite(e.title_embedding, where + " title_embedding");
        if (normalize) {
            normalize_vector(e.image_embedding, where + " image_embedding");
            normalize_vector(e.title_embedding, where + " title_embedding");
        } else {
            for (const auto* v : {&e.image_embedding, &e.title_embedding}) {
                double norm = l2_norm(*v);
                if (std::abs(norm - 1.0) > kNormTolerance) {
                    throw DataError(where + ": embedding L2 norm " + std::to_string(norm) +
                                    " is not unit; ingest with normalization enabled");
                }
            }
        }
        if (!index_by_id_.emplace(e.entry_id, i).second) {
            throw DataError("duplicate entry_id '" + e.entry_id + "'");
        }
    }
    if (dim_ == 0 && !entries_.empty()) {
        throw DataError("knowledge base has entries but no embedding dimension");
    }
}

KnowledgeBase KnowledgeBase::from_entries(std::vector<KbEntry> entries, bool normalize) {
    KnowledgeBase kb;
    kb.entries_ = std::move(entries);
    kb.validate_and_index(normalize);
    return kb;
}

KnowledgeBase KnowledgeBase::ingest(const std::string& path, const IngestOptions& opts) {
    SidecarData sidecar;
    bool have_sidecar = false;
    if (opts.use_sidecar) {
        const std::string sc = sidecar_path_for(path);
        if (fs::exists(sc)) {
            have_sidecar = try_load_sidecar(sc, count_jsonl_records(path), sidecar);
            if (!have_sidecar) {
                std::cerr << "warning: ignoring stale or corrupt sidecar " << sc << "\n";
            }
        }
    }

    KnowledgeBase kb;
    size_t record_index = 0;
    for_each_jsonl_line(path, [&](size_t line_no, const json& j) {
        const std::string where = path + ":" + std::to_string(line_no);
        KbEntry e;
        e.entry_id = require_string(j, "entry_id", where);
        e.title = require_string(j, "title", where);
        e.article = require_string(j, "article", where);
        if (have_sidecar) {
            const size_t d = sidecar.dim;
            const float* base = sidecar.packed.data() + record_index * 2 * d;
            e.image_embedding.assign(base, base + d);
            e.title_embedding.assign(base + d, base + 2 * d);
        } else {
            e.image_embedding = parse_embedding(j, "image_embedding", where);
            e.title_embedding = parse_embedding(j, "title_embedding", where);
        }
        kb.entries_.push_back(std::move(e));
        ++record_index;
    });
    if (kb.entries_.empty()) {
        throw DataError(path + ": knowledge base file has no records");
    }

    try {
        kb.validate_and_index(opts.normalize);
    } catch (const DataError&) {
        if (have_sidecar) {
            // cache may be stale in content even when sizes line up
            IngestOptions retry = opts;
            retry.use_sidecar = false;
            return ingest(path, retry);
        }
        throw;
    }
    return kb;
}

const KbEntry* KnowledgeBase::find(const std::string& entry_id) const {
    auto it = index_by_id_.find(entry_id);
    return it == index_by_id_.end() ? nullptr : &entries_[it->second];
}

std::vector<Paragraph> KnowledgeBase::paragraphs_for(const std::string& entry_id,
                                                     const SegmentOptions& opts) const {
    const KbEntry* e = find(entry_id);
    if (e == nullptr) {
        throw DataError("unknown entry_id '" + entry_id + "'");
    }
    return segment_article(entry_id, e->article, opts);
}

void KnowledgeBase::save_jsonl(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write file: " + path);
    }
    for (const auto& e : entries_) {
        json j;
        j["entry_id"] = e.entry_id;
        j["title"] = e.title;
        j["article"] = e.article;
        j["image_embedding"] = e.image_embedding;
        j["title_embedding"] = e.title_embedding;
        out << j.dump() << '\n';
    }
}

void KnowledgeBase::write_sidecar(const std::string& jsonl_path) const {
    const std::string path = sidecar_path_for(jsonl_path);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write file: " + path);
    }
    const uint32_t dim = static_cast<uint32_t>(dim_);
    const uint64_t count = entries_.size();
    out.write(kSidecarMagic, sizeof(kSidecarMagic));
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& e : entries_) {
        out.write(reinterpret_cast<const char*>(e.image_embedding.data()),
                  static_cast<std::streamsize>(dim_ * sizeof(float)));
        out.write(reinterpret_cast<const char*>(e.title_embedding.data()),
                  static_cast<std::streamsize>(dim_ * sizeof(float)));
    }
}

std::string sidecar_path_for(const std::string& jsonl_path) {
    return jsonl_path + ".vec";
}

} // namespace rrag
