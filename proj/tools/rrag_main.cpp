// rrag: reflective retrieval-augmented generation engine CLI.
//
// Subcommands: ingest-kb, retrieve, answer, batch, eval, annotate,
// export-training, report. Data goes to stdout or --output files; logs and
// the resolved-config echo go to stderr. Exit codes: 1 config error, 2 data
// error, 3 backend error.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "rrag/annotation.hpp"
#include "rrag/engine_config.hpp"
#include "rrag/errors.hpp"
#include "rrag/evaluation.hpp"
#include "rrag/generator_backend.hpp"
#include "rrag/jsonl.hpp"
#include "rrag/knowledge_base.hpp"
#include "rrag/pipeline.hpp"
#include "rrag/ranking.hpp"
#include "rrag/retrieval.hpp"
#include "rrag/strings.hpp"
#include "rrag/training_targets.hpp"

namespace fs = std::filesystem;
using rrag::json;

namespace {

void echo_config(const rrag::EngineConfig& cfg) {
    std::cerr << "config: " << cfg.to_json().dump() << "\n";
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) {
        throw rrag::ConfigError(what + " not set");
    }
    if (!fs::exists(path)) {
        throw rrag::ConfigError(what + " does not exist: " + path);
    }
}

std::vector<size_t> parse_size_list(const std::string& csv, const std::string& flag) {
    std::vector<size_t> out;
    for (const auto& part : rrag::split(csv, ",")) {
        const std::string t = rrag::trim(part);
        if (t.empty()) continue;
        try {
            long v = std::stol(t);
            if (v < 1) throw std::invalid_argument("non-positive");
            out.push_back(static_cast<size_t>(v));
        } catch (const std::exception&) {
            throw rrag::ConfigError(flag + ": invalid value '" + t + "'");
        }
    }
    if (out.empty()) {
        throw rrag::ConfigError(flag + ": empty list");
    }
    return out;
}

std::vector<float> load_query_embedding(const std::string& path) {
    json j = rrag::read_json_file(path);
    const json* arr = nullptr;
    if (j.is_array()) {
        arr = &j;
    } else if (j.is_object() && j.contains("image_embedding")) {
        arr = &j["image_embedding"];
    } else if (j.is_object() && j.contains("embedding")) {
        arr = &j["embedding"];
    }
    if (arr == nullptr || !arr->is_array() || arr->empty()) {
        throw rrag::DataError(path + ": expected a JSON float array or an object with "
                              "'image_embedding'");
    }
    std::vector<float> out;
    out.reserve(arr->size());
    for (const auto& x : *arr) {
        if (!x.is_number()) {
            throw rrag::DataError(path + ": non-numeric embedding component");
        }
        out.push_back(static_cast<float>(x.get<double>()));
    }
    return out;
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) {
        throw rrag::DataError("cannot write file: " + path);
    }
    return file;
}

// ---------------------------------------------------------------- ingest-kb

int cmd_ingest_kb(const rrag::EngineConfig& cfg, const std::string& input,
                  const std::string& output, bool normalize, bool sidecar) {
    echo_config(cfg);
    require_file(input, "--input");
    rrag::IngestOptions opts;
    opts.normalize = normalize;
    rrag::KnowledgeBase kb = rrag::KnowledgeBase::ingest(input, opts);
    std::cerr << "ingested " << kb.size() << " entries, dimension " << kb.dimension()
              << "\n";
    if (!output.empty()) {
        kb.save_jsonl(output);
        if (sidecar) kb.write_sidecar(output);
        std::cerr << "wrote " << output << (sidecar ? " (+ sidecar)" : "") << "\n";
    } else if (sidecar) {
        kb.write_sidecar(input);
        std::cerr << "wrote " << rrag::sidecar_path_for(input) << "\n";
    }
    return 0;
}

// ----------------------------------------------------------------- retrieve

int cmd_retrieve(const rrag::EngineConfig& cfg, const std::string& query_emb_path,
                 const std::string& output) {
    echo_config(cfg);
    require_file(cfg.kb_path, "--kb");
    require_file(query_emb_path, "--query-emb");
    rrag::KnowledgeBase kb = rrag::KnowledgeBase::ingest(cfg.kb_path);
    std::vector<float> emb = load_query_embedding(query_emb_path);
    auto hits = rrag::top_n(emb, kb, cfg.top_n, cfg.retrieval_mode, cfg.parallelism);

    std::ofstream file;
    std::ostream& out = open_output(file, output);
    for (const auto& hit : hits) {
        json j;
        j["entry_id"] = hit.entry_id;
        j["rank"] = hit.rank;
        j["score"] = hit.score;
        j["cross_modal_sim"] = hit.cross_modal_sim;
        j["uni_modal_sim"] = hit.uni_modal_sim;
        out << j.dump() << "\n";
    }
    return 0;
}

// ------------------------------------------------------------------- answer

int cmd_answer(const rrag::EngineConfig& cfg, const std::string& query_arg) {
    echo_config(cfg);
    require_file(cfg.kb_path, "--kb");
    if (cfg.backend_spec.empty()) {
        throw rrag::ConfigError("--backend not set");
    }
    json qj;
    if (fs::exists(query_arg)) {
        qj = rrag::read_json_file(query_arg);
    } else {
        try {
            qj = json::parse(query_arg);
        } catch (const json::parse_error&) {
            throw rrag::ConfigError("--query is neither an existing file nor inline JSON");
        }
    }
    rrag::Query query = rrag::Query::from_json(qj);
    rrag::KnowledgeBase kb = rrag::KnowledgeBase::ingest(cfg.kb_path);
    auto backend = rrag::make_backend(cfg.backend_spec);
    rrag::PipelineResult result = rrag::run_query(query, kb, *backend, cfg.pipeline_config());
    std::cout << result.to_json().dump(2) << "\n";
    return 0;
}

// -------------------------------------------------------------------- batch

int cmd_batch(const rrag::EngineConfig& cfg, const std::string& queries_path,
              const std::string& output, bool ablate_ranking, size_t random_seeds) {
    echo_config(cfg);
    require_file(cfg.kb_path, "--kb");
    require_file(queries_path, "--queries");
    if (cfg.backend_spec.empty()) {
        throw rrag::ConfigError("--backend not set");
    }
    std::vector<rrag::Query> queries = rrag::load_queries_jsonl(queries_path);
    rrag::KnowledgeBase kb = rrag::KnowledgeBase::ingest(cfg.kb_path);
    auto backend = rrag::make_backend(cfg.backend_spec);
    rrag::PipelineConfig pcfg = cfg.pipeline_config();
    pcfg.ablate_ranking = ablate_ranking;
    if (random_seeds > 0) pcfg.random_ablation_seeds = random_seeds;

    std::vector<rrag::BatchItem> items = rrag::run_batch(queries, kb, *backend, pcfg);

    std::ofstream file;
    std::ostream& out = open_output(file, output);
    size_t failures = 0;
    for (const auto& item : items) {
        if (item.error) ++failures;
        out << item.to_json().dump() << "\n";
    }
    std::cerr << "batch: " << items.size() << " queries, " << failures << " failed\n";
    return 0;
}

// --------------------------------------------------------------------- eval

struct GoldRow {
    rrag::EvalSplit split;
    rrag::QuestionCategory category;
    json gold;
};

int cmd_eval(const rrag::EngineConfig& cfg, const std::string& predictions_path,
             const std::string& gold_path, bool ablate_ranking,
             const std::string& report_json_path) {
    echo_config(cfg);
    require_file(predictions_path, "--predictions");

    rrag::ScoringConfig scoring;
    scoring.relaxed_tolerance = cfg.relaxed_tolerance;
    scoring.normalize_time_as_date = cfg.normalize_time_as_date;

    std::vector<rrag::EvalRow> rows;
    std::map<std::string, std::map<std::string, json>> ablation_predictions; // mode -> id -> answer

    if (gold_path.empty()) {
        // self-contained rows
        rrag::for_each_jsonl_line(predictions_path, [&](size_t line_no, const json& j) {
            try {
                rows.push_back(rrag::EvalRow::from_json(j));
            } catch (const rrag::DataError& e) {
                throw rrag::DataError(predictions_path + ":" + std::to_string(line_no) +
                                      ": " + e.what());
            }
        });
    } else {
        // join prediction rows (or pipeline results) against a gold file
        require_file(gold_path, "--gold");
        std::map<std::string, GoldRow> gold_by_id;
        rrag::for_each_jsonl_line(gold_path, [&](size_t line_no, const json& j) {
            const std::string where = gold_path + ":" + std::to_string(line_no);
            if (!j.contains("query_id") || !j.contains("split") || !j.contains("category") ||
                !j.contains("gold")) {
                throw rrag::DataError(where + ": gold row needs query_id, split, category, gold");
            }
            GoldRow g{rrag::eval_split_from_string(j["split"].get<std::string>()),
                      rrag::question_category_from_string(j["category"].get<std::string>()),
                      j["gold"]};
            gold_by_id.emplace(j["query_id"].get<std::string>(), std::move(g));
        });
        rrag::for_each_jsonl_line(predictions_path, [&](size_t line_no, const json& j) {
            const std::string where = predictions_path + ":" + std::to_string(line_no);
            if (!j.contains("query_id")) {
                throw rrag::DataError(where + ": prediction row needs query_id");
            }
            const std::string id = j["query_id"].get<std::string>();
            if (j.contains("error")) {
                std::cerr << "eval: skipping failed query " << id << ": "
                          << j["error"].get<std::string>() << "\n";
                return;
            }
            json predicted;
            if (j.contains("predicted")) {
                predicted = j["predicted"];
            } else if (j.contains("final_answer")) {
                predicted = j["final_answer"];
            } else {
                throw rrag::DataError(where + ": row has neither 'predicted' nor 'final_answer'");
            }
            auto it = gold_by_id.find(id);
            if (it == gold_by_id.end()) {
                throw rrag::DataError(where + ": no gold row for query_id '" + id + "'");
            }
            rrag::EvalRow row;
            row.query_id = id;
            row.split = it->second.split;
            row.category = it->second.category;
            row.predicted = predicted;
            row.gold = it->second.gold;
            rows.push_back(std::move(row));
            if (ablate_ranking && j.contains("ranking_ablation") &&
                j["ranking_ablation"].is_object()) {
                for (const auto& [mode, answer] : j["ranking_ablation"].items()) {
                    ablation_predictions[mode][id] = answer;
                }
            }
        });
    }
    if (rows.empty()) {
        throw rrag::DataError("eval: no scorable rows");
    }

    std::vector<std::string> diagnostics;
    std::vector<rrag::EvalOutcome> outcomes;
    outcomes.reserve(rows.size());
    for (const auto& row : rows) {
        outcomes.push_back(rrag::score_row(row, scoring, &diagnostics));
    }
    rrag::MetricReport report = rrag::aggregate(outcomes);
    report.relaxed_tolerance = scoring.relaxed_tolerance;
    report.matcher_name = scoring.matcher.name;

    for (const auto& d : diagnostics) std::cerr << "diagnostic: " << d << "\n";
    std::cout << report.to_text_table();

    json out_json = report.to_json();

    if (ablate_ranking && !ablation_predictions.empty()) {
        std::cout << "\nranking ablation\n";
        std::ostringstream table;
        table << std::fixed << std::setprecision(1);
        table << std::left << std::setw(14) << "mode";
        std::vector<std::string> split_names;
        for (const auto& [name, _] : report.splits) split_names.push_back(name);
        for (const auto& name : split_names) table << std::right << std::setw(17) << name;
        table << std::right << std::setw(17) << "overall" << "\n";
        json ablation_json = json::object();
        for (const auto& [mode, by_id] : ablation_predictions) {
            std::vector<rrag::EvalOutcome> mode_outcomes;
            for (const auto& row : rows) {
                auto it = by_id.find(row.query_id);
                if (it == by_id.end()) continue;
                // the random mode carries one answer per seed; its per-query
                // score is the mean over those selections
                std::vector<json> variants;
                if (it->second.is_array()) {
                    for (const auto& v : it->second) variants.push_back(v);
                } else {
                    variants.push_back(it->second);
                }
                if (variants.empty()) continue;
                double sum = 0.0;
                rrag::EvalOutcome outcome;
                for (const auto& v : variants) {
                    rrag::EvalRow mode_row = row;
                    mode_row.predicted = v;
                    outcome = rrag::score_row(mode_row, scoring, nullptr);
                    sum += outcome.score;
                }
                outcome.score = sum / static_cast<double>(variants.size());
                mode_outcomes.push_back(outcome);
            }
            if (mode_outcomes.empty()) continue;
            rrag::MetricReport mode_report = rrag::aggregate(mode_outcomes);
            table << std::left << std::setw(14) << mode;
            for (const auto& name : split_names) {
                auto it = mode_report.splits.find(name);
                if (it == mode_report.splits.end()) {
                    table << std::right << std::setw(17) << "--";
                } else {
                    table << std::right << std::setw(17) << it->second.average;
                }
            }
            table << std::right << std::setw(17) << mode_report.overall << "\n";
            ablation_json[mode] = mode_report.to_json();
        }
        std::cout << table.str();
        out_json["ranking_ablation"] = ablation_json;
    }

    if (!report_json_path.empty()) {
        rrag::write_text_file(report_json_path, out_json.dump(2) + "\n");
        std::cerr << "wrote " << report_json_path << "\n";
    }
    return 0;
}

// ----------------------------------------------------------------- annotate

int cmd_annotate(const rrag::EngineConfig& cfg, const std::string& source_name,
                 const std::string& input, const std::string& output,
                 bool include_flagged, int max_distractors) {
    echo_config(cfg);
    require_file(input, "--input");
    const rrag::AnnotationSource source = rrag::annotation_source_from_string(source_name);

    std::vector<json> out_rows;
    size_t skipped = 0;

    if (source == rrag::AnnotationSource::infoseek) {
        auto judge = rrag::make_judge(cfg.judge_spec);
        rrag::SegmentOptions seg;
        seg.min_paragraph_chars = cfg.min_paragraph_chars;
        rrag::for_each_jsonl_line(input, [&](size_t line_no, const json& j) {
            rrag::InfoseekSample sample;
            try {
                sample = rrag::InfoseekSample::from_json(j);
            } catch (const rrag::DataError& e) {
                throw rrag::DataError(input + ":" + std::to_string(line_no) + ": " + e.what());
            }
            rrag::AnnotationRecord rec = rrag::annotate_infoseek(sample, *judge, seg);
            if (rec.flagged() && !include_flagged) {
                std::cerr << "annotate: excluding flagged sample " << rec.sample_id << " (";
                for (size_t i = 0; i < rec.flags.size(); ++i) {
                    std::cerr << (i ? ", " : "") << rec.flags[i];
                }
                std::cerr << ")\n";
                ++skipped;
                return;
            }
            out_rows.push_back(rec.to_json());
        });
    } else if (source == rrag::AnnotationSource::nq) {
        rrag::NqConvertOptions opts;
        opts.max_distractors = max_distractors;
        opts.seed = cfg.seed;
        size_t line_counter = 0;
        rrag::for_each_jsonl_line(input, [&](size_t line_no, const json& j) {
            rrag::NqSample sample = rrag::NqSample::from_json(j);
            if (sample.sample_id.empty()) {
                sample.sample_id = "nq-" + std::to_string(++line_counter);
            }
            rrag::NqConversion conv = rrag::convert_nq(sample, opts);
            if (!conv.record) {
                std::cerr << "annotate: skipping " << input << ":" << line_no << ": "
                          << conv.skip_reason.value_or("unknown") << "\n";
                ++skipped;
                return;
            }
            out_rows.push_back(conv.record->to_json());
        });
    } else { // enc_vqa
        rrag::for_each_jsonl_line(input, [&](size_t line_no, const json& j) {
            rrag::AnnotationRecord rec;
            try {
                rec = rrag::enc_vqa_record_from_json(j);
            } catch (const rrag::DataError& e) {
                throw rrag::DataError(input + ":" + std::to_string(line_no) + ": " + e.what());
            }
            rrag::EncVqaFilterResult filtered = rrag::filter_enc_vqa(rec);
            if (!filtered.accepted) {
                std::cerr << "annotate: rejecting " << rec.sample_id << ": "
                          << filtered.reason.value_or("filter violation") << "\n";
                ++skipped;
                return;
            }
            out_rows.push_back(filtered.record->to_json());
        });
    }

    if (output.empty()) {
        for (const auto& row : out_rows) std::cout << row.dump() << "\n";
    } else {
        rrag::write_jsonl(output, out_rows);
    }
    std::cerr << "annotate: wrote " << out_rows.size() << " records, skipped " << skipped
              << "\n";
    return 0;
}

// ---------------------------------------------------------- export-training

int cmd_export_training(const rrag::EngineConfig& cfg, const std::string& input,
                        const std::string& output, const std::string& source_name,
                        const std::string& format) {
    echo_config(cfg);
    require_file(input, "--input");
    if (format != "jsonl") {
        throw rrag::ConfigError("--format: only 'jsonl' is supported");
    }
    const rrag::TrainingSource source = rrag::training_source_from_string(source_name);

    std::vector<rrag::AnnotationRecord> records;
    rrag::for_each_jsonl_line(input, [&](size_t line_no, const json& j) {
        try {
            if (source == rrag::TrainingSource::visual_it) {
                // visual samples carry no paragraphs: {sample_id, question,
                // image_ref?, answers}
                rrag::AnnotationRecord rec;
                rec.sample_id = j.at("sample_id").get<std::string>();
                rec.question = j.at("question").get<std::string>();
                if (j.contains("image_ref")) rec.image_ref = j["image_ref"].get<std::string>();
                for (const auto& a : j.at("answers")) {
                    rec.gold_answers.push_back(a.get<std::string>());
                }
                records.push_back(std::move(rec));
            } else {
                rrag::AnnotationRecord rec = rrag::AnnotationRecord::from_json(j);
                if (rec.flagged()) {
                    std::cerr << "export-training: skipping flagged record " << rec.sample_id
                              << "\n";
                    return;
                }
                records.push_back(std::move(rec));
            }
        } catch (const json::exception& e) {
            throw rrag::DataError(input + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const rrag::DataError& e) {
            throw rrag::DataError(input + ":" + std::to_string(line_no) + ": " + e.what());
        }
    });

    std::vector<rrag::TrainingRecord> training = rrag::assemble_records(records, source);
    if (output.empty() || output == "-") {
        for (const auto& r : training) std::cout << r.to_json().dump() << "\n";
    } else {
        rrag::write_training_records_jsonl(output, training);
    }
    std::cerr << "export-training: " << training.size() << " records from "
              << records.size() << " samples\n";
    return 0;
}

// ------------------------------------------------------------------- report

struct RetrievalQueryRow {
    std::string query_id;
    std::vector<float> embedding;
    std::string gold_entry_id;
};

int cmd_report(const rrag::EngineConfig& cfg, const std::string& queries_path,
               const std::string& recall_csv, const std::string& modes_arg,
               const std::string& sweep_csv, const std::string& report_json_path) {
    echo_config(cfg);
    require_file(cfg.kb_path, "--kb");
    require_file(queries_path, "--queries");

    std::vector<RetrievalQueryRow> rows;
    rrag::for_each_jsonl_line(queries_path, [&](size_t line_no, const json& j) {
        const std::string where = queries_path + ":" + std::to_string(line_no);
        RetrievalQueryRow row;
        if (!j.contains("query_id") || !j.contains("image_embedding") ||
            !j.contains("gold_entry_id")) {
            throw rrag::DataError(where +
                                  ": row needs query_id, image_embedding, gold_entry_id");
        }
        row.query_id = j["query_id"].get<std::string>();
        for (const auto& x : j["image_embedding"]) {
            row.embedding.push_back(static_cast<float>(x.get<double>()));
        }
        row.gold_entry_id = j["gold_entry_id"].get<std::string>();
        rows.push_back(std::move(row));
    });
    if (rows.empty()) {
        throw rrag::DataError("report: no queries");
    }

    rrag::KnowledgeBase kb = rrag::KnowledgeBase::ingest(cfg.kb_path);

    std::vector<size_t> recall_ks = parse_size_list(recall_csv, "--recall-at");
    std::vector<rrag::RetrievalMode> modes;
    if (modes_arg == "all") {
        modes = rrag::all_retrieval_modes();
    } else {
        for (const auto& m : rrag::split(modes_arg, ",")) {
            modes.push_back(rrag::retrieval_mode_from_string(rrag::trim(m)));
        }
    }

    const size_t max_k = *std::max_element(recall_ks.begin(), recall_ks.end());

    json out_json;
    std::cout << std::fixed << std::setprecision(3);
    std::cout << std::left << std::setw(20) << "mode";
    for (size_t k : recall_ks) {
        std::cout << std::right << std::setw(10) << ("R@" + std::to_string(k));
    }
    std::cout << "\n";
    for (rrag::RetrievalMode mode : modes) {
        std::vector<rrag::RetrievalRun> runs;
        runs.reserve(rows.size());
        for (const auto& row : rows) {
            auto hits = rrag::top_n(row.embedding, kb, max_k, mode, cfg.parallelism);
            rrag::RetrievalRun run;
            run.gold_entry_id = row.gold_entry_id;
            for (const auto& h : hits) run.ranked_entry_ids.push_back(h.entry_id);
            runs.push_back(std::move(run));
        }
        std::cout << std::left << std::setw(20) << rrag::to_string(mode);
        json mode_json;
        for (size_t k : recall_ks) {
            double r = rrag::recall_at_k(runs, k);
            std::cout << std::right << std::setw(10) << r;
            mode_json["R@" + std::to_string(k)] = r;
        }
        std::cout << "\n";
        out_json["recall"][rrag::to_string(mode)] = mode_json;
    }

    if (!sweep_csv.empty()) {
        std::vector<size_t> sweep = parse_size_list(sweep_csv, "--top-n-sweep");
        const size_t sweep_max = *std::max_element(sweep.begin(), sweep.end());
        std::vector<rrag::RetrievalRun> runs;
        runs.reserve(rows.size());
        for (const auto& row : rows) {
            auto hits = rrag::top_n(row.embedding, kb, sweep_max, cfg.retrieval_mode,
                                    cfg.parallelism);
            rrag::RetrievalRun run;
            run.gold_entry_id = row.gold_entry_id;
            for (const auto& h : hits) run.ranked_entry_ids.push_back(h.entry_id);
            runs.push_back(std::move(run));
        }
        std::cout << "\ntop-n sweep (" << rrag::to_string(cfg.retrieval_mode) << ")\n";
        std::cout << std::left << std::setw(20) << "retrieved entries" << std::right
                  << std::setw(10) << "R@N" << "\n";
        for (size_t n : sweep) {
            double r = rrag::recall_at_k(runs, n);
            std::cout << std::left << std::setw(20) << n << std::right << std::setw(10) << r
                      << "\n";
            out_json["top_n_sweep"][std::to_string(n)] = r;
        }
    }

    if (!report_json_path.empty()) {
        rrag::write_text_file(report_json_path, out_json.dump(2) + "\n");
        std::cerr << "wrote " << report_json_path << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"reflective retrieval-augmented generation engine"};
    app.require_subcommand(1);

    // shared option holders; only applied when the flag was actually given
    std::string config_path;
    std::string kb_path, backend_spec, judge_spec, prompt_template_id;
    size_t top_n = 0;
    std::string retrieval_mode, ranking_mode, fallback_policy;
    double relaxed_tol = 0.0;
    unsigned parallelism = 0;
    uint64_t seed = 0;
    bool seed_given = false, tol_given = false, min_chars_given = false;
    size_t min_paragraph_chars = 0, max_paragraphs = 0;

    auto add_shared = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file; flags override its values");
        cmd->add_option("--kb", kb_path, "knowledge base JSONL");
        cmd->add_option("--backend", backend_spec, "backend URL or fixture path");
        cmd->add_option("--judge", judge_spec, "judge spec: heuristic | remote:<url>");
        cmd->add_option("--top-n,--n", top_n, "retrieved entries per query");
        cmd->add_option("--mode", retrieval_mode, "retrieval mode");
        cmd->add_option("--ranking-mode", ranking_mode,
                        "random|ans|ret|rel|ret_ans|rel_ans|ret_rel|ret_rel_ans");
        cmd->add_option("--relaxed-tol", relaxed_tol, "relative tolerance for NUMERICAL")
            ->each([&](const std::string&) { tol_given = true; });
        cmd->add_option("--parallelism", parallelism, "max concurrent work items");
        cmd->add_option("--fallback", fallback_policy, "direct_answer | abstain");
        cmd->add_option("--prompt-template", prompt_template_id, "prompt template id");
        cmd->add_option("--seed", seed, "seed for all randomness")
            ->each([&](const std::string&) { seed_given = true; });
        cmd->add_option("--min-paragraph-chars", min_paragraph_chars,
                        "short-paragraph merge threshold")
            ->each([&](const std::string&) { min_chars_given = true; });
        cmd->add_option("--max-paragraphs-per-entry", max_paragraphs,
                        "paragraph cap per retrieved entry (0 = unlimited)");
    };

    // ingest-kb
    std::string in_path, out_path;
    bool normalize = false, sidecar = false;
    CLI::App* ingest = app.add_subcommand("ingest-kb", "validate and persist a knowledge base");
    add_shared(ingest);
    ingest->add_option("--input", in_path, "KB JSONL to ingest")->required();
    ingest->add_option("--output", out_path, "canonical KB JSONL to write");
    ingest->add_flag("--normalize", normalize, "L2-normalize embeddings");
    ingest->add_flag("--sidecar", sidecar, "write packed float32 sidecar");

    // retrieve
    std::string query_emb_path, retrieve_out;
    CLI::App* retrieve = app.add_subcommand("retrieve", "top-N entries for a query embedding");
    add_shared(retrieve);
    retrieve->add_option("--query-emb", query_emb_path, "query embedding JSON")->required();
    retrieve->add_option("--output", retrieve_out, "hits JSONL (default stdout)");

    // answer
    std::string query_arg;
    CLI::App* answer = app.add_subcommand("answer", "run the pipeline for one query");
    add_shared(answer);
    answer->add_option("--query", query_arg, "query JSON file or inline JSON")->required();

    // batch
    std::string queries_path, batch_out;
    bool ablate_ranking = false;
    size_t random_seeds = 0;
    CLI::App* batch = app.add_subcommand("batch", "run the pipeline over a query file");
    add_shared(batch);
    batch->add_option("--queries", queries_path, "queries JSONL")->required();
    batch->add_option("--output", batch_out, "results JSONL (default stdout)");
    batch->add_flag("--ablate-ranking", ablate_ranking, "also rank under every mode");
    batch->add_option("--random-seeds", random_seeds,
                      "seeds averaged for the random ablation row");

    // eval
    std::string predictions_path, gold_path, report_json;
    bool eval_ablate = false;
    CLI::App* eval = app.add_subcommand("eval", "score predictions and print the report");
    add_shared(eval);
    eval->add_option("--predictions", predictions_path,
                     "predictions JSONL (self-contained rows or pipeline results)")
        ->required();
    eval->add_option("--gold", gold_path, "gold JSONL to join on query_id");
    eval->add_flag("--ablate-ranking", eval_ablate, "per-ranking-mode report columns");
    eval->add_option("--report-json", report_json, "also write the report as JSON");

    // annotate
    std::string annotate_source, annotate_in, annotate_out;
    bool include_flagged = false;
    int max_distractors = -1;
    CLI::App* annotate = app.add_subcommand("annotate", "build annotation records");
    add_shared(annotate);
    annotate->add_option("--source", annotate_source, "infoseek | nq | enc-vqa")->required();
    annotate->add_option("--input", annotate_in, "dataset JSONL")->required();
    annotate->add_option("--output", annotate_out, "annotation JSONL (default stdout)");
    annotate->add_flag("--include-flagged", include_flagged, "keep flagged records");
    annotate->add_option("--max-distractors", max_distractors,
                         "cap on NQ distractor paragraphs (-1 = all)");

    // export-training
    std::string et_in, et_out, et_source, et_format = "jsonl";
    CLI::App* export_training =
        app.add_subcommand("export-training", "assemble instruction-tuning records");
    add_shared(export_training);
    export_training->add_option("--input", et_in, "annotation JSONL")->required();
    export_training->add_option("--source", et_source, "visual_it | knowledge_it")->required();
    export_training->add_option("--output", et_out, "training JSONL (default stdout)");
    export_training->add_option("--format", et_format, "output format (jsonl)");

    // report
    std::string report_queries, recall_csv = "1,10,20", modes_arg = "all", sweep_csv,
                report_out_json;
    CLI::App* report = app.add_subcommand("report", "retrieval quality tables");
    add_shared(report);
    report->add_option("--queries", report_queries,
                       "JSONL of {query_id, image_embedding, gold_entry_id}")
        ->required();
    report->add_option("--recall-at", recall_csv, "comma list of K values");
    report->add_option("--modes", modes_arg, "all or comma list of retrieval modes");
    report->add_option("--top-n-sweep", sweep_csv, "comma list of N values to sweep");
    report->add_option("--report-json", report_out_json, "also write tables as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e); // prints the message and usage hint to stderr
        return 1;
    }

    try {
        rrag::EngineConfig cfg;
        if (!config_path.empty()) {
            require_file(config_path, "--config");
            cfg = rrag::EngineConfig::load(config_path);
        }
        // flags win over config-file values
        if (!kb_path.empty()) cfg.kb_path = kb_path;
        if (!backend_spec.empty()) cfg.backend_spec = backend_spec;
        if (!judge_spec.empty()) cfg.judge_spec = judge_spec;
        if (top_n != 0) cfg.top_n = top_n;
        if (!retrieval_mode.empty()) {
            cfg.retrieval_mode = rrag::retrieval_mode_from_string(retrieval_mode);
        }
        if (!ranking_mode.empty()) {
            cfg.ranking_mode = rrag::ranking_mode_from_string(ranking_mode);
        }
        if (tol_given) cfg.relaxed_tolerance = relaxed_tol;
        if (parallelism != 0) cfg.parallelism = parallelism;
        if (!fallback_policy.empty()) {
            cfg.fallback_policy = rrag::fallback_policy_from_string(fallback_policy);
        }
        if (!prompt_template_id.empty()) cfg.prompt_template_id = prompt_template_id;
        if (seed_given) cfg.seed = seed;
        if (min_chars_given) cfg.min_paragraph_chars = min_paragraph_chars;
        if (max_paragraphs != 0) cfg.max_paragraphs_per_entry = max_paragraphs;
        cfg.validate();

        if (ingest->parsed()) {
            return cmd_ingest_kb(cfg, in_path, out_path, normalize, sidecar);
        }
        if (retrieve->parsed()) {
            return cmd_retrieve(cfg, query_emb_path, retrieve_out);
        }
        if (answer->parsed()) {
            return cmd_answer(cfg, query_arg);
        }
        if (batch->parsed()) {
            return cmd_batch(cfg, queries_path, batch_out, ablate_ranking, random_seeds);
        }
        if (eval->parsed()) {
            return cmd_eval(cfg, predictions_path, gold_path, eval_ablate, report_json);
        }
        if (annotate->parsed()) {
            return cmd_annotate(cfg, annotate_source, annotate_in, annotate_out,
                                include_flagged, max_distractors);
        }
        if (export_training->parsed()) {
            return cmd_export_training(cfg, et_in, et_out, et_source, et_format);
        }
        if (report->parsed()) {
            return cmd_report(cfg, report_queries, recall_csv, modes_arg, sweep_csv,
                              report_out_json);
        }
        throw rrag::ConfigError("no subcommand");
    } catch (const rrag::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const rrag::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const rrag::BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
