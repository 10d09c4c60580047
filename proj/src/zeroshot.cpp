#include "cct/zeroshot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace cct {

EvalSet load_eval_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_eval_jsonl: cannot open " + path);
    EvalSet set;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError("eval jsonl: invalid JSON", line_no);
        EvalItem item;
        try {
            item.raw_img = j.at("img").get<Vector>();
            item.label = j.at("label").get<std::int32_t>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("eval jsonl: ") + e.what(), line_no);
        }
        check_finite(item.raw_img, "eval img");
        set.items.push_back(std::move(item));
    }
    if (set.items.empty()) throw EmptySourceError("load_eval_jsonl: " + path + " is empty");
    return set;
}

void write_eval_jsonl(const std::string& path, const EvalSet& eval_set) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("write_eval_jsonl: cannot open " + path + " for writing");
    for (const EvalItem& item : eval_set.items) {
        out << nlohmann::json{{"img", item.raw_img}, {"label", item.label}}.dump() << '\n';
    }
}

ClassEmbeddings class_embeddings_for_eval(const ModelParams& params, const Metadata& metadata) {
    metadata.validate();
    ClassEmbeddings out;
    out.rows = Matrix(metadata.entries.size(), params.dims.embed_dim);
    for (std::size_t e = 0; e < metadata.entries.size(); ++e) {
        const auto& entry = metadata.entries[e];
        Matrix raw(entry.prompts.size(), params.dims.raw_txt_dim);
        for (std::size_t p = 0; p < entry.prompts.size(); ++p) {
            if (entry.prompts[p].size() != params.dims.raw_txt_dim) {
                throw ShapeError("eval metadata prompt dimension mismatch for class " +
                                 std::to_string(entry.class_id));
            }
            std::copy(entry.prompts[p].begin(), entry.prompts[p].end(), raw.row(p).begin());
        }
        const TextForward fwd = forward_text(params, raw);
        const Vector row = normalized_mean_of_rows(fwd.projected);
        std::copy(row.begin(), row.end(), out.rows.row(e).begin());
        out.class_ids.push_back(entry.class_id);
        out.names.push_back(entry.name);
    }
    return out;
}

std::int32_t classify(const ModelParams& params, const ClassEmbeddings& classes,
                      const Vector& raw_img) {
    Matrix img(1, raw_img.size());
    std::copy(raw_img.begin(), raw_img.end(), img.row(0).begin());
    const Matrix emb = forward_vision(params, img);

    double best_sim = 0.0;
    std::int32_t best_id = 0;
    bool first = true;
    for (std::size_t c = 0; c < classes.rows.rows(); ++c) {
        const double sim = dot(emb.row(0), classes.rows.row(c));
        const std::int32_t id = classes.class_ids[c];
        if (first || sim > best_sim || (sim == best_sim && id < best_id)) {
            best_sim = sim;
            best_id = id;
            first = false;
        }
    }
    return best_id;
}

double evaluate_accuracy(const ModelParams& params, const EvalSet& eval_set,
                         const Metadata& metadata) {
    if (eval_set.items.empty()) throw EmptySourceError("evaluate_accuracy: empty eval set");
    const ClassEmbeddings classes = class_embeddings_for_eval(params, metadata);
    std::size_t correct = 0;
    for (const EvalItem& item : eval_set.items) {
        if (classify(params, classes, item.raw_img) == item.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(eval_set.items.size());
}

TextScores score_texts(const Matrix& txt_emb, const Matrix& meta_emb) {
    const Matrix sims = cosine_sim_matrix(txt_emb, meta_emb);
    TextScores scores;
    scores.v_max.resize(sims.rows());
    scores.argmax_entry.resize(sims.rows());
    for (std::size_t i = 0; i < sims.rows(); ++i) {
        double best = sims(i, 0);
        std::size_t arg = 0;
        for (std::size_t j = 1; j < sims.cols(); ++j) {
            if (sims(i, j) > best) {
                best = sims(i, j);
                arg = j;
            }
        }
        scores.v_max[i] = best;
        scores.argmax_entry[i] = arg;
    }
    return scores;
}

CoverageStats coverage_stats(const TextScores& scores, const Metadata& metadata,
                             double threshold) {
    if (scores.v_max.empty()) throw EmptySourceError("coverage_stats: empty sample");
    CoverageStats stats;
    stats.sample_size = scores.v_max.size();
    std::vector<std::size_t> kept(metadata.entries.size(), 0);
    stats.per_class.resize(metadata.entries.size());
    for (std::size_t e = 0; e < metadata.entries.size(); ++e) {
        stats.per_class[e].class_id = metadata.entries[e].class_id;
        stats.per_class[e].name = metadata.entries[e].name;
    }
    std::size_t total_kept = 0;
    for (std::size_t i = 0; i < scores.v_max.size(); ++i) {
        const std::size_t e = scores.argmax_entry[i];
        stats.per_class[e].count += 1;
        if (scores.v_max[i] > threshold) {
            kept[e] += 1;
            ++total_kept;
        }
    }
    for (std::size_t e = 0; e < stats.per_class.size(); ++e) {
        stats.per_class[e].keep_rate =
            stats.per_class[e].count == 0
                ? 0.0
                : static_cast<double>(kept[e]) / static_cast<double>(stats.per_class[e].count);
    }
    stats.total_keep_rate =
        static_cast<double>(total_kept) / static_cast<double>(stats.sample_size);
    return stats;
}

void write_coverage_csv(const std::string& path, const CoverageStats& stats) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("write_coverage_csv: cannot open " + path + " for writing");
    out << "class_id,name,count,keep_rate\n";
    char buf[64];
    for (const ClassCoverage& c : stats.per_class) {
        std::snprintf(buf, sizeof(buf), "%.9g", c.keep_rate);
        out << c.class_id << ',' << c.name << ',' << c.count << ',' << buf << '\n';
    }
}

}  // namespace cct
