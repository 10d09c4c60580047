#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cct/curation.hpp"
#include "cct/model.hpp"

namespace cct {

struct EvalItem {
    Vector raw_img;
    std::int32_t label = 0;
};

struct EvalSet {
    std::vector<EvalItem> items;
};

// JSONL, one {"img":[...], "label":...} object per line.
EvalSet load_eval_jsonl(const std::string& path);
void write_eval_jsonl(const std::string& path, const EvalSet& eval_set);

struct ClassEmbeddings {
    Matrix rows;  // one unit-norm row per class
    std::vector<std::int32_t> class_ids;
    std::vector<std::string> names;
};

// Prompt-ensembled class embeddings in the shared (projected) space:
// normalize each prompt's projected embedding, average, renormalize.
ClassEmbeddings class_embeddings_for_eval(const ModelParams& params, const Metadata& metadata);

// argmax over classes of cos(forward_vision(raw_img), class row); ties go
// to the lowest class id.
std::int32_t classify(const ModelParams& params, const ClassEmbeddings& classes,
                      const Vector& raw_img);

double evaluate_accuracy(const ModelParams& params, const EvalSet& eval_set,
                         const Metadata& metadata);

struct ClassCoverage {
    std::int32_t class_id = 0;
    std::string name;
    std::size_t count = 0;    // texts whose argmax lands on this class
    double keep_rate = 0.0;   // fraction of those with v_max > threshold
};

struct CoverageStats {
    std::vector<ClassCoverage> per_class;
    double total_keep_rate = 0.0;
    std::size_t sample_size = 0;
};

// Scores of a text sample against metadata embeddings.
struct TextScores {
    Vector v_max;
    std::vector<std::size_t> argmax_entry;  // index into metadata.entries
};

TextScores score_texts(const Matrix& txt_emb, const Matrix& meta_emb);

CoverageStats coverage_stats(const TextScores& scores, const Metadata& metadata,
                             double threshold);

void write_coverage_csv(const std::string& path, const CoverageStats& stats);

}  // namespace cct
