#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "cct/data_source.hpp"
#include "cct/linalg.hpp"
#include "cct/model.hpp"

namespace cct {

struct MetadataEntry {
    std::int32_t class_id = 0;
    std::string name;
    std::vector<Vector> prompts;  // raw_txt-space vectors, >= 1
};

struct Metadata {
    std::vector<MetadataEntry> entries;

    void validate() const;
};

Metadata load_metadata(const std::string& path);
void save_metadata(const std::string& path, const Metadata& metadata);

enum class FeatureStage { pooled, projected };

struct CurationConfig {
    double threshold = 0.55;
    double min_ratio = 0.01;
    std::size_t expected_pairs = 0;
    std::size_t curation_batch = 0;
    FeatureStage feature_stage = FeatureStage::pooled;
    std::size_t max_raw_batches = 10000;
    bool dedup = false;

    void validate() const;
};

struct CurationOutcome {
    std::vector<std::int64_t> ids;
    std::vector<PairRecord> records;
    std::vector<double> batch_ratios;  // threshold-pass ratio per raw batch
    std::size_t fallback_count = 0;    // raw batches resolved by the top-k branch
    std::size_t raw_seen = 0;
};

// Normalize rows, average, renormalize. Shared by prompt ensembling here
// and in the zero-shot evaluator.
Vector normalized_mean_of_rows(const Matrix& rows);

// One row per metadata entry at the configured feature stage, recomputed
// from the current weights.
Matrix embed_metadata_for_curation(const ModelParams& params, const Metadata& metadata,
                                   FeatureStage stage);

// v[i] = max_j cos(txt_i, meta_j)
Vector max_meta_similarity(const Matrix& txt_emb, const Matrix& meta_emb);

// Mixed selection: the over-threshold set when its ratio beats min_ratio,
// otherwise the top ceil(min_ratio*n) by similarity (ties to the lower
// index). Returned indices are ascending.
std::vector<std::size_t> data_proxy(const Vector& v_max, double threshold, double min_ratio);

// Pull text views, score against the metadata, select, and re-fetch full
// records until expected_pairs are accumulated. `seen` (optional) drops ids
// already curated in earlier rounds.
CurationOutcome curate(const ModelParams& params, Stream& stream, const Metadata& metadata,
                       const CurationConfig& config,
                       std::unordered_set<std::int64_t>* seen = nullptr);

}  // namespace cct
