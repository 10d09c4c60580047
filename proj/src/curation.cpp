#include "cct/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace cct {

void Metadata::validate() const {
    if (entries.empty()) throw ConfigError("metadata: needs at least one entry");
    for (const auto& e : entries) {
        if (e.prompts.empty()) {
            throw ConfigError("metadata: class " + std::to_string(e.class_id) +
                              " has no prompts");
        }
    }
}

Metadata load_metadata(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_metadata: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError("metadata: invalid JSON", 1);

    Metadata md;
    try {
        for (const auto& cls : j.at("classes")) {
            MetadataEntry e;
            e.class_id = cls.at("id").get<std::int32_t>();
            e.name = cls.at("name").get<std::string>();
            for (const auto& p : cls.at("prompts")) {
                Vector prompt = p.get<Vector>();
                check_finite(prompt, "metadata prompt");
                e.prompts.push_back(std::move(prompt));
            }
            md.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("metadata: ") + e.what(), 1);
    }
    md.validate();
    return md;
}

void save_metadata(const std::string& path, const Metadata& metadata) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& e : metadata.entries) {
        classes.push_back({{"id", e.class_id}, {"name", e.name}, {"prompts", e.prompts}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("save_metadata: cannot open " + path + " for writing");
    out << nlohmann::json{{"classes", classes}}.dump() << '\n';
}

void CurationConfig::validate() const {
    if (threshold <= -1.0 || threshold >= 1.0) {
        throw ConfigError("curation: threshold must be in (-1, 1)");
    }
    if (min_ratio <= 0.0 || min_ratio > 1.0) {
        throw ConfigError("curation: min_ratio must be in (0, 1]");
    }
    if (expected_pairs == 0) throw ConfigError("curation: expected_pairs must be >= 1");
    if (curation_batch == 0) throw ConfigError("curation: curation_batch must be >= 1");
    if (max_raw_batches == 0) throw ConfigError("curation: max_raw_batches must be >= 1");
}

Vector normalized_mean_of_rows(const Matrix& rows) {
    Vector mean(rows.cols(), 0.0);
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        const Vector unit = l2_normalize(Vector(rows.row(i).begin(), rows.row(i).end()));
        for (std::size_t j = 0; j < rows.cols(); ++j) mean[j] += unit[j];
    }
    for (double& x : mean) x /= static_cast<double>(rows.rows());
    return l2_normalize(mean);
}

Matrix embed_metadata_for_curation(const ModelParams& params, const Metadata& metadata,
                                   FeatureStage stage) {
    metadata.validate();
    const std::size_t out_dim =
        stage == FeatureStage::pooled ? params.dims.hidden_dim : params.dims.embed_dim;
    Matrix out(metadata.entries.size(), out_dim);
    for (std::size_t e = 0; e < metadata.entries.size(); ++e) {
        const auto& prompts = metadata.entries[e].prompts;
        Matrix raw(prompts.size(), params.dims.raw_txt_dim);
        for (std::size_t p = 0; p < prompts.size(); ++p) {
            if (prompts[p].size() != params.dims.raw_txt_dim) {
                throw ShapeError("metadata prompt dimension mismatch for class " +
                                 std::to_string(metadata.entries[e].class_id));
            }
            std::copy(prompts[p].begin(), prompts[p].end(), raw.row(p).begin());
        }
        const TextForward fwd = forward_text(params, raw);
        const Matrix& staged = stage == FeatureStage::pooled ? fwd.pooled : fwd.projected;
        const Vector row = normalized_mean_of_rows(staged);
        std::copy(row.begin(), row.end(), out.row(e).begin());
    }
    return out;
}

Vector max_meta_similarity(const Matrix& txt_emb, const Matrix& meta_emb) {
    const Matrix sims = cosine_sim_matrix(txt_emb, meta_emb);
    Vector v_max(txt_emb.rows());
    for (std::size_t i = 0; i < sims.rows(); ++i) {
        double best = sims(i, 0);
        for (std::size_t j = 1; j < sims.cols(); ++j) best = std::max(best, sims(i, j));
        v_max[i] = best;
    }
    return v_max;
}

namespace {

// smallest integer >= x, tolerating fp noise in min_ratio * n
std::size_t ceil_with_slack(double x, std::size_t n) {
    const auto k = static_cast<std::size_t>(std::ceil(x - 1e-9));
    return std::clamp<std::size_t>(k, 1, n);
}

}  // namespace

std::vector<std::size_t> data_proxy(const Vector& v_max, double threshold, double min_ratio) {
    const std::size_t n = v_max.size();
    std::vector<std::size_t> over;
    for (std::size_t i = 0; i < n; ++i) {
        if (v_max[i] > threshold) over.push_back(i);
    }
    if (static_cast<double>(over.size()) / static_cast<double>(n) > min_ratio) {
        return over;
    }
    const std::size_t k = ceil_with_slack(min_ratio * static_cast<double>(n), n);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&v_max](std::size_t a, std::size_t b) {
                          if (v_max[a] != v_max[b]) return v_max[a] > v_max[b];
                          return a < b;
                      });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

CurationOutcome curate(const ModelParams& params, Stream& stream, const Metadata& metadata,
                       const CurationConfig& config, std::unordered_set<std::int64_t>* seen) {
    config.validate();
    const Matrix meta_emb = embed_metadata_for_curation(params, metadata, config.feature_stage);

    CurationOutcome outcome;
    std::size_t batches = 0;
    while (outcome.ids.size() < config.expected_pairs) {
        if (++batches > config.max_raw_batches) {
            throw CurationStarvation("curate: exceeded " +
                                     std::to_string(config.max_raw_batches) +
                                     " raw batches with " + std::to_string(outcome.ids.size()) +
                                     "/" + std::to_string(config.expected_pairs) + " curated");
        }
        const TextBatch batch = stream.next_text_batch(config.curation_batch);
        const TextForward fwd = forward_text(params, batch.texts);
        const Matrix& staged =
            config.feature_stage == FeatureStage::pooled ? fwd.pooled : fwd.projected;
        const Vector v_max = max_meta_similarity(staged, meta_emb);

        std::size_t over = 0;
        for (double v : v_max) {
            if (v > config.threshold) ++over;
        }
        const double ratio = static_cast<double>(over) / static_cast<double>(v_max.size());
        outcome.batch_ratios.push_back(ratio);
        if (ratio <= config.min_ratio) ++outcome.fallback_count;

        for (std::size_t i : data_proxy(v_max, config.threshold, config.min_ratio)) {
            const std::int64_t id = batch.ids[i];
            if (seen && config.dedup && !seen->insert(id).second) continue;
            outcome.ids.push_back(id);
        }
    }
    outcome.raw_seen = batches * config.curation_batch;
    outcome.records = stream.fetch_records(outcome.ids);
    return outcome;
}

}  // namespace cct
