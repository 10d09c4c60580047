#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cct/linalg.hpp"

namespace cct {

constexpr std::int32_t kDistractorLabel = -1;
constexpr std::int32_t kForeignLabel = -2;

// One raw image-text sample. diag_label is ground truth for diagnostics
// only; records handed to curation/training carry nullopt.
struct PairRecord {
    std::int64_t id = 0;
    Vector raw_img;
    Vector raw_txt;
    std::optional<std::int32_t> diag_label;
};

// Planted-concept corpus: a known fraction of pairs shares a latent
// direction across modalities, the rest is modality-mismatched or drawn
// from a text subspace orthogonal to every concept.
struct SyntheticCorpusSpec {
    std::size_t n_concepts = 8;
    std::size_t raw_img_dim = 32;
    std::size_t raw_txt_dim = 32;
    double clean_fraction = 0.25;
    double distractor_fraction = 0.55;
    double foreign_fraction = 0.20;
    double noise_sigma = 0.1;
    double distractor_txt_scale = 1.0;
    std::vector<Vector> image_concepts;               // unit u_c, image space
    std::vector<Vector> text_concepts;                // unit v_c, text space
    std::vector<std::vector<Vector>> prompt_offsets;  // per concept, text space
    std::vector<Vector> foreign_basis;                // orthonormal complement of span{v_c}
    std::uint64_t stream_seed = 0;
};

struct SyntheticSpecParams {
    std::size_t n_concepts = 8;
    std::size_t raw_img_dim = 32;
    std::size_t raw_txt_dim = 32;
    double clean_fraction = 0.25;
    double distractor_fraction = 0.55;
    double foreign_fraction = 0.20;
    double noise_sigma = 0.1;
    double distractor_txt_scale = 1.0;
    std::size_t prompts_per_concept = 3;
    double prompt_sigma = 0.1;
};

// Concept directions are rejection-sampled unit vectors with pairwise
// |cosine| < 0.5; ConfigError if the dimensions cannot host n_concepts such
// directions (or the fractions are invalid).
SyntheticCorpusSpec generate_spec(std::uint64_t seed, const SyntheticSpecParams& params);

// Record generation is a pure function of (spec, id).
PairRecord synthetic_record(const SyntheticCorpusSpec& spec, std::int64_t id);

struct TextBatch {
    std::vector<std::int64_t> ids;
    Matrix texts;  // one row per id
};

// Single-consumer cursor over an unbounded synthetic sequence or a cyclic
// deterministically reshuffled JSONL file.
class Stream {
public:
    static Stream synthetic(SyntheticCorpusSpec spec);
    static Stream from_jsonl(const std::string& path, std::uint64_t seed);

    // Full records with diag_label stripped.
    std::vector<PairRecord> next_raw_batch(std::size_t n);

    // Text-only view of the next n records; shares the cursor with
    // next_raw_batch. Curation consumes this and re-fetches selected ids.
    TextBatch next_text_batch(std::size_t n);

    // Re-materialize stripped records by id.
    std::vector<PairRecord> fetch_records(std::span<const std::int64_t> ids) const;

    // Ground truth for the test harness and coverage reports only.
    std::optional<std::int32_t> diagnostic_label(std::int64_t id) const;

    std::uint64_t epochs_completed() const { return epochs_; }
    std::int64_t raw_seen() const { return raw_seen_; }

private:
    Stream() = default;
    PairRecord record_at_cursor();
    void reshuffle();

    std::optional<SyntheticCorpusSpec> spec_;
    std::vector<PairRecord> file_records_;
    std::unordered_map<std::int64_t, std::size_t> index_by_id_;
    std::vector<std::size_t> order_;
    std::uint64_t seed_ = 0;
    std::uint64_t epochs_ = 0;
    std::size_t pos_ = 0;
    std::int64_t cursor_ = 0;
    std::int64_t raw_seen_ = 0;
};

// One JSON object per line: {"id":..., "img":[...], "txt":[...], "label":...}
// (label null for stripped records). Doubles round-trip value-exactly.
void write_jsonl(const std::string& path, std::span<const PairRecord> records);
Stream read_stream(const std::string& path, std::uint64_t seed);

}  // namespace cct
