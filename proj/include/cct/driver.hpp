#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cct/curation.hpp"
#include "cct/data_source.hpp"
#include "cct/model.hpp"
#include "cct/trainer.hpp"
#include "cct/zeroshot.hpp"

namespace cct {

enum class CurationMode { online, offline, none };

struct ValidationConfig {
    std::string eval_path;      // empty: derived from the synthetic spec
    std::size_t eval_n = 800;   // synthetic eval set size
    std::size_t interval = 500; // steps between validations; multiple of cadence
    bool early_stop = true;
};

struct Seeds {
    std::uint64_t spec_seed = 1;
    std::uint64_t stream_seed = 2;
    std::uint64_t init_seed = 3;
};

struct RunConfig {
    ModelDims dims;
    std::optional<SyntheticSpecParams> synthetic = SyntheticSpecParams{};
    std::string corpus_jsonl;   // used when synthetic is not set
    std::string metadata_path;  // empty: derived from the synthetic spec
    CurationConfig curation;
    TrainConfig train;
    ValidationConfig validation;
    CurationMode mode = CurationMode::online;
    Seeds seeds;
    std::string telemetry_path;   // empty: keep rows in memory only
    std::string checkpoint_path;  // empty: no checkpoint written
    bool record_wall_time = false;

    void validate_and_finalize();  // fills derived fields, throws ConfigError
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Ordered as emitted within one step: train, then validation, then the next
// round's curation.
enum class TelemetryEvent { train = 0, validation = 1, curation = 2 };

struct TelemetryRow {
    TelemetryEvent event = TelemetryEvent::train;
    std::size_t step = 0;
    std::optional<double> ratio;
    std::optional<int> fallback;
    std::optional<double> loss;
    std::optional<double> val_acc;
    double tau = 0.0;  // exp(log_tau)
    std::int64_t ms = 0;
};

void write_telemetry_csv(const std::string& path, const std::vector<TelemetryRow>& rows);

struct RunResult {
    ModelParams params;
    std::vector<TelemetryRow> telemetry;
    double best_val_accuracy = 0.0;
    double final_accuracy = 0.0;
    std::size_t total_steps = 0;
    std::size_t raw_seen = 0;
    std::optional<double> avg_curation_ratio;
    bool early_stopped = false;
    std::int64_t total_wall_ms = 0;
};

// Metadata / eval set derived from the planted concept directions.
Metadata metadata_from_spec(const SyntheticCorpusSpec& spec);
EvalSet eval_set_from_spec(const SyntheticCorpusSpec& spec, std::size_t n,
                           std::uint64_t eval_seed);

// The budget loop: alternate curation and training (mode online), curate
// once up front (offline), or train straight off the raw stream (none),
// validating every `interval` steps with optional early stopping. On
// NonFiniteLoss the telemetry collected so far is flushed before rethrow.
RunResult run_cit(const RunConfig& config);

double validate(const ModelParams& params, const EvalSet& eval_set, const Metadata& metadata);

}  // namespace cct
