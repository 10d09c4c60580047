#include "cct/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cct/rng.hpp"

namespace cct {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ms(Clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
}

CurationMode mode_from_string(const std::string& s) {
    if (s == "online") return CurationMode::online;
    if (s == "offline") return CurationMode::offline;
    if (s == "none") return CurationMode::none;
    throw ConfigError("unknown curation mode: " + s);
}

Objective objective_from_string(const std::string& s) {
    if (s == "img2txt") return Objective::img2txt;
    if (s == "bidirectional") return Objective::bidirectional;
    throw ConfigError("unknown objective: " + s);
}

FeatureStage feature_from_string(const std::string& s) {
    if (s == "pooled") return FeatureStage::pooled;
    if (s == "projected") return FeatureStage::projected;
    throw ConfigError("unknown curation feature stage: " + s);
}

const char* event_name(TelemetryEvent e) {
    switch (e) {
        case TelemetryEvent::train: return "train";
        case TelemetryEvent::validation: return "validation";
        case TelemetryEvent::curation: return "curation";
    }
    return "?";
}

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

}  // namespace

void RunConfig::validate_and_finalize() {
    dims.validate();
    train.validate();
    if (!synthetic && corpus_jsonl.empty()) {
        throw ConfigError("run config: need a synthetic corpus or a jsonl path");
    }
    if (synthetic) {
        if (synthetic->raw_img_dim != dims.raw_img_dim ||
            synthetic->raw_txt_dim != dims.raw_txt_dim) {
            throw ConfigError("run config: corpus raw dims must match model dims");
        }
    } else if (metadata_path.empty() || validation.eval_path.empty()) {
        throw ConfigError("run config: jsonl corpora need metadata and eval paths");
    }
    if (validation.interval == 0 || validation.interval % train.cadence != 0) {
        throw ConfigError("run config: validation interval must be a multiple of cadence");
    }
    if (curation.curation_batch == 0) curation.curation_batch = 8 * train.batch_size;
    const std::size_t round_pairs = train.cadence * train.batch_size;
    if (curation.expected_pairs == 0) {
        curation.expected_pairs = round_pairs;
    } else if (mode == CurationMode::online && curation.expected_pairs != round_pairs) {
        throw ConfigError("run config: expected_pairs must equal cadence * batch_size online");
    }
    if (mode != CurationMode::none) curation.validate();
    train.schedule.total_steps = train.budget;
    train.schedule.validate();
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    try {
        if (j.contains("dims")) {
            const auto& d = j.at("dims");
            cfg.dims.raw_img_dim = d.value("raw_img", cfg.dims.raw_img_dim);
            cfg.dims.raw_txt_dim = d.value("raw_txt", cfg.dims.raw_txt_dim);
            cfg.dims.backbone_dim = d.value("backbone", cfg.dims.backbone_dim);
            cfg.dims.hidden_dim = d.value("hidden", cfg.dims.hidden_dim);
            cfg.dims.embed_dim = d.value("embed", cfg.dims.embed_dim);
        }
        if (j.contains("corpus")) {
            const auto& c = j.at("corpus");
            const std::string type = c.value("type", "synthetic");
            if (type == "synthetic") {
                SyntheticSpecParams p;
                p.n_concepts = c.value("n_concepts", p.n_concepts);
                p.raw_img_dim = cfg.dims.raw_img_dim;
                p.raw_txt_dim = cfg.dims.raw_txt_dim;
                if (c.contains("fractions")) {
                    const auto f = c.at("fractions").get<std::vector<double>>();
                    if (f.size() != 3) throw ConfigError("corpus: fractions must have 3 entries");
                    p.clean_fraction = f[0];
                    p.distractor_fraction = f[1];
                    p.foreign_fraction = f[2];
                }
                p.noise_sigma = c.value("noise_sigma", p.noise_sigma);
                p.distractor_txt_scale = c.value("distractor_txt_scale", p.distractor_txt_scale);
                p.prompts_per_concept = c.value("prompts_per_concept", p.prompts_per_concept);
                p.prompt_sigma = c.value("prompt_sigma", p.prompt_sigma);
                cfg.synthetic = p;
            } else if (type == "jsonl") {
                cfg.synthetic.reset();
                cfg.corpus_jsonl = c.at("path").get<std::string>();
            } else {
                throw ConfigError("corpus: unknown type " + type);
            }
        }
        cfg.metadata_path = j.value("metadata", cfg.metadata_path);
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            cfg.validation.eval_path = e.value("path", cfg.validation.eval_path);
            cfg.validation.eval_n = e.value("n", cfg.validation.eval_n);
            cfg.validation.interval = e.value("interval", cfg.validation.interval);
            cfg.validation.early_stop = e.value("early_stop", cfg.validation.early_stop);
        }
        if (j.contains("curation")) {
            const auto& c = j.at("curation");
            cfg.curation.threshold = c.value("t", cfg.curation.threshold);
            cfg.curation.min_ratio = c.value("gamma", cfg.curation.min_ratio);
            cfg.curation.curation_batch = c.value("batch", cfg.curation.curation_batch);
            cfg.curation.expected_pairs = c.value("expected_pairs", cfg.curation.expected_pairs);
            cfg.curation.max_raw_batches = c.value("max_raw_batches", cfg.curation.max_raw_batches);
            cfg.curation.dedup = c.value("dedup", cfg.curation.dedup);
            if (c.contains("feature")) {
                cfg.curation.feature_stage = feature_from_string(c.at("feature"));
            }
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
            cfg.train.cadence = t.value("cadence", cfg.train.cadence);
            cfg.train.budget = t.value("budget", cfg.train.budget);
            if (t.contains("objective")) {
                cfg.train.objective = objective_from_string(t.at("objective"));
            }
            if (t.contains("lr")) {
                const auto& lr = t.at("lr");
                cfg.train.schedule.base_lr = lr.value("base", cfg.train.schedule.base_lr);
                cfg.train.schedule.min_lr = lr.value("min", cfg.train.schedule.min_lr);
                cfg.train.schedule.warmup_fraction =
                    lr.value("warmup_fraction", cfg.train.schedule.warmup_fraction);
            }
            if (t.contains("weight_decay")) {
                const auto& wd = t.at("weight_decay");
                cfg.train.schedule.weight_decay_proj =
                    wd.value("proj", cfg.train.schedule.weight_decay_proj);
                cfg.train.schedule.weight_decay_other =
                    wd.value("other", cfg.train.schedule.weight_decay_other);
            }
        }
        if (j.contains("mode")) cfg.mode = mode_from_string(j.at("mode"));
        if (j.contains("seeds")) {
            const auto& s = j.at("seeds");
            cfg.seeds.spec_seed = s.value("spec", cfg.seeds.spec_seed);
            cfg.seeds.stream_seed = s.value("stream", cfg.seeds.stream_seed);
            cfg.seeds.init_seed = s.value("init", cfg.seeds.init_seed);
        }
        if (j.contains("out")) {
            const auto& o = j.at("out");
            cfg.telemetry_path = o.value("telemetry", cfg.telemetry_path);
            cfg.checkpoint_path = o.value("checkpoint", cfg.checkpoint_path);
            cfg.record_wall_time = o.value("timing", cfg.record_wall_time);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    cfg.validate_and_finalize();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("run config: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("run config: invalid JSON in " + path);
    return run_config_from_json(j);
}

void write_telemetry_csv(const std::string& path, const std::vector<TelemetryRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("telemetry: cannot open " + path + " for writing");
    out << "event,step,ratio,fallback,loss,val_acc,tau,ms\n";
    for (const TelemetryRow& r : rows) {
        out << event_name(r.event) << ',' << r.step << ',';
        if (r.ratio) out << format_double(*r.ratio);
        out << ',';
        if (r.fallback) out << *r.fallback;
        out << ',';
        if (r.loss) out << format_double(*r.loss);
        out << ',';
        if (r.val_acc) out << format_double(*r.val_acc);
        out << ',' << format_double(r.tau) << ',' << r.ms << '\n';
    }
    if (!out) throw IoError("telemetry: write failed for " + path);
}

Metadata metadata_from_spec(const SyntheticCorpusSpec& spec) {
    Metadata md;
    for (std::size_t c = 0; c < spec.n_concepts; ++c) {
        MetadataEntry e;
        e.class_id = static_cast<std::int32_t>(c);
        e.name = "concept_" + std::to_string(c);
        for (const Vector& offset : spec.prompt_offsets[c]) {
            Vector prompt = spec.text_concepts[c];
            for (std::size_t i = 0; i < prompt.size(); ++i) prompt[i] += offset[i];
            e.prompts.push_back(std::move(prompt));
        }
        md.entries.push_back(std::move(e));
    }
    return md;
}

EvalSet eval_set_from_spec(const SyntheticCorpusSpec& spec, std::size_t n,
                           std::uint64_t eval_seed) {
    EvalSet set;
    set.items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(eval_seed, 0x6576616cULL + i);
        const std::size_t c = i % spec.n_concepts;
        EvalItem item;
        item.label = static_cast<std::int32_t>(c);
        item.raw_img = spec.image_concepts[c];
        for (double& x : item.raw_img) x += spec.noise_sigma * rng.next_gaussian();
        set.items.push_back(std::move(item));
    }
    return set;
}

double validate(const ModelParams& params, const EvalSet& eval_set, const Metadata& metadata) {
    return evaluate_accuracy(params, eval_set, metadata);
}

RunResult run_cit(const RunConfig& config_in) {
    RunConfig config = config_in;
    config.validate_and_finalize();

    const auto run_start = Clock::now();

    std::optional<SyntheticCorpusSpec> spec;
    Stream stream = [&] {
        if (config.synthetic) {
            spec = generate_spec(config.seeds.spec_seed, *config.synthetic);
            spec->stream_seed = config.seeds.stream_seed;
            return Stream::synthetic(*spec);
        }
        return Stream::from_jsonl(config.corpus_jsonl, config.seeds.stream_seed);
    }();

    const Metadata metadata =
        config.metadata_path.empty() ? metadata_from_spec(*spec)
                                     : load_metadata(config.metadata_path);
    const EvalSet eval_set =
        config.validation.eval_path.empty()
            ? eval_set_from_spec(*spec, config.validation.eval_n,
                                 mix_seed(config.seeds.spec_seed, 0x65ULL))
            : load_eval_jsonl(config.validation.eval_path);

    RunResult result;
    result.params = init_params(config.seeds.init_seed, config.dims);
    OptimState optim = init_optim(result.params);
    const std::uint64_t frozen_before = frozen_hash(result.params);

    const std::size_t budget = config.train.budget;
    const std::size_t cadence = config.train.cadence;
    std::unordered_set<std::int64_t> seen_ids;
    std::unordered_set<std::int64_t>* seen =
        config.curation.dedup ? &seen_ids : nullptr;

    auto flush = [&result, &config] {
        if (!config.telemetry_path.empty()) {
            write_telemetry_csv(config.telemetry_path, result.telemetry);
        }
    };

    // offline: one curation pass with the initial weights for the whole
    // budget's worth of pairs
    std::vector<PairRecord> offline_pool;
    if (config.mode == CurationMode::offline) {
        const auto t0 = Clock::now();
        CurationConfig big = config.curation;
        const std::size_t rounds = (budget + cadence - 1) / cadence;
        big.expected_pairs = rounds * config.curation.expected_pairs;
        big.max_raw_batches = config.curation.max_raw_batches * rounds;
        CurationOutcome outcome = curate(result.params, stream, metadata, big, seen);
        offline_pool = std::move(outcome.records);
        result.raw_seen += outcome.raw_seen;
        double ratio_sum = 0.0;
        for (double r : outcome.batch_ratios) ratio_sum += r;
        result.telemetry.push_back(TelemetryRow{
            TelemetryEvent::curation, 0,
            ratio_sum / static_cast<double>(outcome.batch_ratios.size()),
            outcome.fallback_count > 0 ? 1 : 0, std::nullopt, std::nullopt,
            std::exp(result.params.log_tau),
            config.record_wall_time ? elapsed_ms(t0) : 0});
    }

    std::size_t steps_done = 0;
    double last_val_acc = -1.0;
    bool have_val = false;
    std::size_t validations = 0;
    std::size_t offline_cursor = 0;

    try {
        while (steps_done < budget) {
            const std::size_t round_steps = std::min(cadence, budget - steps_done);
            const std::size_t round_pairs = round_steps * config.train.batch_size;

            std::vector<PairRecord> round_records;
            if (config.mode == CurationMode::online) {
                const auto t0 = Clock::now();
                CurationConfig round_cfg = config.curation;
                round_cfg.expected_pairs = round_pairs;
                CurationOutcome outcome = curate(result.params, stream, metadata, round_cfg, seen);
                result.raw_seen += outcome.raw_seen;
                outcome.records.resize(round_pairs);  // train exactly round_steps
                round_records = std::move(outcome.records);
                double ratio_sum = 0.0;
                for (double r : outcome.batch_ratios) ratio_sum += r;
                result.telemetry.push_back(TelemetryRow{
                    TelemetryEvent::curation, steps_done,
                    ratio_sum / static_cast<double>(outcome.batch_ratios.size()),
                    outcome.fallback_count > 0 ? 1 : 0, std::nullopt, std::nullopt,
                    std::exp(result.params.log_tau),
                    config.record_wall_time ? elapsed_ms(t0) : 0});
            } else if (config.mode == CurationMode::offline) {
                if (offline_cursor + round_pairs > offline_pool.size()) {
                    throw CurationStarvation("offline pool exhausted");
                }
                round_records.assign(offline_pool.begin() + offline_cursor,
                                     offline_pool.begin() + offline_cursor + round_pairs);
                offline_cursor += round_pairs;
            } else {
                round_records = stream.next_raw_batch(round_pairs);
                result.raw_seen += round_pairs;
            }

            const auto t0 = Clock::now();
            const TrainResult tr =
                train_on_curated(result.params, optim, round_records, config.train);
            steps_done += tr.steps_used;
            result.telemetry.push_back(TelemetryRow{
                TelemetryEvent::train, steps_done, std::nullopt, std::nullopt, tr.mean_loss,
                std::nullopt, std::exp(result.params.log_tau),
                config.record_wall_time ? elapsed_ms(t0) : 0});

            if (steps_done % config.validation.interval == 0) {
                const auto tv = Clock::now();
                const double acc = validate(result.params, eval_set, metadata);
                ++validations;
                result.telemetry.push_back(TelemetryRow{
                    TelemetryEvent::validation, steps_done, std::nullopt, std::nullopt,
                    std::nullopt, acc, std::exp(result.params.log_tau),
                    config.record_wall_time ? elapsed_ms(tv) : 0});
                result.best_val_accuracy = std::max(result.best_val_accuracy, acc);
                result.final_accuracy = acc;
                if (config.validation.early_stop && have_val && acc <= last_val_acc) {
                    result.early_stopped = true;
                    last_val_acc = acc;
                    break;
                }
                last_val_acc = acc;
                have_val = true;
            }
        }
    } catch (const NonFiniteLoss&) {
        flush();
        throw;
    }

    result.total_steps = steps_done;

    // terminal validation when the run did not stop on a validation boundary
    if (!have_val || steps_done % config.validation.interval != 0) {
        const auto tv = Clock::now();
        const double acc = validate(result.params, eval_set, metadata);
        result.telemetry.push_back(TelemetryRow{
            TelemetryEvent::validation, steps_done, std::nullopt, std::nullopt, std::nullopt,
            acc, std::exp(result.params.log_tau),
            config.record_wall_time ? elapsed_ms(tv) : 0});
        result.best_val_accuracy = std::max(result.best_val_accuracy, acc);
        result.final_accuracy = acc;
    }

    if (frozen_hash(result.params) != frozen_before) {
        throw std::logic_error("frozen backbone changed during the run");
    }

    double ratio_sum = 0.0;
    std::size_t ratio_count = 0;
    for (const TelemetryRow& r : result.telemetry) {
        if (r.event == TelemetryEvent::curation && r.ratio) {
            ratio_sum += *r.ratio;
            ++ratio_count;
        }
    }
    if (ratio_count > 0) result.avg_curation_ratio = ratio_sum / static_cast<double>(ratio_count);

    result.total_wall_ms = elapsed_ms(run_start);
    flush();
    if (!config.checkpoint_path.empty()) {
        save_checkpoint(config.checkpoint_path, result.params, steps_done);
    }
    return result;
}

}  // namespace cct
