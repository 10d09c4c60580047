#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cct/driver.hpp"
#include "cct/rng.hpp"

namespace {

constexpr int kExitNonFiniteLoss = 2;
constexpr int kExitConfigError = 3;

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

struct RunOverrides {
    std::string mode;
    std::string objective;
    std::string feature;
    double threshold = -2.0;
    double gamma = -1.0;
    long cadence = -1;
    long budget = -1;
    long spec_seed = -1, stream_seed = -1, init_seed = -1;
    std::string telemetry, checkpoint;
    bool timing = false;
};

nlohmann::json load_config_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw cct::ConfigError("cannot open config " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw cct::ConfigError("invalid JSON in " + path);
    return j;
}

void apply_overrides(nlohmann::json& j, const RunOverrides& o) {
    if (!o.mode.empty()) j["mode"] = o.mode;
    if (!o.objective.empty()) j["train"]["objective"] = o.objective;
    if (!o.feature.empty()) j["curation"]["feature"] = o.feature;
    if (o.threshold > -2.0) j["curation"]["t"] = o.threshold;
    if (o.gamma >= 0.0) j["curation"]["gamma"] = o.gamma;
    if (o.cadence >= 0) j["train"]["cadence"] = o.cadence;
    if (o.budget >= 0) j["train"]["budget"] = o.budget;
    if (o.spec_seed >= 0) j["seeds"]["spec"] = o.spec_seed;
    if (o.stream_seed >= 0) j["seeds"]["stream"] = o.stream_seed;
    if (o.init_seed >= 0) j["seeds"]["init"] = o.init_seed;
    if (!o.telemetry.empty()) j["out"]["telemetry"] = o.telemetry;
    if (!o.checkpoint.empty()) j["out"]["checkpoint"] = o.checkpoint;
    if (o.timing) j["out"]["timing"] = true;
}

nlohmann::json run_summary(const cct::RunResult& result) {
    nlohmann::json out{
        {"final_acc", result.final_accuracy},
        {"best_acc", result.best_val_accuracy},
        {"steps", result.total_steps},
        {"raw_seen", result.raw_seen},
        {"early_stopped", result.early_stopped},
        {"total_ms", result.total_wall_ms},
    };
    if (result.avg_curation_ratio) {
        out["avg_ratio"] = *result.avg_curation_ratio;
    } else {
        out["avg_ratio"] = nullptr;
    }
    return out;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_path, long n,
                 long seed, long eval_n) {
    if (n <= 0) throw cct::ConfigError("gen-data: --n must be >= 1");
    nlohmann::json j = load_config_json(spec_path);

    cct::SyntheticSpecParams p;
    p.n_concepts = j.value("n_concepts", p.n_concepts);
    p.raw_img_dim = j.value("raw_img_dim", p.raw_img_dim);
    p.raw_txt_dim = j.value("raw_txt_dim", p.raw_txt_dim);
    if (j.contains("fractions")) {
        const auto f = j.at("fractions").get<std::vector<double>>();
        if (f.size() != 3) throw cct::ConfigError("gen-data: fractions must have 3 entries");
        p.clean_fraction = f[0];
        p.distractor_fraction = f[1];
        p.foreign_fraction = f[2];
    }
    p.noise_sigma = j.value("noise_sigma", p.noise_sigma);
    p.distractor_txt_scale = j.value("distractor_txt_scale", p.distractor_txt_scale);
    p.prompts_per_concept = j.value("prompts_per_concept", p.prompts_per_concept);
    p.prompt_sigma = j.value("prompt_sigma", p.prompt_sigma);

    const cct::SyntheticCorpusSpec spec =
        cct::generate_spec(static_cast<std::uint64_t>(seed), p);

    std::vector<cct::PairRecord> records;
    records.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) records.push_back(cct::synthetic_record(spec, i));
    cct::write_jsonl(out_path, records);

    const std::string stem = out_path.substr(0, out_path.find_last_of('.'));
    const std::string metadata_path = stem + ".metadata.json";
    const std::string eval_path = stem + ".eval.jsonl";
    cct::save_metadata(metadata_path, cct::metadata_from_spec(spec));
    cct::write_eval_jsonl(
        eval_path, cct::eval_set_from_spec(spec, static_cast<std::size_t>(eval_n),
                                           cct::mix_seed(static_cast<std::uint64_t>(seed), 0x65)));

    nlohmann::json summary{{"corpus", out_path},
                           {"metadata", metadata_path},
                           {"eval", eval_path},
                           {"records", n}};
    std::cout << summary.dump() << std::endl;
    return 0;
}

int cmd_run(const std::string& config_path, const RunOverrides& overrides) {
    nlohmann::json j = load_config_json(config_path);
    apply_overrides(j, overrides);
    const cct::RunConfig config = cct::run_config_from_json(j);
    const cct::RunResult result = cct::run_cit(config);
    std::cout << run_summary(result).dump() << std::endl;
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& eval_path,
             const std::string& metadata_path) {
    const auto [params, step] = cct::load_checkpoint(checkpoint_path);
    const cct::EvalSet eval_set = cct::load_eval_jsonl(eval_path);
    const cct::Metadata metadata = cct::load_metadata(metadata_path);
    const double acc = cct::evaluate_accuracy(params, eval_set, metadata);
    nlohmann::json out{{"accuracy", acc}, {"items", eval_set.items.size()}, {"step", step}};
    std::cout << out.dump() << std::endl;
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& param,
              const std::string& values_csv, long n_seeds, const std::string& out_path) {
    if (n_seeds <= 0) throw cct::ConfigError("sweep: --seeds must be >= 1");

    std::vector<std::string> values;
    std::string token;
    for (char c : values_csv) {
        if (c == ',') {
            if (!token.empty()) values.push_back(token);
            token.clear();
        } else {
            token += c;
        }
    }
    if (!token.empty()) values.push_back(token);
    if (values.empty()) throw cct::ConfigError("sweep: --values is empty");
    // duplicates collapse, first occurrence wins the ordering
    std::vector<std::string> unique_values;
    for (const auto& v : values) {
        if (std::find(unique_values.begin(), unique_values.end(), v) == unique_values.end()) {
            unique_values.push_back(v);
        }
    }

    const nlohmann::json base = load_config_json(config_path);
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw cct::ConfigError("sweep: cannot open " + out_path + " for writing");
    out << "param_value,seed,final_acc,best_acc,steps,avg_ratio\n";

    for (const std::string& value : unique_values) {
        for (long s = 0; s < n_seeds; ++s) {
            nlohmann::json j = base;
            if (param == "t") {
                j["curation"]["t"] = std::stod(value);
            } else if (param == "gamma") {
                j["curation"]["gamma"] = std::stod(value);
            } else if (param == "cadence") {
                j["train"]["cadence"] = std::stol(value);
            } else if (param == "mode") {
                j["mode"] = value;
            } else if (param == "objective") {
                j["train"]["objective"] = value;
            } else if (param == "feature") {
                j["curation"]["feature"] = value;
            } else {
                throw cct::ConfigError("sweep: unknown param " + param);
            }
            auto bump = [&j, s](const char* key, std::uint64_t fallback) {
                const std::uint64_t base_seed =
                    j.contains("seeds") && j["seeds"].contains(key)
                        ? j["seeds"][key].get<std::uint64_t>()
                        : fallback;
                j["seeds"][key] = base_seed + static_cast<std::uint64_t>(s);
            };
            bump("spec", 1);
            bump("stream", 2);
            bump("init", 3);
            j["out"]["telemetry"] = "";
            j["out"]["checkpoint"] = "";

            const cct::RunConfig config = cct::run_config_from_json(j);
            const cct::RunResult result = cct::run_cit(config);
            out << value << ',' << s << ',' << format_double(result.final_accuracy) << ','
                << format_double(result.best_val_accuracy) << ',' << result.total_steps << ',';
            if (result.avg_curation_ratio) out << format_double(*result.avg_curation_ratio);
            out << '\n';
        }
    }
    std::cout << nlohmann::json{{"sweep", out_path},
                                {"rows", unique_values.size() * static_cast<std::size_t>(n_seeds)}}
                     .dump()
              << std::endl;
    return 0;
}

int cmd_coverage(const std::string& config_path, long n, double threshold,
                 const std::string& checkpoint_path, const std::string& out_path) {
    if (n <= 0) throw cct::ConfigError("coverage: --n must be >= 1");
    const cct::RunConfig config = cct::run_config_from_json(load_config_json(config_path));

    cct::ModelParams params = checkpoint_path.empty()
                                  ? cct::init_params(config.seeds.init_seed, config.dims)
                                  : cct::load_checkpoint(checkpoint_path).first;

    std::optional<cct::SyntheticCorpusSpec> spec;
    cct::Stream stream = [&] {
        if (config.synthetic) {
            spec = cct::generate_spec(config.seeds.spec_seed, *config.synthetic);
            spec->stream_seed = config.seeds.stream_seed;
            return cct::Stream::synthetic(*spec);
        }
        return cct::Stream::from_jsonl(config.corpus_jsonl, config.seeds.stream_seed);
    }();
    const cct::Metadata metadata = config.metadata_path.empty()
                                       ? cct::metadata_from_spec(*spec)
                                       : cct::load_metadata(config.metadata_path);

    const cct::TextBatch batch = stream.next_text_batch(static_cast<std::size_t>(n));
    const cct::TextForward fwd = cct::forward_text(params, batch.texts);
    const cct::Matrix& staged =
        config.curation.feature_stage == cct::FeatureStage::pooled ? fwd.pooled : fwd.projected;
    const cct::Matrix meta_emb =
        cct::embed_metadata_for_curation(params, metadata, config.curation.feature_stage);
    const cct::TextScores scores = cct::score_texts(staged, meta_emb);
    const cct::CoverageStats stats = cct::coverage_stats(scores, metadata, threshold);
    cct::write_coverage_csv(out_path, stats);

    nlohmann::json out{{"coverage", out_path},
                       {"sample_size", stats.sample_size},
                       {"total_keep_rate", stats.total_keep_rate}};
    std::cout << out.dump() << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stream-curated contrastive training engine"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "materialize a synthetic corpus to JSONL");
    std::string gen_spec, gen_out;
    long gen_n = 0, gen_seed = 1, gen_eval_n = 800;
    gen->add_option("--spec", gen_spec, "corpus spec JSON")->required();
    gen->add_option("--out", gen_out, "output corpus JSONL path")->required();
    gen->add_option("--n", gen_n, "number of records")->required();
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--eval-n", gen_eval_n, "eval set size");

    auto* run = app.add_subcommand("run", "execute one training run");
    std::string run_config;
    RunOverrides overrides;
    run->add_option("--config", run_config, "run config JSON")->required();
    run->add_option("--mode", overrides.mode, "online|offline|none");
    run->add_option("--objective", overrides.objective, "img2txt|bidirectional");
    run->add_option("--feature", overrides.feature, "pooled|projected");
    run->add_option("--t", overrides.threshold, "curation threshold");
    run->add_option("--gamma", overrides.gamma, "minimal curation ratio");
    run->add_option("--cadence", overrides.cadence, "steps between curation rounds");
    run->add_option("--budget", overrides.budget, "training budget in steps");
    run->add_option("--spec-seed", overrides.spec_seed, "concept direction seed");
    run->add_option("--stream-seed", overrides.stream_seed, "stream seed");
    run->add_option("--init-seed", overrides.init_seed, "parameter init seed");
    run->add_option("--telemetry", overrides.telemetry, "telemetry CSV path");
    run->add_option("--checkpoint", overrides.checkpoint, "checkpoint path");
    run->add_flag("--timing", overrides.timing, "record wall-clock ms in telemetry");

    auto* eval = app.add_subcommand("eval", "zero-shot accuracy of a checkpoint");
    std::string eval_ckpt, eval_set_path, eval_meta;
    eval->add_option("--checkpoint", eval_ckpt)->required();
    eval->add_option("--eval", eval_set_path)->required();
    eval->add_option("--metadata", eval_meta)->required();

    auto* sweep = app.add_subcommand("sweep", "run a parameter/seed cross product");
    std::string sweep_config, sweep_param, sweep_values, sweep_out = "sweep.csv";
    long sweep_seeds = 1;
    sweep->add_option("--config", sweep_config)->required();
    sweep->add_option("--param", sweep_param, "t|gamma|cadence|mode|objective|feature")
        ->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->required();
    sweep->add_option("--seeds", sweep_seeds, "seed variants per value");
    sweep->add_option("--out", sweep_out, "summary CSV path");

    auto* coverage = app.add_subcommand("coverage", "task-coverage stats of a raw text sample");
    std::string cov_config, cov_ckpt, cov_out = "coverage.csv";
    long cov_n = 10000;
    double cov_t = 0.55;
    coverage->add_option("--config", cov_config)->required();
    coverage->add_option("--n", cov_n, "sample size");
    coverage->add_option("--t", cov_t, "keep-rate threshold");
    coverage->add_option("--checkpoint", cov_ckpt, "score with these weights (default: init)");
    coverage->add_option("--out", cov_out, "coverage CSV path");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_data(gen_spec, gen_out, gen_n, gen_seed, gen_eval_n);
        if (run->parsed()) return cmd_run(run_config, overrides);
        if (eval->parsed()) return cmd_eval(eval_ckpt, eval_set_path, eval_meta);
        if (sweep->parsed()) {
            return cmd_sweep(sweep_config, sweep_param, sweep_values, sweep_seeds, sweep_out);
        }
        if (coverage->parsed()) return cmd_coverage(cov_config, cov_n, cov_t, cov_ckpt, cov_out);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const cct::NonFiniteLoss& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitNonFiniteLoss;
    } catch (const cct::ConfigError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitConfigError;
    } catch (const cct::ParseError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitConfigError;
    } catch (const cct::IoError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
}
