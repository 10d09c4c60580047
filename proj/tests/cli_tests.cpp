// End-to-end checks of the installed CLI binary (path injected by CMake).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct CommandResult {
    int status = -1;
    std::string output;
};

CommandResult run_cli(const std::string& args) {
    const std::string cmd = std::string(CCT_CLI_PATH) + " " + args + " 2>/dev/null";
    std::array<char, 4096> buf{};
    CommandResult result;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe) != nullptr) result.output += buf.data();
    const int rc = pclose(pipe);
    result.status = WEXITSTATUS(rc);
    return result;
}

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "cct_cli_tests";
    fs::create_directories(dir);
    return dir;
}

std::string write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    return path.string();
}

nlohmann::json small_run_config(const fs::path& dir) {
    return nlohmann::json{
        {"dims",
         {{"raw_img", 16}, {"raw_txt", 16}, {"backbone", 12}, {"hidden", 12}, {"embed", 8}}},
        {"corpus",
         {{"type", "synthetic"},
          {"n_concepts", 4},
          {"fractions", {0.4, 0.4, 0.2}},
          {"noise_sigma", 0.1}}},
        {"curation", {{"t", 0.4}, {"gamma", 0.05}, {"batch", 64}}},
        {"train",
         {{"batch_size", 8},
          {"cadence", 10},
          {"budget", 30},
          {"lr", {{"base", 5e-3}, {"min", 1e-4}, {"warmup_fraction", 0.0}}}}},
        {"eval", {{"interval", 10}, {"early_stop", false}, {"n", 64}}},
        {"mode", "online"},
        {"seeds", {{"spec", 5}, {"stream", 6}, {"init", 7}}},
        {"out", {{"telemetry", (dir / "telemetry.csv").string()}}},
    };
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("gen-data writes corpus, metadata and eval deterministically") {
    const fs::path dir = work_dir();
    const std::string spec = write_json(dir / "spec.json",
                                        {{"n_concepts", 4},
                                         {"raw_img_dim", 16},
                                         {"raw_txt_dim", 16},
                                         {"fractions", {0.4, 0.4, 0.2}},
                                         {"noise_sigma", 0.1}});

    const std::string corpus = (dir / "corpus.jsonl").string();
    const auto first = run_cli("gen-data --spec " + spec + " --out " + corpus +
                               " --n 200 --seed 9 --eval-n 40");
    CHECK(first.status == 0);

    std::ifstream in(corpus);
    std::size_t lines = 0;
    std::string line;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 200);
    CHECK(fs::exists(dir / "corpus.metadata.json"));
    CHECK(fs::exists(dir / "corpus.eval.jsonl"));

    const std::string snapshot = slurp(corpus);
    const auto second = run_cli("gen-data --spec " + spec + " --out " + corpus +
                                " --n 200 --seed 9 --eval-n 40");
    CHECK(second.status == 0);
    CHECK(slurp(corpus) == snapshot);

    const auto bad = run_cli("gen-data --spec " + spec + " --out " + corpus + " --n 0");
    CHECK(bad.status == 3);
}

TEST_CASE("run emits a summary line, telemetry and checkpoint") {
    const fs::path dir = work_dir();
    nlohmann::json cfg = small_run_config(dir);
    cfg["out"]["checkpoint"] = (dir / "model.ckpt").string();
    const std::string config = write_json(dir / "run.json", cfg);

    const auto result = run_cli("run --config " + config);
    CHECK(result.status == 0);
    const nlohmann::json summary = nlohmann::json::parse(result.output);
    CHECK(summary.at("steps").get<int>() == 30);
    CHECK(summary.contains("final_acc"));
    CHECK(summary.contains("avg_ratio"));
    CHECK(fs::exists(dir / "telemetry.csv"));
    CHECK(fs::exists(dir / "model.ckpt"));

    // eval on the run's checkpoint agrees with an in-run validation range
    const std::string spec = write_json(dir / "spec.json",
                                        {{"n_concepts", 4},
                                         {"raw_img_dim", 16},
                                         {"raw_txt_dim", 16},
                                         {"fractions", {0.4, 0.4, 0.2}},
                                         {"noise_sigma", 0.1}});
    const std::string corpus = (dir / "ev_corpus.jsonl").string();
    run_cli("gen-data --spec " + spec + " --out " + corpus + " --n 10 --seed 5 --eval-n 40");
    const auto eval = run_cli("eval --checkpoint " + (dir / "model.ckpt").string() + " --eval " +
                              (dir / "ev_corpus.eval.jsonl").string() + " --metadata " +
                              (dir / "ev_corpus.metadata.json").string());
    CHECK(eval.status == 0);
    CHECK(nlohmann::json::parse(eval.output).contains("accuracy"));
}

TEST_CASE("missing config exits with status 3") {
    const auto result = run_cli("run --config /nonexistent/nope.json");
    CHECK(result.status == 3);
}

TEST_CASE("lower thresholds curate a larger share of the stream") {
    const fs::path dir = work_dir();
    const std::string config = write_json(dir / "ratio.json", [&] {
        nlohmann::json j = small_run_config(dir);
        j["out"]["telemetry"] = "";
        return j;
    }());

    const auto low = run_cli("run --config " + config + " --t 0.3");
    const auto high = run_cli("run --config " + config + " --t 0.7");
    CHECK(low.status == 0);
    CHECK(high.status == 0);
    const double low_ratio = nlohmann::json::parse(low.output).at("avg_ratio").get<double>();
    const double high_ratio = nlohmann::json::parse(high.output).at("avg_ratio").get<double>();
    CHECK(low_ratio > high_ratio);
}

TEST_CASE("mode none on a high-distractor corpus terminates") {
    const fs::path dir = work_dir();
    nlohmann::json cfg = small_run_config(dir);
    cfg["corpus"]["fractions"] = {0.05, 0.6, 0.35};
    cfg["corpus"]["distractor_txt_scale"] = 1000.0;
    cfg["out"]["telemetry"] = "";
    const std::string config = write_json(dir / "none.json", cfg);

    const auto result = run_cli("run --config " + config + " --mode none");
    CHECK((result.status == 0 || result.status == 2));
}

TEST_CASE("sweep runs the cross product and dedups values") {
    const fs::path dir = work_dir();
    nlohmann::json cfg = small_run_config(dir);
    cfg["out"]["telemetry"] = "";
    const std::string config = write_json(dir / "sweep.json", cfg);
    const std::string out = (dir / "sweep.csv").string();

    const auto result = run_cli("sweep --config " + config +
                                " --param t --values 0.4,0.5,0.4 --seeds 2 --out " + out);
    CHECK(result.status == 0);

    std::ifstream in(out);
    std::string header;
    std::getline(in, header);
    CHECK(header == "param_value,seed,final_acc,best_acc,steps,avg_ratio");
    std::vector<std::string> rows;
    std::string line;
    while (std::getline(in, line)) rows.push_back(line);
    CHECK(rows.size() == 4);  // 2 unique values x 2 seeds
    CHECK(rows[0].substr(0, 6) == "0.4,0,");
    CHECK(rows[3].substr(0, 6) == "0.5,1,");

    const auto bad = run_cli("sweep --config " + config + " --param nope --values 1 --out " + out);
    CHECK(bad.status == 3);
}

TEST_CASE("coverage writes a per-class csv") {
    const fs::path dir = work_dir();
    nlohmann::json cfg = small_run_config(dir);
    cfg["out"]["telemetry"] = "";
    const std::string config = write_json(dir / "cov.json", cfg);
    const std::string out = (dir / "coverage.csv").string();

    const auto result = run_cli("coverage --config " + config + " --n 500 --t 0.4 --out " + out);
    CHECK(result.status == 0);
    const nlohmann::json summary = nlohmann::json::parse(result.output);
    CHECK(summary.at("sample_size").get<int>() == 500);

    std::ifstream in(out);
    std::string header;
    std::getline(in, header);
    CHECK(header == "class_id,name,count,keep_rate");
    std::size_t count_sum = 0;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find(',');
        const auto second = line.find(',', first + 1);
        const auto third = line.find(',', second + 1);
        count_sum += std::stoul(line.substr(second + 1, third - second - 1));
    }
    CHECK(count_sum == 500);
}
