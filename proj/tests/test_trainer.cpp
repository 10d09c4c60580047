#include <doctest.h>

#include <cmath>

#include "cct/data_source.hpp"
#include "cct/rng.hpp"
#include "cct/trainer.hpp"

using namespace cct;

namespace {

const ModelDims kDims{12, 12, 10, 10, 6};

std::vector<PairRecord> clean_records(std::size_t n, std::uint64_t seed, std::size_t concepts,
                                      double sigma) {
    SyntheticSpecParams p;
    p.n_concepts = concepts;
    p.raw_img_dim = kDims.raw_img_dim;
    p.raw_txt_dim = kDims.raw_txt_dim;
    p.clean_fraction = 1.0;
    p.distractor_fraction = 0.0;
    p.foreign_fraction = 0.0;
    p.noise_sigma = sigma;
    Stream stream = Stream::synthetic(generate_spec(seed, p));
    return stream.next_raw_batch(n);
}

TrainConfig config_with_lr(double lr, std::size_t total_steps) {
    TrainConfig c;
    c.batch_size = 8;
    c.schedule.base_lr = lr;
    c.schedule.min_lr = lr;
    c.schedule.warmup_fraction = 0.0;
    c.schedule.total_steps = total_steps;
    c.budget = total_steps;
    c.cadence = total_steps;
    return c;
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("steps_used follows the floor rule") {
    ModelParams params = init_params(3, kDims);
    OptimState optim = init_optim(params);
    const auto records = clean_records(20, 5, 4, 0.05);  // 2.5x batch_size
    const TrainConfig config = config_with_lr(1e-3, 100);

    const TrainResult result = train_on_curated(params, optim, records, config);
    CHECK(result.steps_used == 2);
    CHECK(optim.step == 2);
    CHECK(std::isfinite(result.mean_loss));

    // floor rule across a few sizes
    for (const std::size_t n : {std::size_t{8}, std::size_t{15}, std::size_t{31}}) {
        ModelParams p2 = init_params(3, kDims);
        OptimState o2 = init_optim(p2);
        const auto recs = clean_records(n, 6, 4, 0.05);
        CHECK(train_on_curated(p2, o2, recs, config).steps_used == n / 8);
    }

    CHECK_THROWS_AS(train_on_curated(params, optim, clean_records(4, 7, 4, 0.05), config),
                    ConfigError);
}

TEST_CASE("zero learning rate reports loss but moves nothing") {
    const ModelParams before = init_params(4, kDims);
    ModelParams params = before;
    OptimState optim = init_optim(params);
    const auto records = clean_records(16, 8, 4, 0.05);

    const TrainResult result = train_on_curated(params, optim, records, config_with_lr(0.0, 10));
    CHECK(result.steps_used == 2);
    CHECK(std::isfinite(result.mean_loss));
    CHECK(params.tower_w1 == before.tower_w1);
    CHECK(params.text_proj == before.text_proj);
    CHECK(params.log_tau == before.log_tau);
}

TEST_CASE("loss collapses on a zero-noise curated set") {
    ModelParams params = init_params(5, kDims);
    OptimState optim = init_optim(params);

    TrainConfig config = config_with_lr(1e-2, 200);
    config.batch_size = 4;

    // cycle the 4 concepts so every batch holds each concept exactly once
    // (zero noise means duplicated concepts would floor the loss at ln 2)
    SyntheticSpecParams p;
    p.n_concepts = 4;
    p.raw_img_dim = kDims.raw_img_dim;
    p.raw_txt_dim = kDims.raw_txt_dim;
    p.clean_fraction = 1.0;
    p.distractor_fraction = 0.0;
    p.foreign_fraction = 0.0;
    p.noise_sigma = 0.0;
    const SyntheticCorpusSpec spec = generate_spec(9, p);
    std::vector<PairRecord> records;
    for (std::size_t i = 0; i < 4 * 200; ++i) {
        PairRecord r;
        r.id = static_cast<std::int64_t>(i);
        r.raw_img = spec.image_concepts[i % 4];
        r.raw_txt = spec.text_concepts[i % 4];
        records.push_back(std::move(r));
    }

    const Batch first = make_batch(std::span(records).subspan(0, 4), kDims);
    const auto [initial_loss, g0] = compute_grads(params, first, Objective::img2txt);

    const TrainResult result = train_on_curated(params, optim, records, config);
    CHECK(result.steps_used == 200);

    const auto [final_loss, g1] = compute_grads(params, first, Objective::img2txt);
    CHECK(final_loss < 0.1 * initial_loss);
}

TEST_CASE("replay with identical inputs is bit-identical") {
    const auto records = clean_records(64, 10, 4, 0.1);
    const TrainConfig config = config_with_lr(5e-3, 20);

    ModelParams a = init_params(11, kDims);
    OptimState oa = init_optim(a);
    train_on_curated(a, oa, records, config);

    ModelParams b = init_params(11, kDims);
    OptimState ob = init_optim(b);
    train_on_curated(b, ob, records, config);

    CHECK(a.tower_w1 == b.tower_w1);
    CHECK(a.tower_b1 == b.tower_b1);
    CHECK(a.tower_w2 == b.tower_w2);
    CHECK(a.vision_proj == b.vision_proj);
    CHECK(a.text_proj == b.text_proj);
    CHECK(a.log_tau == b.log_tau);
}

TEST_SUITE_END();
