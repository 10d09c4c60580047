#pragma once

#include <span>

#include "cct/data_source.hpp"
#include "cct/model.hpp"

namespace cct {

struct TrainConfig {
    std::size_t batch_size = 64;
    Objective objective = Objective::img2txt;
    ScheduleConfig schedule;
    std::size_t budget = 5000;
    std::size_t cadence = 100;  // steps between curation rounds

    void validate() const;
};

struct TrainResult {
    std::size_t steps_used = 0;
    double mean_loss = 0.0;
};

// Consumes the curated records in pull order as floor(n/batch_size) full
// batches (trailing remainder dropped), one optimizer step per batch.
TrainResult train_on_curated(ModelParams& params, OptimState& optim,
                             std::span<const PairRecord> curated, const TrainConfig& config);

// Stacks records into a training batch.
Batch make_batch(std::span<const PairRecord> records, const ModelDims& dims);

}  // namespace cct
