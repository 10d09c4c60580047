#include "cct/trainer.hpp"

#include <algorithm>

namespace cct {

void TrainConfig::validate() const {
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
    if (cadence == 0) throw ConfigError("train: cadence must be >= 1");
    if (budget == 0) throw ConfigError("train: budget must be >= 1");
    schedule.validate();
}

Batch make_batch(std::span<const PairRecord> records, const ModelDims& dims) {
    Batch batch;
    batch.raw_img = Matrix(records.size(), dims.raw_img_dim);
    batch.raw_txt = Matrix(records.size(), dims.raw_txt_dim);
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].raw_img.size() != dims.raw_img_dim ||
            records[i].raw_txt.size() != dims.raw_txt_dim) {
            throw ShapeError("make_batch: record " + std::to_string(records[i].id) +
                             " does not match the model dims");
        }
        std::copy(records[i].raw_img.begin(), records[i].raw_img.end(),
                  batch.raw_img.row(i).begin());
        std::copy(records[i].raw_txt.begin(), records[i].raw_txt.end(),
                  batch.raw_txt.row(i).begin());
    }
    return batch;
}

TrainResult train_on_curated(ModelParams& params, OptimState& optim,
                             std::span<const PairRecord> curated, const TrainConfig& config) {
    config.validate();
    if (curated.size() < config.batch_size) {
        throw ConfigError("train_on_curated: curated set smaller than one batch");
    }
    const std::size_t n_batches = curated.size() / config.batch_size;
    TrainResult result;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
        const Batch batch =
            make_batch(curated.subspan(b * config.batch_size, config.batch_size), params.dims);
        loss_sum += backward_and_step(params, optim, config.schedule, batch, config.objective);
        ++result.steps_used;
    }
    result.mean_loss = loss_sum / static_cast<double>(n_batches);
    return result;
}

}  // namespace cct
