#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "cct/linalg.hpp"
#include "cct/losses.hpp"
#include "cct/optim.hpp"

namespace cct {

struct ModelDims {
    std::size_t raw_img_dim = 32;
    std::size_t raw_txt_dim = 32;
    std::size_t backbone_dim = 24;
    std::size_t hidden_dim = 24;
    std::size_t embed_dim = 16;

    void validate() const;
};

// Dual-tower model. The two frozen maps stand in for pretrained backbones
// and never change after init; text tower, both projections and the log
// logit scale are trainable.
struct ModelParams {
    ModelDims dims;
    std::uint64_t seed = 0;
    Matrix frozen_vision_map;  // raw_img_dim x backbone_dim
    Matrix frozen_text_map;    // raw_txt_dim x hidden_dim
    Matrix tower_w1;           // hidden_dim x hidden_dim
    Vector tower_b1;           // hidden_dim
    Matrix tower_w2;           // hidden_dim x hidden_dim
    Vector tower_b2;           // hidden_dim
    Matrix vision_proj;        // backbone_dim x embed_dim
    Matrix text_proj;          // hidden_dim x embed_dim
    double log_tau = 0.0;
};

// Gaussian init scaled by 1/sqrt(fan_in); biases zero; exp(log_tau) = 1/0.07.
// Deterministic per seed.
ModelParams init_params(std::uint64_t seed, const ModelDims& dims);

struct TextForward {
    Matrix pooled;     // n x hidden_dim, not normalized
    Matrix projected;  // n x embed_dim, rows unit norm
};

// pooled = tanh(tanh(raw·F_t·W1 + b1)·W2 + b2); projected = rownorm(pooled·W_tp).
TextForward forward_text(const ModelParams& params, const Matrix& raw_txt);

// rownorm((raw·F_v)·W_vp); no trainable backbone.
Matrix forward_vision(const ModelParams& params, const Matrix& raw_img);

// FNV-1a over the bytes of both frozen maps.
std::uint64_t frozen_hash(const ModelParams& params);

enum class Objective { img2txt, bidirectional };

struct Batch {
    Matrix raw_img;
    Matrix raw_txt;
};

struct TrainableGrads {
    Matrix tower_w1;
    Vector tower_b1;
    Matrix tower_w2;
    Vector tower_b2;
    Matrix vision_proj;
    Matrix text_proj;
    double log_tau = 0.0;
};

// Loss and exact gradients for every trainable tensor, backpropagated
// through normalization, projections and the text tower.
std::pair<double, TrainableGrads> compute_grads(const ModelParams& params, const Batch& batch,
                                                Objective objective);

struct OptimState {
    Moments tower_w1, tower_b1, tower_w2, tower_b2;
    Moments vision_proj, text_proj, log_tau;
    std::size_t step = 0;
};

OptimState init_optim(const ModelParams& params);

// One forward/backward/AdamW step at the schedule's rate for the new step
// count. Per-group decay: projections weight_decay_proj, tower weights
// weight_decay_other, biases and log_tau undecayed. exp(log_tau) is clamped
// to [1, 100] afterwards. Throws NonFiniteLoss if the loss is not finite.
double backward_and_step(ModelParams& params, OptimState& optim, const ScheduleConfig& schedule,
                         const Batch& batch, Objective objective);

void save_checkpoint(const std::string& path, const ModelParams& params, std::uint64_t step);
std::pair<ModelParams, std::uint64_t> load_checkpoint(const std::string& path);

}  // namespace cct
