#include "cct/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cct/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace cct {

namespace {

void fill_gaussian(Matrix& m, std::size_t fan_in, Rng& rng) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : m.data()) x = scale * rng.next_gaussian();
}

Matrix add_bias_rows(const Matrix& m, const Vector& bias) {
    Matrix out = m;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias[j];
    }
    return out;
}

void tanh_inplace(Matrix& m) {
    for (double& x : m.data()) x = std::tanh(x);
}

// grad wrt pre-normalization rows: (g - (g·u)u) / ||z|| per row.
Matrix normalization_backward(const Matrix& pre_norm, const Matrix& normalized,
                              const Matrix& grad_normalized) {
    Matrix out(pre_norm.rows(), pre_norm.cols());
    for (std::size_t i = 0; i < pre_norm.rows(); ++i) {
        const double r = norm(pre_norm.row(i));
        const double gu = dot(grad_normalized.row(i), normalized.row(i));
        for (std::size_t j = 0; j < pre_norm.cols(); ++j) {
            out(i, j) = (grad_normalized(i, j) - gu * normalized(i, j)) / r;
        }
    }
    return out;
}

Vector column_sums(const Matrix& m) {
    Vector out(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out[j] += m(i, j);
    }
    return out;
}

constexpr double kLogTauMin = 0.0;                   // exp = 1
const double kLogTauMax = std::log(100.0);           // exp = 100

void write_f64_block(std::ofstream& out, const std::vector<double>& values) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::vector<double> read_f64_block(std::ifstream& in, std::size_t count) {
    std::vector<double> values(count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IoError("checkpoint: truncated tensor data");
    return values;
}

}  // namespace

void ModelDims::validate() const {
    if (raw_img_dim == 0 || raw_txt_dim == 0 || backbone_dim == 0 || hidden_dim == 0 ||
        embed_dim == 0) {
        throw ConfigError("dims: every dimension must be >= 1");
    }
}

ModelParams init_params(std::uint64_t seed, const ModelDims& dims) {
    dims.validate();
    Rng rng(seed, /*stream=*/0x6d6f64656cULL);

    ModelParams p;
    p.dims = dims;
    p.seed = seed;
    p.frozen_vision_map = Matrix(dims.raw_img_dim, dims.backbone_dim);
    fill_gaussian(p.frozen_vision_map, dims.raw_img_dim, rng);
    p.frozen_text_map = Matrix(dims.raw_txt_dim, dims.hidden_dim);
    fill_gaussian(p.frozen_text_map, dims.raw_txt_dim, rng);
    p.tower_w1 = Matrix(dims.hidden_dim, dims.hidden_dim);
    fill_gaussian(p.tower_w1, dims.hidden_dim, rng);
    p.tower_b1 = Vector(dims.hidden_dim, 0.0);
    p.tower_w2 = Matrix(dims.hidden_dim, dims.hidden_dim);
    fill_gaussian(p.tower_w2, dims.hidden_dim, rng);
    p.tower_b2 = Vector(dims.hidden_dim, 0.0);
    p.vision_proj = Matrix(dims.backbone_dim, dims.embed_dim);
    fill_gaussian(p.vision_proj, dims.backbone_dim, rng);
    p.text_proj = Matrix(dims.hidden_dim, dims.embed_dim);
    fill_gaussian(p.text_proj, dims.hidden_dim, rng);
    p.log_tau = std::log(1.0 / 0.07);
    return p;
}

TextForward forward_text(const ModelParams& params, const Matrix& raw_txt) {
    if (raw_txt.cols() != params.dims.raw_txt_dim) {
        throw ShapeError("forward_text: expected " + std::to_string(params.dims.raw_txt_dim) +
                         " columns, got " + std::to_string(raw_txt.cols()));
    }
    Matrix x0 = matmul(raw_txt, params.frozen_text_map);
    Matrix h1 = add_bias_rows(matmul(x0, params.tower_w1), params.tower_b1);
    tanh_inplace(h1);
    Matrix pooled = add_bias_rows(matmul(h1, params.tower_w2), params.tower_b2);
    tanh_inplace(pooled);
    Matrix projected = matmul(pooled, params.text_proj);
    l2_normalize_rows(projected);
    return {std::move(pooled), std::move(projected)};
}

Matrix forward_vision(const ModelParams& params, const Matrix& raw_img) {
    if (raw_img.cols() != params.dims.raw_img_dim) {
        throw ShapeError("forward_vision: expected " + std::to_string(params.dims.raw_img_dim) +
                         " columns, got " + std::to_string(raw_img.cols()));
    }
    Matrix projected = matmul(matmul(raw_img, params.frozen_vision_map), params.vision_proj);
    l2_normalize_rows(projected);
    return projected;
}

std::uint64_t frozen_hash(const ModelParams& params) {
    std::uint64_t h = 1469598103934665603ULL;
    auto absorb = [&h](const std::vector<double>& data) {
        for (double x : data) {
            std::uint64_t bits;
            std::memcpy(&bits, &x, sizeof(bits));
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xFFULL;
                h *= 1099511628211ULL;
            }
        }
    };
    absorb(params.frozen_vision_map.data());
    absorb(params.frozen_text_map.data());
    return h;
}

std::pair<double, TrainableGrads> compute_grads(const ModelParams& params, const Batch& batch,
                                                Objective objective) {
    // forward with cached intermediates
    Matrix hv = matmul(batch.raw_img, params.frozen_vision_map);
    Matrix zv = matmul(hv, params.vision_proj);
    Matrix img_emb = zv;
    l2_normalize_rows(img_emb);

    Matrix x0 = matmul(batch.raw_txt, params.frozen_text_map);
    Matrix h1 = add_bias_rows(matmul(x0, params.tower_w1), params.tower_b1);
    tanh_inplace(h1);
    Matrix h2 = add_bias_rows(matmul(h1, params.tower_w2), params.tower_b2);
    tanh_inplace(h2);
    Matrix zt = matmul(h2, params.text_proj);
    Matrix txt_emb = zt;
    l2_normalize_rows(txt_emb);

    const LossGrad lg = objective == Objective::img2txt
                            ? img2txt_infonce(img_emb, txt_emb, params.log_tau)
                            : bidirectional_clip_loss(img_emb, txt_emb, params.log_tau);

    TrainableGrads g;
    const Matrix gzv = normalization_backward(zv, img_emb, lg.grad_img);
    g.vision_proj = matmul_tn(hv, gzv);

    const Matrix gzt = normalization_backward(zt, txt_emb, lg.grad_txt);
    g.text_proj = matmul_tn(h2, gzt);

    Matrix ga2 = matmul_nt(gzt, params.text_proj);  // grad wrt h2, then through tanh
    for (std::size_t i = 0; i < ga2.size(); ++i) {
        ga2.data()[i] *= 1.0 - h2.data()[i] * h2.data()[i];
    }
    g.tower_w2 = matmul_tn(h1, ga2);
    g.tower_b2 = column_sums(ga2);

    Matrix ga1 = matmul_nt(ga2, params.tower_w2);
    for (std::size_t i = 0; i < ga1.size(); ++i) {
        ga1.data()[i] *= 1.0 - h1.data()[i] * h1.data()[i];
    }
    g.tower_w1 = matmul_tn(x0, ga1);
    g.tower_b1 = column_sums(ga1);

    g.log_tau = lg.grad_log_tau;
    return {lg.loss, std::move(g)};
}

OptimState init_optim(const ModelParams& params) {
    OptimState s;
    s.tower_w1 = Moments(params.tower_w1.size());
    s.tower_b1 = Moments(params.tower_b1.size());
    s.tower_w2 = Moments(params.tower_w2.size());
    s.tower_b2 = Moments(params.tower_b2.size());
    s.vision_proj = Moments(params.vision_proj.size());
    s.text_proj = Moments(params.text_proj.size());
    s.log_tau = Moments(1);
    return s;
}

double backward_and_step(ModelParams& params, OptimState& optim, const ScheduleConfig& schedule,
                         const Batch& batch, Objective objective) {
    auto [loss, grads] = compute_grads(params, batch, objective);
    if (!std::isfinite(loss)) {
        throw NonFiniteLoss("backward_and_step: loss is not finite at step " +
                            std::to_string(optim.step + 1));
    }

    optim.step += 1;
    const double lr = lr_at(schedule, optim.step);
    const std::size_t t = optim.step;

    adamw_update(std::span<double>(params.tower_w1.data()), grads.tower_w1.data(),
                 optim.tower_w1, lr, schedule.weight_decay_other, schedule, t);
    adamw_update(std::span<double>(params.tower_b1), grads.tower_b1, optim.tower_b1, lr, 0.0,
                 schedule, t);
    adamw_update(std::span<double>(params.tower_w2.data()), grads.tower_w2.data(),
                 optim.tower_w2, lr, schedule.weight_decay_other, schedule, t);
    adamw_update(std::span<double>(params.tower_b2), grads.tower_b2, optim.tower_b2, lr, 0.0,
                 schedule, t);
    adamw_update(std::span<double>(params.vision_proj.data()), grads.vision_proj.data(),
                 optim.vision_proj, lr, schedule.weight_decay_proj, schedule, t);
    adamw_update(std::span<double>(params.text_proj.data()), grads.text_proj.data(),
                 optim.text_proj, lr, schedule.weight_decay_proj, schedule, t);
    double log_tau_param[1] = {params.log_tau};
    const double log_tau_grad[1] = {grads.log_tau};
    adamw_update(log_tau_param, log_tau_grad, optim.log_tau, lr, 0.0, schedule, t);
    params.log_tau = std::clamp(log_tau_param[0], kLogTauMin, kLogTauMax);
    return loss;
}

void save_checkpoint(const std::string& path, const ModelParams& params, std::uint64_t step) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot open " + path + " for writing");

    nlohmann::json header{
        {"format", "cct-checkpoint-v1"},
        {"dims",
         {{"raw_img", params.dims.raw_img_dim},
          {"raw_txt", params.dims.raw_txt_dim},
          {"backbone", params.dims.backbone_dim},
          {"hidden", params.dims.hidden_dim},
          {"embed", params.dims.embed_dim}}},
        {"seed", params.seed},
        {"step", step},
    };
    out << header.dump() << '\n';

    write_f64_block(out, params.frozen_vision_map.data());
    write_f64_block(out, params.frozen_text_map.data());
    write_f64_block(out, params.tower_w1.data());
    write_f64_block(out, params.tower_b1);
    write_f64_block(out, params.tower_w2.data());
    write_f64_block(out, params.tower_b2);
    write_f64_block(out, params.vision_proj.data());
    write_f64_block(out, params.text_proj.data());
    write_f64_block(out, {params.log_tau});
    if (!out) throw IoError("checkpoint: write failed for " + path);
}

std::pair<ModelParams, std::uint64_t> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw IoError("checkpoint: missing header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint header: ") + e.what(), 1);
    }

    ModelParams p;
    const auto& d = header.at("dims");
    p.dims.raw_img_dim = d.at("raw_img").get<std::size_t>();
    p.dims.raw_txt_dim = d.at("raw_txt").get<std::size_t>();
    p.dims.backbone_dim = d.at("backbone").get<std::size_t>();
    p.dims.hidden_dim = d.at("hidden").get<std::size_t>();
    p.dims.embed_dim = d.at("embed").get<std::size_t>();
    p.dims.validate();
    p.seed = header.at("seed").get<std::uint64_t>();
    const auto step = header.at("step").get<std::uint64_t>();

    auto read_matrix = [&in](std::size_t r, std::size_t c) {
        return Matrix(r, c, read_f64_block(in, r * c));
    };
    p.frozen_vision_map = read_matrix(p.dims.raw_img_dim, p.dims.backbone_dim);
    p.frozen_text_map = read_matrix(p.dims.raw_txt_dim, p.dims.hidden_dim);
    p.tower_w1 = read_matrix(p.dims.hidden_dim, p.dims.hidden_dim);
    p.tower_b1 = read_f64_block(in, p.dims.hidden_dim);
    p.tower_w2 = read_matrix(p.dims.hidden_dim, p.dims.hidden_dim);
    p.tower_b2 = read_f64_block(in, p.dims.hidden_dim);
    p.vision_proj = read_matrix(p.dims.backbone_dim, p.dims.embed_dim);
    p.text_proj = read_matrix(p.dims.hidden_dim, p.dims.embed_dim);
    p.log_tau = read_f64_block(in, 1)[0];
    check_finite(p.tower_b1, "checkpoint.tower_b1");
    check_finite(p.tower_b2, "checkpoint.tower_b2");
    check_finite({&p.log_tau, 1}, "checkpoint.log_tau");
    return {std::move(p), step};
}

}  // namespace cct
