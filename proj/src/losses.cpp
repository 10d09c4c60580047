#include "cct/losses.hpp"

#include <cmath>

namespace cct {

namespace {

void check_batch(const Matrix& img, const Matrix& txt) {
    if (img.rows() != txt.rows() || img.cols() != txt.cols()) {
        throw ShapeError("contrastive loss: embedding shapes disagree");
    }
    if (img.rows() < 2) {
        throw BatchTooSmall("contrastive loss: batch size must be >= 2, got " +
                            std::to_string(img.rows()));
    }
}

}  // namespace

LossGrad img2txt_infonce(const Matrix& img_emb, const Matrix& txt_emb, double log_tau) {
    check_batch(img_emb, txt_emb);
    const std::size_t n = img_emb.rows();
    const double scale = std::exp(log_tau);

    Matrix logits = matmul_nt(img_emb, txt_emb);
    for (double& x : logits.data()) x *= scale;

    const Matrix probs = softmax_rows(logits);

    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row_max = logits(i, 0);
        for (std::size_t j = 1; j < n; ++j) row_max = std::max(row_max, logits(i, j));
        double lse = 0.0;
        for (std::size_t j = 0; j < n; ++j) lse += std::exp(logits(i, j) - row_max);
        loss += std::log(lse) + row_max - logits(i, i);
    }
    loss /= static_cast<double>(n);

    // dLoss/dlogits = (probs - I)/n; logits are linear in each embedding row.
    Matrix dlogits = probs;
    for (std::size_t i = 0; i < n; ++i) dlogits(i, i) -= 1.0;
    for (double& x : dlogits.data()) x /= static_cast<double>(n);

    LossGrad out;
    out.loss = loss;
    out.grad_img = matmul(dlogits, txt_emb);
    for (double& x : out.grad_img.data()) x *= scale;
    out.grad_txt = matmul_tn(dlogits, img_emb);
    for (double& x : out.grad_txt.data()) x *= scale;

    double g_tau = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) g_tau += dlogits(i, j) * logits(i, j);
    }
    out.grad_log_tau = g_tau;
    return out;
}

LossGrad bidirectional_clip_loss(const Matrix& img_emb, const Matrix& txt_emb, double log_tau) {
    const LossGrad fwd = img2txt_infonce(img_emb, txt_emb, log_tau);
    const LossGrad rev = img2txt_infonce(txt_emb, img_emb, log_tau);

    LossGrad out;
    out.loss = 0.5 * (fwd.loss + rev.loss);
    out.grad_img = fwd.grad_img;
    out.grad_txt = fwd.grad_txt;
    for (std::size_t i = 0; i < out.grad_img.size(); ++i) {
        out.grad_img.data()[i] = 0.5 * (fwd.grad_img.data()[i] + rev.grad_txt.data()[i]);
        out.grad_txt.data()[i] = 0.5 * (fwd.grad_txt.data()[i] + rev.grad_img.data()[i]);
    }
    out.grad_log_tau = 0.5 * (fwd.grad_log_tau + rev.grad_log_tau);
    return out;
}

}  // namespace cct
