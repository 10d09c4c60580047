#pragma once

#include "cct/linalg.hpp"

namespace cct {

// Loss value plus exact analytic gradients with respect to the embedding
// matrices as given (callers pass L2-normalized rows; the normalization
// Jacobian is applied in the model backward) and to the log logit scale.
struct LossGrad {
    double loss = 0.0;
    Matrix grad_img;
    Matrix grad_txt;
    double grad_log_tau = 0.0;
};

// Cross entropy of row-softmaxed logits l = (img · txtᵀ) · exp(log_tau)
// against the diagonal, averaged over rows. BatchTooSmall for n < 2.
LossGrad img2txt_infonce(const Matrix& img_emb, const Matrix& txt_emb, double log_tau);

// Average of the image-to-text loss and its transpose-direction counterpart.
LossGrad bidirectional_clip_loss(const Matrix& img_emb, const Matrix& txt_emb, double log_tau);

}  // namespace cct
