#include "agat/losses.hpp"

#include <cmath>

#include "agat/errors.hpp"

namespace agat {

namespace {

void require_patch_mask(const Tensor& patch, const ClassMask& mask) {
    if (patch.c != 1 || patch.h != mask.h || patch.w != mask.w) throw ShapeError("loss: patch and mask shapes must agree");
}

}  // namespace

double masked_sq_frobenius(const Tensor& patch, double target, const ClassMask& mask_n) {
    require_patch_mask(patch, mask_n);
    double sum = 0.0;
    for (size_t i = 0; i < patch.v.size(); ++i) {
        if (!mask_n.mask[i]) continue;
        const double d = patch.v[i] - target;
        sum += d * d;
    }
    return sum;
}

MaskedTerm masked_ls_term(const Tensor& patch, double target, const ClassMask& mask_n) {
    require_patch_mask(patch, mask_n);
    MaskedTerm term;
    term.grad = Tensor(1, patch.h, patch.w);
    const int active = mask_n.active_count();
    if (active == 0) {
        term.skipped = true;
        return term;
    }
    const double norm = 1.0 / active;
    for (size_t i = 0; i < patch.v.size(); ++i) {
        if (!mask_n.mask[i]) continue;
        const double d = patch.v[i] - target;
        term.value += d * d * norm;
        term.grad.v[i] = 2.0 * d * norm;
    }
    return term;
}

AdversarialPair masked_adversarial_loss(const Tensor& real_patch, const Tensor& fake_patch, const ClassMask& real_mask_n,
                                        const ClassMask& fake_mask_n) {
    AdversarialPair pair;
    pair.real_to_one = masked_ls_term(real_patch, 1.0, real_mask_n);
    pair.fake_to_zero = masked_ls_term(fake_patch, 0.0, fake_mask_n);
    pair.fake_to_one = masked_ls_term(fake_patch, 1.0, fake_mask_n);
    return pair;
}

AdversarialPair attention_adversarial_loss(const Tensor& real_patch, const Tensor& composed_fake_patch, const ClassMask& mask_n) {
    return masked_adversarial_loss(real_patch, composed_fake_patch, mask_n, mask_n);
}

CyclicLoss cyclic_loss(const Tensor& original, const Tensor& reconstructed) {
    require_same_shape(original, reconstructed, "cyclic_loss");
    CyclicLoss out;
    out.grad = Tensor(reconstructed.c, reconstructed.h, reconstructed.w);
    const double norm = 1.0 / static_cast<double>(original.v.size());
    for (size_t i = 0; i < original.v.size(); ++i) {
        const double d = reconstructed.v[i] - original.v[i];
        out.value += std::abs(d) * norm;
        out.grad.v[i] = d > 0.0 ? norm : (d < 0.0 ? -norm : 0.0);
    }
    return out;
}

double cyclic_loss_value(const Tensor& original, const Tensor& reconstructed) {
    require_same_shape(original, reconstructed, "cyclic_loss");
    double sum = 0.0;
    for (size_t i = 0; i < original.v.size(); ++i) sum += std::abs(reconstructed.v[i] - original.v[i]);
    return sum / static_cast<double>(original.v.size());
}

double LossBreakdown::recompute_total() const {
    return adv_source_split[0] + adv_source_split[1] + adv_target_split[0] + adv_target_split[1] + lambda_cyc * (cyc_source + cyc_target);
}

void LossBreakdown::validate() const {
    const double expected = recompute_total();
    if (!std::isfinite(total) || std::abs(total - expected) > 1e-9) throw NumericError("loss breakdown total inconsistent");
    for (double term : {adv_source_split[0], adv_source_split[1], adv_target_split[0], adv_target_split[1], cyc_source, cyc_target})
        if (!std::isfinite(term) || term < 0.0) throw NumericError("loss term non-finite or negative");
}

LossBreakdown stage2_objective(const std::array<double, 2>& adv_source_split, const std::array<double, 2>& adv_target_split,
                               double cyc_source, double cyc_target, double lambda_cyc) {
    LossBreakdown b;
    b.adv_source_split = adv_source_split;
    b.adv_target_split = adv_target_split;
    b.cyc_source = cyc_source;
    b.cyc_target = cyc_target;
    b.lambda_cyc = lambda_cyc;
    b.total = b.recompute_total();
    b.validate();
    return b;
}

LossBreakdown stage1_objective(double adv_source, double adv_target, double cyc_source, double cyc_target, double lambda_cyc) {
    // The zero-mask discriminator of the two-discriminator formalism
    // contributes exactly 0; slot 1 records that.
    return stage2_objective({adv_source, 0.0}, {adv_target, 0.0}, cyc_source, cyc_target, lambda_cyc);
}

}  // namespace agat
