#pragma once

#include <array>

#include "agat/data.hpp"
#include "agat/tensor.hpp"

namespace agat {

// One masked least-squares term ‖(patch − target)⊙M‖²_F normalized by M's
// active cell count. With M all-ones this is exactly the 1/n²-scaled
// whole-image loss; the normalization keeps a small-object discriminator's
// gradient magnitude independent of object area.
struct MaskedTerm {
    double value = 0.0;
    bool skipped = false;  // no active mask cells: class absent from the image
    Tensor grad;           // d value / d patch, zero when skipped
};

// Unnormalized Frobenius building block Σ((patch − target)⊙M)².
double masked_sq_frobenius(const Tensor& patch, double target, const ClassMask& mask_n);

MaskedTerm masked_ls_term(const Tensor& patch, double target, const ClassMask& mask_n);

// Class-masked adversarial energy on one (real, fake) patch pair.
// Discriminator side pushes real→1, fake→0 on the masked support; the
// generator side is the least-squares flip (fake→1).
struct AdversarialPair {
    MaskedTerm real_to_one;   // (real − 1)² ⊙ M_real
    MaskedTerm fake_to_zero;  // fake² ⊙ M_fake
    MaskedTerm fake_to_one;   // (fake − 1)² ⊙ M_fake

    double discriminator_term() const { return real_to_one.value + fake_to_zero.value; }
    double generator_term() const { return fake_to_one.value; }
    bool skipped() const { return real_to_one.skipped && fake_to_zero.skipped; }
};

AdversarialPair masked_adversarial_loss(const Tensor& real_patch, const Tensor& fake_patch, const ClassMask& real_mask_n,
                                        const ClassMask& fake_mask_n);

// Attention-stage variant: identical structure, but the fake patch comes from
// the attention-composed image and both sides share one mask (M^a or M^∅),
// carrying the explicit whole-image 1/n² normalization when M = M^a.
AdversarialPair attention_adversarial_loss(const Tensor& real_patch, const Tensor& composed_fake_patch, const ClassMask& mask_n);

struct CyclicLoss {
    double value = 0.0;
    Tensor grad;  // d value / d reconstructed
};

// Mean absolute difference (L1) over all pixels.
CyclicLoss cyclic_loss(const Tensor& original, const Tensor& reconstructed);
double cyclic_loss_value(const Tensor& original, const Tensor& reconstructed);

// Per-iteration energy record. Index 0 = object class, 1 = background class
// for the split stages; the attention stage stores its single whole-image
// term in slot 0 and the zero-mask term (identically 0) in slot 1.
struct LossBreakdown {
    std::array<double, 2> adv_source_split{};  // L^S_adv per class
    std::array<double, 2> adv_target_split{};  // L^T_adv per class
    double cyc_source = 0.0;
    double cyc_target = 0.0;
    double lambda_cyc = 0.0;
    double total = 0.0;

    double recompute_total() const;
    void validate() const;  // total consistency within 1e-9, finiteness, sign
};

LossBreakdown stage2_objective(const std::array<double, 2>& adv_source_split, const std::array<double, 2>& adv_target_split,
                               double cyc_source, double cyc_target, double lambda_cyc);

LossBreakdown stage1_objective(double adv_source, double adv_target, double cyc_source, double cyc_target, double lambda_cyc);

}  // namespace agat
