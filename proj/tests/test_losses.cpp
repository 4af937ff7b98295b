#include <doctest.h>

#include <cmath>

#include "agat/losses.hpp"
#include "agat/rng.hpp"

using namespace agat;

namespace {

Tensor patch_of(std::initializer_list<double> values, int n) {
    Tensor t(1, n, n);
    size_t i = 0;
    for (double v : values) t.v[i++] = v;
    return t;
}

}  // namespace

TEST_CASE("masked adversarial loss matches the hand-computed 1x1 case") {
    // disc term (0.5-1)^2 + 0.3^2 = 0.34 with unit masks
    const Tensor real = patch_of({0.5}, 1);
    const Tensor fake = patch_of({0.3}, 1);
    const ClassMask ones = ClassMask::all_ones(1, 1);
    const AdversarialPair pair = masked_adversarial_loss(real, fake, ones, ones);
    CHECK(pair.discriminator_term() == doctest::Approx(0.34).epsilon(1e-9));
    CHECK(pair.generator_term() == doctest::Approx(0.49).epsilon(1e-9));
    CHECK_FALSE(pair.skipped());
}

TEST_CASE("all-zero masks annihilate both terms and set the skipped flag") {
    const Tensor real = patch_of({0.9, 0.1, 0.5, 0.4}, 2);
    const Tensor fake = patch_of({0.2, 0.8, 0.7, 0.6}, 2);
    const ClassMask zeros = ClassMask::all_zeros(2, 2);
    const AdversarialPair pair = masked_adversarial_loss(real, fake, zeros, zeros);
    CHECK(pair.discriminator_term() == 0.0);
    CHECK(pair.generator_term() == 0.0);
    CHECK(pair.skipped());
    CHECK(pair.real_to_one.skipped);
}

TEST_CASE("perfect discriminator scores zero") {
    const Tensor real = Tensor::full(1, 2, 2, 1.0);
    const Tensor fake = Tensor::zeros(1, 2, 2);
    const ClassMask ones = ClassMask::all_ones(2, 2);
    const AdversarialPair pair = masked_adversarial_loss(real, fake, ones, ones);
    CHECK(pair.discriminator_term() == 0.0);
}

TEST_CASE("attention adversarial loss carries the whole-image 1/n^2 normalization") {
    // real term 0 when all real scores are 1
    const Tensor real = Tensor::full(1, 2, 2, 1.0);
    const Tensor composed = Tensor::full(1, 2, 2, 0.5);
    const ClassMask all = ClassMask::all_ones(2, 2);
    const AdversarialPair pair = attention_adversarial_loss(real, composed, all);
    CHECK(pair.real_to_one.value == 0.0);
    // fake term (1/4)*sum (0.5-1)^2 = 0.25
    CHECK(pair.generator_term() == doctest::Approx(0.25).epsilon(1e-9));

    const AdversarialPair none = attention_adversarial_loss(real, composed, ClassMask::all_zeros(2, 2));
    CHECK(none.discriminator_term() == 0.0);
    CHECK(none.generator_term() == 0.0);
    CHECK(none.skipped());
}

TEST_CASE("cyclic loss is mean absolute difference") {
    Tensor a = Tensor::full(3, 4, 4, 0.25);
    Tensor b = Tensor::full(3, 4, 4, 0.75);
    CHECK(cyclic_loss(a, a).value == 0.0);
    CHECK(cyclic_loss(Tensor::zeros(3, 4, 4), Tensor::full(3, 4, 4, 1.0)).value == doctest::Approx(1.0));
    CHECK(cyclic_loss(a, b).value == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(cyclic_loss(a, Tensor(3, 4, 8)), ShapeError);
}

TEST_CASE("stage objectives aggregate exactly as the documented weighted sum") {
    const LossBreakdown zero = stage2_objective({0.0, 0.0}, {0.0, 0.0}, 0.0, 0.0, 10.0);
    CHECK(zero.total == 0.0);

    // adv (0.1,0.2,0.3,0.4), cyc (0.05,0.05), lambda 10 -> 1.0 + 1.0 = 2.0
    const LossBreakdown b = stage2_objective({0.1, 0.2}, {0.3, 0.4}, 0.05, 0.05, 10.0);
    CHECK(b.total == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(std::abs(b.total - b.recompute_total()) <= 1e-9);

    // stage 1: adv (0.3,0.2), cyc (0.1,0.1), lambda 10 -> 0.5 + 2.0 = 2.5
    const LossBreakdown s1 = stage1_objective(0.3, 0.2, 0.1, 0.1, 10.0);
    CHECK(s1.total == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(s1.adv_source_split[1] == 0.0);  // zero-mask discriminator slot
    CHECK(s1.adv_target_split[1] == 0.0);
}

TEST_CASE("breakdown totals stay consistent under random fuzz") {
    Rng rng(77);
    for (int i = 0; i < 200; ++i) {
        const LossBreakdown b = stage2_objective({rng.uniform(), rng.uniform()}, {rng.uniform(), rng.uniform()}, rng.uniform(),
                                                 rng.uniform(), rng.uniform(0.0, 20.0));
        CHECK(std::abs(b.total - b.recompute_total()) <= 1e-9);
        CHECK_NOTHROW(b.validate());
    }
}

TEST_CASE("complementary masked Frobenius terms add up to the unmasked term") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 8;
        Tensor patch(1, n, n);
        for (auto& v : patch.v) v = rng.uniform(-2.0, 2.0);
        ClassMask m(n, n, kObjectClass);
        for (auto& b : m.mask) b = rng.bernoulli(0.3) ? 1 : 0;
        const ClassMask mc = m.complement();
        const double target = rng.uniform();
        const double split = masked_sq_frobenius(patch, target, m) + masked_sq_frobenius(patch, target, mc);
        const double whole = masked_sq_frobenius(patch, target, ClassMask::all_ones(n, n));
        CHECK(std::abs(split - whole) <= 1e-9);
    }
}

TEST_CASE("whole-image mask normalization reduces to the plain 1/n^2 least-squares objective") {
    Rng rng(6);
    const int n = 4;
    Tensor patch(1, n, n);
    for (auto& v : patch.v) v = rng.uniform();
    const MaskedTerm term = masked_ls_term(patch, 1.0, ClassMask::all_ones(n, n));
    double manual = 0.0;
    for (double v : patch.v) manual += (v - 1.0) * (v - 1.0);
    CHECK(term.value == doctest::Approx(manual / (n * n)).epsilon(1e-12));
}

TEST_CASE("loss terms are non-negative for arbitrary inputs") {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor real(1, 4, 4), fake(1, 4, 4);
        for (auto& v : real.v) v = rng.uniform(-3.0, 3.0);
        for (auto& v : fake.v) v = rng.uniform(-3.0, 3.0);
        ClassMask m(4, 4, kObjectClass);
        for (auto& b : m.mask) b = rng.bernoulli(0.5) ? 1 : 0;
        const AdversarialPair pair = masked_adversarial_loss(real, fake, m, m);
        CHECK(pair.real_to_one.value >= 0.0);
        CHECK(pair.fake_to_zero.value >= 0.0);
        CHECK(pair.fake_to_one.value >= 0.0);
    }
}

TEST_CASE("loss gradients match central finite differences") {
    Rng rng(15);
    const int n = 4;
    Tensor patch(1, n, n);
    for (auto& v : patch.v) v = rng.uniform();
    ClassMask m(n, n, kObjectClass);
    for (auto& b : m.mask) b = rng.bernoulli(0.6) ? 1 : 0;
    if (m.none_active()) m.mask[0] = 1;

    const double eps = 1e-6;
    SUBCASE("masked least-squares term") {
        const MaskedTerm term = masked_ls_term(patch, 1.0, m);
        for (size_t i = 0; i < patch.v.size(); i += 3) {
            Tensor up = patch, down = patch;
            up.v[i] += eps;
            down.v[i] -= eps;
            const double fd = (masked_ls_term(up, 1.0, m).value - masked_ls_term(down, 1.0, m).value) / (2 * eps);
            CHECK(term.grad.v[i] == doctest::Approx(fd).epsilon(1e-3));
        }
    }
    SUBCASE("cyclic loss gradient") {
        Tensor original(3, 4, 4), recon(3, 4, 4);
        for (auto& v : original.v) v = rng.uniform();
        for (auto& v : recon.v) v = rng.uniform();
        const CyclicLoss cyc = cyclic_loss(original, recon);
        for (size_t i = 0; i < recon.v.size(); i += 7) {
            Tensor up = recon, down = recon;
            up.v[i] += eps;
            down.v[i] -= eps;
            const double fd = (cyclic_loss_value(original, up) - cyclic_loss_value(original, down)) / (2 * eps);
            CHECK(cyc.grad.v[i] == doctest::Approx(fd).epsilon(1e-3));
        }
    }
}
