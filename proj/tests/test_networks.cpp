#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "agat/checkpoint.hpp"
#include "agat/errors.hpp"
#include "agat/nn.hpp"
#include "gradcheck.hpp"

using namespace agat;

namespace {

Tensor random_image(int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x(c, h, w);
    for (auto& v : x.v) v = rng.uniform();
    return x;
}

nn::EncoderDecoderNet tiny_generator(int out_ch, std::uint64_t seed) {
    nn::EncoderDecoderNet net(out_ch == 1 ? nn::NetRole::kAttention : nn::NetRole::kGenerator, {3, out_ch, 2, 1});
    Rng rng(seed);
    net.init_weights(rng);
    return net;
}

}  // namespace

TEST_CASE("generator forward keeps shape, range and finiteness") {
    nn::EncoderDecoderNet gen = tiny_generator(3, 1);
    const Tensor x = random_image(3, 16, 16, 2);
    nn::Tape tape;
    const Tensor y = gen.forward(x, tape);
    CHECK(y.c == 3);
    CHECK(y.h == 16);
    CHECK(y.w == 16);
    CHECK(y.all_finite());
    CHECK(y.min() >= 0.0);
    CHECK(y.max() <= 1.0);
    CHECK_THROWS_AS((void)gen.forward(Tensor(4, 16, 16), tape), ShapeError);
}

TEST_CASE("attention forward emits a 1-channel map in [0,1] of the input size") {
    nn::EncoderDecoderNet att = tiny_generator(1, 3);
    const Tensor x = random_image(3, 24, 16, 4);
    nn::Tape tape;
    const Tensor a = att.forward(x, tape);
    CHECK(a.c == 1);
    CHECK(a.h == 24);
    CHECK(a.w == 16);
    CHECK(a.min() >= 0.0);
    CHECK(a.max() <= 1.0);
}

TEST_CASE("downsample_mask uses max-pooling semantics") {
    CHECK(nn::downsample_mask(ClassMask::all_ones(64, 64), 8, 8).active_count() == 64);
    CHECK(nn::downsample_mask(ClassMask::all_zeros(64, 64), 8, 8).active_count() == 0);

    ClassMask m(4, 4, kObjectClass);
    m.at(0, 3) = 1;
    const ClassMask d = nn::downsample_mask(m, 2, 2);
    CHECK(d.at(0, 1) == 1);
    CHECK(d.at(0, 0) == 0);
    CHECK(d.at(1, 0) == 0);
    CHECK(d.at(1, 1) == 0);

    CHECK_THROWS_AS(nn::downsample_mask(m, 3, 3), ShapeError);
}

TEST_CASE("masked discriminator: all-ones mask equals the unmasked forward bitwise") {
    nn::PatchDiscriminator disc(nn::NetRole::kDiscriminator, {3, 4, 3, 3});
    Rng rng(5);
    disc.init_weights(rng);
    const Tensor x = random_image(3, 32, 32, 6);
    const ClassMask ones = ClassMask::all_ones(32, 32);
    nn::Tape t1, t2;
    const Tensor masked = disc.forward(x, &ones, t1);
    const Tensor plain = disc.forward(x, nullptr, t2);
    REQUIRE(masked.same_shape(plain));
    for (size_t i = 0; i < masked.v.size(); ++i) CHECK(masked.v[i] == plain.v[i]);
}

TEST_CASE("masked discriminator: all-zero mask yields an identically zero patch grid") {
    nn::PatchDiscriminator disc(nn::NetRole::kDiscriminator, {3, 4, 3, 3});
    Rng rng(7);
    disc.init_weights(rng);
    const Tensor x = random_image(3, 32, 32, 8);
    const ClassMask zeros = ClassMask::all_zeros(32, 32);
    nn::Tape tape;
    const Tensor patch = disc.forward(x, &zeros, tape);
    for (double v : patch.v) CHECK(v == 0.0);
}

TEST_CASE("mask locality: far-field perturbations never reach the gated patch grid") {
    nn::PatchDiscriminator disc(nn::NetRole::kDiscriminator, {3, 8, 3, 3});
    Rng rng(9);
    disc.init_weights(rng);
    const int side = 64;
    const int r1 = 2;  // first conv k4 -> kernel radius 2
    Rng probe_rng(101);

    for (int probe = 0; probe < 25; ++probe) {
        // random compact mask block
        ClassMask mask(side, side, kObjectClass);
        const int bw = static_cast<int>(probe_rng.uniform_int(4, 12));
        const int bh = static_cast<int>(probe_rng.uniform_int(4, 12));
        const int bx = static_cast<int>(probe_rng.uniform_int(0, side - bw - 1));
        const int by = static_cast<int>(probe_rng.uniform_int(0, side - bh - 1));
        for (int y = by; y < by + bh; ++y)
            for (int x = bx; x < bx + bw; ++x) mask.at(y, x) = 1;

        Tensor img = random_image(3, side, side, 1000 + probe);
        nn::Tape t1;
        const Tensor before = disc.forward(img, &mask, t1);

        // perturb a pixel strictly beyond the r1-dilation of the mask support
        int px = 0, py = 0;
        bool found = false;
        for (int tries = 0; tries < 200 && !found; ++tries) {
            px = static_cast<int>(probe_rng.uniform_int(0, side - 1));
            py = static_cast<int>(probe_rng.uniform_int(0, side - 1));
            found = px < bx - r1 || px > bx + bw - 1 + r1 || py < by - r1 || py > by + bh - 1 + r1;
        }
        REQUIRE(found);
        img.at(0, py, px) = 1.0 - img.at(0, py, px);
        img.at(1, py, px) = 0.0;
        nn::Tape t2;
        const Tensor after = disc.forward(img, &mask, t2);
        for (size_t i = 0; i < before.v.size(); ++i) CHECK(before.v[i] == after.v[i]);  // bit-exact
    }
}

TEST_CASE("compose_translation identities and the scalar probe") {
    const Tensor img = random_image(3, 8, 8, 11);
    const Tensor gen = random_image(3, 8, 8, 12);

    const Tensor ones = Tensor::full(1, 8, 8, 1.0);
    const Tensor zeros = Tensor::zeros(1, 8, 8);
    const Tensor all_gen = nn::compose_translation(img, gen, ones);
    const Tensor all_img = nn::compose_translation(img, gen, zeros);
    for (size_t i = 0; i < img.v.size(); ++i) {
        CHECK(all_gen.v[i] == gen.v[i]);
        CHECK(all_img.v[i] == img.v[i]);
    }

    Tensor s = Tensor::full(3, 1, 1, 0.2), g = Tensor::full(3, 1, 1, 0.8), a = Tensor::full(1, 1, 1, 0.5);
    const Tensor mix = nn::compose_translation(s, g, a);
    CHECK(mix.v[0] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(nn::compose_translation(img, Tensor(3, 8, 4), ones), ShapeError);
    CHECK_THROWS_AS(nn::compose_translation(img, gen, Tensor(1, 4, 8)), ShapeError);
}

TEST_CASE("range preservation: composed outputs stay in [0,1] for in-range inputs") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor img = random_image(3, 8, 8, 100 + trial);
        const Tensor gen = random_image(3, 8, 8, 200 + trial);
        Tensor att(1, 8, 8);
        for (auto& v : att.v) v = rng.uniform();
        const Tensor out = nn::compose_translation(img, gen, att);
        CHECK(out.min() >= 0.0);
        CHECK(out.max() <= 1.0);
    }
}

TEST_CASE("generator gradients match central finite differences at miniature scale") {
    nn::EncoderDecoderNet gen = tiny_generator(3, 21);
    const Tensor x = random_image(3, 8, 8, 22);
    Tensor proj = random_image(3, 8, 8, 23);

    auto loss = [&]() {
        nn::Tape t;
        const Tensor y = gen.forward(x, t);
        double s = 0.0;
        for (size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * proj.v[i];
        return s;
    };
    auto backward = [&]() {
        gen.zero_grads();
        nn::Tape t;
        (void)gen.forward(x, t);
        gen.backward(proj, t);
    };
    const auto res = gradcheck::check_params(gen.params(), loss, backward);
    INFO("worst " << res.worst_name << " rel " << res.worst_rel << " over " << res.checked);
    CHECK(res.failed == 0);
    CHECK(res.skipped < res.checked / 10 + 3);
}

TEST_CASE("attention gradients match central finite differences") {
    nn::EncoderDecoderNet att = tiny_generator(1, 31);
    const Tensor x = random_image(3, 8, 8, 32);
    Tensor proj = random_image(1, 8, 8, 33);
    auto loss = [&]() {
        nn::Tape t;
        const Tensor y = att.forward(x, t);
        double s = 0.0;
        for (size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * proj.v[i];
        return s;
    };
    auto backward = [&]() {
        att.zero_grads();
        nn::Tape t;
        (void)att.forward(x, t);
        att.backward(proj, t);
    };
    const auto res = gradcheck::check_params(att.params(), loss, backward);
    CHECK(res.failed == 0);
    CHECK(res.skipped < res.checked / 10 + 3);
}

TEST_CASE("masked discriminator gradients match finite differences, input gradient included") {
    nn::PatchDiscriminator disc(nn::NetRole::kDiscriminator, {3, 2, 2, 3});
    Rng rng(41);
    disc.init_weights(rng);
    Tensor x = random_image(3, 8, 8, 42);
    ClassMask mask(8, 8, kObjectClass);
    for (int y = 2; y < 6; ++y)
        for (int xx = 1; xx < 5; ++xx) mask.at(y, xx) = 1;
    Tensor proj = random_image(1, 2, 2, 43);

    auto loss = [&]() {
        nn::Tape t;
        const Tensor y = disc.forward(x, &mask, t);
        double s = 0.0;
        for (size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * proj.v[i];
        return s;
    };
    auto backward = [&]() {
        disc.zero_grads();
        nn::Tape t;
        (void)disc.forward(x, &mask, t);
        disc.backward(proj, t);
    };
    const auto res = gradcheck::check_params(disc.params(), loss, backward);
    CHECK(res.failed == 0);
    CHECK(res.skipped < res.checked / 10 + 3);

    // input gradient against finite differences
    disc.zero_grads();
    nn::Tape t;
    (void)disc.forward(x, &mask, t);
    const Tensor dx = disc.backward(proj, t, true);
    const double eps = 1e-4;
    Rng pick(44);
    for (int k = 0; k < 30; ++k) {
        const size_t j = static_cast<size_t>(pick.uniform_int(0, static_cast<int>(x.v.size()) - 1));
        const double saved = x.v[j];
        auto fd_at = [&](double e) {
            x.v[j] = saved + e;
            const double up = loss();
            x.v[j] = saved - e;
            const double down = loss();
            x.v[j] = saved;
            return (up - down) / (2 * e);
        };
        const double fd = fd_at(eps);
        const double fd_half = fd_at(eps / 2);
        if (std::abs(fd - fd_half) > 2.5e-4 * std::max({std::abs(fd), std::abs(fd_half), 1e-5})) continue;  // kink
        CHECK(dx.v[j] == doctest::Approx(fd).epsilon(2e-3));
    }
}

TEST_CASE("compose_translation backward matches finite differences") {
    const Tensor img = random_image(3, 4, 4, 51);
    const Tensor gen = random_image(3, 4, 4, 52);
    Tensor att = random_image(1, 4, 4, 53);
    const Tensor proj = random_image(3, 4, 4, 54);

    auto loss = [&](const Tensor& i, const Tensor& g, const Tensor& a) {
        const Tensor o = nn::compose_translation(i, g, a);
        double s = 0.0;
        for (size_t k = 0; k < o.v.size(); ++k) s += o.v[k] * proj.v[k];
        return s;
    };
    const nn::ComposeGrads grads = nn::compose_translation_backward(proj, img, gen, att);
    const double eps = 1e-6;
    for (size_t j = 0; j < att.v.size(); ++j) {
        Tensor up = att, down = att;
        up.v[j] += eps;
        down.v[j] -= eps;
        const double fd = (loss(img, gen, up) - loss(img, gen, down)) / (2 * eps);
        CHECK(grads.d_att.v[j] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("checkpoints round-trip bit-exactly and validate their descriptors") {
    const std::string dir = (std::filesystem::temp_directory_path() / "agat_ckpt_test").string();
    std::filesystem::create_directories(dir);

    nn::EncoderDecoderNet gen = tiny_generator(3, 61);
    nn::save_net(dir + "/g.ckpt", gen);
    nn::EncoderDecoderNet back = nn::load_encoder_decoder(dir + "/g.ckpt");
    auto pa = gen.params(), pb = back.params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i].name == pb[i].name);
        CHECK(pa[i].value->v == pb[i].value->v);
    }
    CHECK(back.role() == nn::NetRole::kGenerator);
    CHECK(nn::peek_role(dir + "/g.ckpt") == nn::NetRole::kGenerator);

    nn::PatchDiscriminator disc(nn::NetRole::kDiscriminator, {3, 4, 3, 3});
    Rng rng(62);
    disc.init_weights(rng);
    nn::save_net(dir + "/d.ckpt", disc);
    nn::PatchDiscriminator dback = nn::load_discriminator(dir + "/d.ckpt");
    auto da = disc.params(), db = dback.params();
    for (size_t i = 0; i < da.size(); ++i) CHECK(da[i].value->v == db[i].value->v);

    CHECK_THROWS(nn::load_discriminator(dir + "/g.ckpt"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint refuses non-finite weights") {
    nn::EncoderDecoderNet gen = tiny_generator(3, 63);
    gen.params()[0].value->v[0] = std::nan("");
    const std::string path = (std::filesystem::temp_directory_path() / "agat_bad.ckpt").string();
    CHECK_THROWS_AS(nn::save_net(path, gen), NumericError);
}
