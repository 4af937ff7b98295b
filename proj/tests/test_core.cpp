#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "agat/config.hpp"
#include "agat/errors.hpp"
#include "agat/image_io.hpp"
#include "agat/rng.hpp"
#include "agat/serialize.hpp"
#include "agat/tensor.hpp"

using namespace agat;

TEST_CASE("rng streams are deterministic and forks are independent") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng base(7);
    Rng f1 = base.fork("alpha");
    Rng f2 = base.fork("beta");
    CHECK(f1.next_u64() != f2.next_u64());
    // forking does not advance the parent
    Rng base2(7);
    CHECK(base.next_u64() == base2.next_u64());
}

TEST_CASE("rng normal consumes exactly two uniforms and has sane moments") {
    Rng r(3);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        sum += x;
        sq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.05);

    Rng r1(5), r2(5);
    (void)r1.normal();
    (void)r2.uniform();
    (void)r2.uniform();
    CHECK(r1.next_u64() == r2.next_u64());
}

TEST_CASE("rng uniform_int covers the inclusive range") {
    Rng r(11);
    bool lo = false, hi = false;
    for (int i = 0; i < 1000; ++i) {
        const auto x = r.uniform_int(2, 5);
        CHECK(x >= 2);
        CHECK(x <= 5);
        lo = lo || x == 2;
        hi = hi || x == 5;
    }
    CHECK(lo);
    CHECK(hi);
}

TEST_CASE("image files round-trip bit-exactly after quantization") {
    Rng r(9);
    Tensor img(3, 16, 24);
    for (auto& v : img.v) v = r.uniform();
    quantize_inplace(img);

    const std::string path = (std::filesystem::temp_directory_path() / "agat_roundtrip.ppm").string();
    write_ppm(path, img);
    const Tensor back = read_ppm(path);
    REQUIRE(back.same_shape(img));
    for (size_t i = 0; i < img.v.size(); ++i) CHECK(back.v[i] == img.v[i]);
    std::filesystem::remove(path);
}

TEST_CASE("mask pgm round-trip") {
    std::vector<std::uint8_t> mask(12 * 8, 0);
    mask[5] = 1;
    mask[90] = 1;
    const std::string path = (std::filesystem::temp_directory_path() / "agat_mask.pgm").string();
    write_mask_pgm(path, mask, 12, 8);
    int h = 0, w = 0;
    const auto back = read_mask_pgm(path, &h, &w);
    CHECK(h == 12);
    CHECK(w == 8);
    CHECK(back == mask);
    std::filesystem::remove(path);
}

TEST_CASE("config parses typed values and rejects unknown keys") {
    const std::string text = "[data]\nimage_size = 32\nratio = 1.5\nname = toy\nflag = true\n";
    Config cfg = Config::parse_string(text);
    CHECK(cfg.get_int("data", "image_size", 0) == 32);
    CHECK(cfg.get_double("data", "ratio", 0.0) == doctest::Approx(1.5));
    CHECK(cfg.get_string("data", "name", "") == "toy");
    CHECK(cfg.get_bool("data", "flag", false));
    CHECK_NOTHROW(cfg.require_all_consumed());

    Config cfg2 = Config::parse_string("[data]\nimage_sizee = 32\n");
    (void)cfg2.get_int("data", "image_size", 0);
    CHECK_THROWS_AS(cfg2.require_all_consumed(), UsageError);
}

TEST_CASE("config rejects malformed values, duplicates and stray keys") {
    CHECK_THROWS_AS(Config::parse_string("image_size = 2\n"), UsageError);     // key outside section
    CHECK_THROWS_AS(Config::parse_string("[a]\nx = 1\nx = 2\n"), UsageError);  // duplicate
    Config cfg = Config::parse_string("[a]\nx = banana\n");
    CHECK_THROWS_AS((void)cfg.get_int("a", "x", 0), UsageError);
}

TEST_CASE("config serialization is stable and hashes follow content") {
    Config cfg = Config::parse_string("[b]\ny = 2\n[a]\nx = 1\n");
    const std::string s1 = cfg.serialize();
    CHECK(Config::parse_string(s1).serialize() == s1);
    Config cfg2 = Config::parse_string("[b]\ny = 3\n[a]\nx = 1\n");
    CHECK(cfg.content_hash() != cfg2.content_hash());
}

TEST_CASE("little-endian binary round-trip") {
    std::string bytes;
    put_u32(bytes, 0xdeadbeefu);
    put_u64(bytes, 0x0123456789abcdefULL);
    put_f64(bytes, -0.1234567890123456789);
    ByteReader r(bytes);
    CHECK(r.u32() == 0xdeadbeefu);
    CHECK(r.u64() == 0x0123456789abcdefULL);
    CHECK(r.f64() == -0.1234567890123456789);
    CHECK(r.at_end());
}
