#include <doctest.h>

#include <cmath>

#include "agat/data.hpp"
#include "agat/errors.hpp"

using namespace agat;

namespace {

DatasetSpec small_spec() {
    DatasetSpec s;
    s.image_size = 64;
    s.num_source = 4;
    s.num_target = 4;
    s.num_intermediate = 4;
    s.seed = 7;
    return s;
}

}  // namespace

TEST_CASE("generate_background produces an all-background scene, deterministically") {
    const DatasetSpec spec = small_spec();
    auto [img, labels] = generate_background(Domain::kSource, 64, 64, 7, spec);
    CHECK(labels.count(kObjectClass) == 0);
    CHECK(img.pixels.min() >= 0.0);
    CHECK(img.pixels.max() <= 1.0);

    auto [img2, labels2] = generate_background(Domain::kSource, 64, 64, 7, spec);
    CHECK(img.pixels.v == img2.pixels.v);  // bit-identical
}

TEST_CASE("generate_background rejects invalid sizes") {
    const DatasetSpec spec = small_spec();
    CHECK_THROWS_AS(generate_background(Domain::kSource, 0, 64, 1, spec), ShapeError);
    CHECK_THROWS_AS(generate_background(Domain::kSource, 63, 64, 1, spec), ShapeError);
    CHECK_THROWS_AS(generate_background(Domain::kSource, 64, 60, 1, spec), ShapeError);
}

TEST_CASE("target and source backgrounds differ by the configured palette shift") {
    const DatasetSpec spec = small_spec();
    const auto shift = spec.palette_shift();
    std::array<double, 3> mean_diff{};
    const int trials = 100;
    for (int seed = 0; seed < trials; ++seed) {
        auto [src, sl] = generate_background(Domain::kSource, 64, 64, seed, spec);
        auto [tgt, tl] = generate_background(Domain::kTarget, 64, 64, seed, spec);
        for (int c = 0; c < 3; ++c) {
            double d = 0.0;
            const double* ps = src.pixels.channel(c);
            const double* pt = tgt.pixels.channel(c);
            for (int i = 0; i < 64 * 64; ++i) d += pt[i] - ps[i];
            mean_diff[c] += d / (64.0 * 64.0);
        }
    }
    for (int c = 0; c < 3; ++c) CHECK(std::abs(mean_diff[c] / trials - shift[c]) <= spec.background_noise);
}

TEST_CASE("in_paint_objects honors the zero-object spec") {
    DatasetSpec spec = small_spec();
    spec.objects_min = 0;
    spec.objects_max = 0;
    auto [scene, labels] = generate_background(Domain::kSource, 64, 64, 3, spec);
    const InPaintResult r = in_paint_objects(scene, labels, spec, 3);
    CHECK(r.image.pixels.v == scene.pixels.v);
    CHECK(r.labels.labels == labels.labels);
    CHECK(r.achieved_fraction == 0.0);
}

TEST_CASE("a single 10x10 rectangle covers exactly 100 of 4096 pixels") {
    DatasetSpec spec = small_spec();
    spec.objects_min = 1;
    spec.objects_max = 1;
    spec.object_size_min = 10;
    spec.object_size_max = 10;
    spec.object_shapes = "rectangle";
    auto [scene, labels] = generate_background(Domain::kSource, 64, 64, 5, spec);
    const InPaintResult r = in_paint_objects(scene, labels, spec, 5);
    REQUIRE(r.objects.size() == 1);
    CHECK(r.labels.count(kObjectClass) == 100);
    CHECK(r.achieved_fraction == doctest::Approx(100.0 / 4096.0).epsilon(1e-12));
    CHECK(r.objects[0].box.width() == 10);
    CHECK(r.objects[0].box.height() == 10);
}

TEST_CASE("painted objects never overlap") {
    DatasetSpec spec = small_spec();
    spec.objects_min = 2;
    spec.objects_max = 6;
    for (int seed = 0; seed < 20; ++seed) {
        auto [scene, labels] = generate_background(Domain::kSource, 64, 64, seed, spec);
        const InPaintResult r = in_paint_objects(scene, labels, spec, seed);
        for (size_t i = 0; i < r.objects.size(); ++i)
            for (size_t j = i + 1; j < r.objects.size(); ++j) CHECK(box_iou(r.objects[i].box, r.objects[j].box) == 0.0);
        // labels count equals the sum of per-object areas (disjointness)
        int total = 0;
        for (const auto& o : r.objects) {
            CHECK(o.box.area() > 0);
            total += o.box.area();
        }
        CHECK(r.labels.count(kObjectClass) <= total);
    }
}

TEST_CASE("in_paint_objects requires an object-free scene") {
    DatasetSpec spec = small_spec();
    auto [scene, labels] = generate_background(Domain::kSource, 64, 64, 1, spec);
    const InPaintResult r = in_paint_objects(scene, labels, spec, 1);
    CHECK_THROWS_AS(in_paint_objects(r.image, r.labels, spec, 2), ShapeError);
}

TEST_CASE("build_dataset: intermediate domain has zero object pixels everywhere") {
    DatasetSpec spec = small_spec();
    spec.num_intermediate = 50;
    const ToyDatasets data = build_dataset(spec);
    REQUIRE(data.intermediate.samples.size() == 50);
    for (const auto& s : data.intermediate.samples) CHECK(s.labels.count(kObjectClass) == 0);
}

TEST_CASE("build_dataset is bit-deterministic in its spec seed") {
    const DatasetSpec spec = small_spec();
    const ToyDatasets a = build_dataset(spec);
    const ToyDatasets b = build_dataset(spec);
    REQUIRE(a.source.samples.size() == b.source.samples.size());
    for (size_t i = 0; i < a.source.samples.size(); ++i) {
        CHECK(a.source.samples[i].image.pixels.v == b.source.samples[i].image.pixels.v);
        CHECK(a.source.samples[i].labels.labels == b.source.samples[i].labels.labels);
        CHECK(a.source.samples[i].sample_seed == b.source.samples[i].sample_seed);
    }
}

TEST_CASE("the imbalance knob lands within 20 percent of the configured 8x ratio") {
    DatasetSpec spec = small_spec();
    spec.num_source = 120;
    spec.num_target = 120;
    spec.num_intermediate = 1;
    const ToyDatasets data = build_dataset(spec);
    auto object_fraction = [](const DomainDataset& d) {
        double obj = 0.0, total = 0.0;
        for (const auto& s : d.samples) {
            obj += s.labels.count(kObjectClass);
            total += static_cast<double>(s.labels.size());
        }
        return obj / total;
    };
    const double ratio = object_fraction(data.source) / object_fraction(data.target);
    const double configured = spec.source_object_frequency / spec.target_object_frequency;
    CHECK(ratio >= 0.8 * configured);
    CHECK(ratio <= 1.2 * configured);
}

TEST_CASE("class masks partition the grid") {
    const DatasetSpec spec = small_spec();
    const ToyDatasets data = build_dataset(spec);
    for (const auto& s : data.source.samples) {
        const ClassMask obj = ClassMask::from_labels(s.labels, kObjectClass);
        const ClassMask bg = ClassMask::from_labels(s.labels, kBackgroundClass);
        for (size_t i = 0; i < obj.mask.size(); ++i) CHECK(obj.mask[i] + bg.mask[i] == 1);
    }
}

TEST_CASE("sample seeds re-render the exact empty background") {
    const DatasetSpec spec = small_spec();
    const LabeledSample s = build_sample(spec, Domain::kIntermediate, 2);
    auto [bg, labels] = generate_background(Domain::kIntermediate, spec.image_size, spec.image_size, s.sample_seed, spec);
    CHECK(bg.pixels.v == s.image.pixels.v);
}

TEST_CASE("class_balance_stats: degenerate and derived cases") {
    DomainDataset d;
    d.domain = Domain::kIntermediate;
    LabeledSample s;
    s.labels = SemanticMap(64, 64);
    d.samples.push_back(s);
    auto rows = class_balance_stats(d);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].percent == doctest::Approx(100.0));
    CHECK(rows[1].percent == doctest::Approx(0.0));

    // one 10x10 object in a 64x64 image: 2.44 / 97.56
    LabeledSample s2;
    s2.labels = SemanticMap(64, 64);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) s2.labels.at(y, x) = kObjectClass;
    DomainDataset d2;
    d2.samples.push_back(s2);
    rows = class_balance_stats(d2);
    CHECK(rows[1].percent == doctest::Approx(100.0 * 100.0 / 4096.0).epsilon(1e-9));
    CHECK(rows[0].percent + rows[1].percent == doctest::Approx(100.0).epsilon(1e-8));

    CHECK_THROWS_AS(class_balance_stats(DomainDataset{}), UsageError);
}

TEST_CASE("dataset spec validation rejects the documented invalid inputs") {
    DatasetSpec spec = small_spec();
    spec.image_size = 60;
    CHECK_THROWS_AS(spec.validate(), ShapeError);
    spec = small_spec();
    spec.num_source = 0;
    CHECK_THROWS_AS(spec.validate(), UsageError);
    spec = small_spec();
    spec.source_object_frequency = 0.0;
    CHECK_THROWS_AS(spec.validate(), UsageError);
    spec = small_spec();
    spec.target_object_frequency = 1.0;
    CHECK_THROWS_AS(spec.validate(), UsageError);
}
