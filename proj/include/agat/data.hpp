#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "agat/config.hpp"
#include "agat/tensor.hpp"

namespace agat {

enum class Domain { kSource, kTarget, kIntermediate };

const char* domain_name(Domain d);
Domain domain_from_name(const std::string& name);

constexpr std::uint8_t kBackgroundClass = 0;
constexpr std::uint8_t kObjectClass = 1;
constexpr int kNumClasses = 2;

// Images must be divisible by this so every discriminator stride-2 block
// halves cleanly (3 blocks -> factor 8).
constexpr int kImageSizeMultiple = 8;

struct ImageSample {
    Tensor pixels;  // 3×H×W in [0,1]
    Domain domain = Domain::kSource;
    std::string id;
};

// Per-pixel class labels, same H×W as the image it annotates.
struct SemanticMap {
    int h = 0, w = 0;
    std::vector<std::uint8_t> labels;

    SemanticMap() = default;
    SemanticMap(int h_, int w_) : h(h_), w(w_), labels(static_cast<size_t>(h_) * w_, kBackgroundClass) {}

    std::uint8_t& at(int y, int x) { return labels[static_cast<size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return labels[static_cast<size_t>(y) * w + x]; }
    size_t size() const { return labels.size(); }

    int count(std::uint8_t class_id) const;
};

// Binary indicator of one class; the gating signal for split discriminators.
struct ClassMask {
    int h = 0, w = 0;
    int class_id = -1;
    std::vector<std::uint8_t> mask;

    ClassMask() = default;
    ClassMask(int h_, int w_, int class_id_) : h(h_), w(w_), class_id(class_id_), mask(static_cast<size_t>(h_) * w_, 0) {}

    static ClassMask from_labels(const SemanticMap& labels, int class_id);
    static ClassMask all_ones(int h, int w);   // M over all classes
    static ClassMask all_zeros(int h, int w);  // M over no classes

    std::uint8_t& at(int y, int x) { return mask[static_cast<size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return mask[static_cast<size_t>(y) * w + x]; }

    int active_count() const;
    bool none_active() const { return active_count() == 0; }
    ClassMask complement() const;
    Tensor to_tensor() const;  // 1×H×W of exact 0.0 / 1.0
};

// Axis-aligned box, half-open [x0,x1)×[y0,y1) in pixels.
struct Box {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    int area() const { return width() * height(); }
};

double box_iou(const Box& a, const Box& b);

enum class ObjectShape { kEllipse, kRectangle };

struct ObjectRecord {
    Box box;  // tight box around labeled pixels
    ObjectShape shape = ObjectShape::kEllipse;
    std::array<double, 3> fill{};
};

struct DatasetSpec {
    int image_size = 64;
    int num_source = 500;
    int num_target = 500;
    int num_intermediate = 500;

    int objects_min = 1;
    int objects_max = 8;
    int object_size_min = 6;
    int object_size_max = 14;
    // "both" | "ellipse" | "rectangle"
    std::string object_shapes = "both";

    double source_object_frequency = 0.08;
    double target_object_frequency = 0.01;

    std::array<double, 3> palette_source{0.34, 0.40, 0.36};
    std::array<double, 3> palette_target{0.42, 0.36, 0.44};
    std::array<double, 3> palette_intermediate{0.38, 0.38, 0.40};
    double background_noise = 0.03;
    double background_gradient = 0.05;

    // TARGET object styling: texture amplitude and edge ramp width in px.
    double object_texture_noise = 0.06;
    double object_edge_softness = 2.0;

    std::uint64_t seed = 1;

    static DatasetSpec from_config(const Config& cfg);
    void to_config(Config& cfg) const;
    void validate() const;

    const std::array<double, 3>& palette(Domain d) const;
    // Documented per-channel background difference TARGET - SOURCE.
    std::array<double, 3> palette_shift() const;
    double object_frequency(Domain d) const;
};

struct LabeledSample {
    ImageSample image;
    SemanticMap labels;
    std::uint64_t sample_seed = 0;  // re-deriving this seed re-renders the empty background
    std::vector<ObjectRecord> objects;
    bool placement_complete = true;
    double achieved_fraction = 0.0;
};

struct DomainDataset {
    Domain domain = Domain::kSource;
    std::vector<LabeledSample> samples;
};

struct ToyDatasets {
    DomainDataset source, target, intermediate;
};

// Deterministic all-background scene. SOURCE/TARGET/INTERMEDIATE at the same
// seed share the same structure field and differ only by palette.
std::pair<ImageSample, SemanticMap> generate_background(Domain domain, int h, int w, std::uint64_t seed, const DatasetSpec& spec);

struct InPaintResult {
    ImageSample image;
    SemanticMap labels;
    std::vector<ObjectRecord> objects;
    bool budget_reached = true;  // false when placement attempts ran out
    double achieved_fraction = 0.0;
};

// Places non-overlapping styled objects until the domain's pixel budget is
// met in expectation. Scene must contain no object pixels yet.
InPaintResult in_paint_objects(const ImageSample& scene, const SemanticMap& labels, const DatasetSpec& spec, std::uint64_t seed);

std::uint64_t sample_seed_for(const DatasetSpec& spec, Domain domain, int index);

// Regenerates exactly one dataset sample (with objects for SOURCE/TARGET).
LabeledSample build_sample(const DatasetSpec& spec, Domain domain, int index);

ToyDatasets build_dataset(const DatasetSpec& spec);

struct ClassBalanceRow {
    int class_id = 0;
    std::string name;
    double percent = 0.0;
};

// Per-class pixel percentage over a whole dataset; percentages sum to 100.
std::vector<ClassBalanceRow> class_balance_stats(const DomainDataset& dataset);

}  // namespace agat
