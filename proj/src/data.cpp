#include "agat/data.hpp"

#include <algorithm>
#include <cmath>

#include "agat/errors.hpp"
#include "agat/image_io.hpp"
#include "agat/rng.hpp"

namespace agat {

const char* domain_name(Domain d) {
    switch (d) {
        case Domain::kSource: return "source";
        case Domain::kTarget: return "target";
        case Domain::kIntermediate: return "intermediate";
    }
    return "?";
}

Domain domain_from_name(const std::string& name) {
    if (name == "source") return Domain::kSource;
    if (name == "target") return Domain::kTarget;
    if (name == "intermediate") return Domain::kIntermediate;
    throw UsageError("unknown domain name: " + name);
}

int SemanticMap::count(std::uint8_t class_id) const {
    int n = 0;
    for (std::uint8_t v : labels) n += (v == class_id);
    return n;
}

ClassMask ClassMask::from_labels(const SemanticMap& labels, int class_id) {
    ClassMask m(labels.h, labels.w, class_id);
    for (size_t i = 0; i < labels.labels.size(); ++i) m.mask[i] = labels.labels[i] == class_id ? 1 : 0;
    return m;
}

ClassMask ClassMask::all_ones(int h, int w) {
    ClassMask m(h, w, -1);
    std::fill(m.mask.begin(), m.mask.end(), std::uint8_t{1});
    return m;
}

ClassMask ClassMask::all_zeros(int h, int w) { return ClassMask(h, w, -1); }

int ClassMask::active_count() const {
    int n = 0;
    for (std::uint8_t v : mask) n += v;
    return n;
}

ClassMask ClassMask::complement() const {
    ClassMask out(h, w, class_id);
    for (size_t i = 0; i < mask.size(); ++i) out.mask[i] = mask[i] ? 0 : 1;
    return out;
}

Tensor ClassMask::to_tensor() const {
    Tensor t(1, h, w);
    for (size_t i = 0; i < mask.size(); ++i) t.v[i] = mask[i] ? 1.0 : 0.0;
    return t;
}

double box_iou(const Box& a, const Box& b) {
    const int ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
    const int ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
    const int iw = std::max(0, ix1 - ix0), ih = std::max(0, iy1 - iy0);
    const double inter = static_cast<double>(iw) * ih;
    const double uni = static_cast<double>(a.area()) + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

DatasetSpec DatasetSpec::from_config(const Config& cfg) {
    DatasetSpec s;
    s.image_size = static_cast<int>(cfg.get_int("data", "image_size", s.image_size));
    s.num_source = static_cast<int>(cfg.get_int("data", "num_source", s.num_source));
    s.num_target = static_cast<int>(cfg.get_int("data", "num_target", s.num_target));
    s.num_intermediate = static_cast<int>(cfg.get_int("data", "num_intermediate", s.num_intermediate));
    s.objects_min = static_cast<int>(cfg.get_int("data", "objects_min", s.objects_min));
    s.objects_max = static_cast<int>(cfg.get_int("data", "objects_max", s.objects_max));
    s.object_size_min = static_cast<int>(cfg.get_int("data", "object_size_min", s.object_size_min));
    s.object_size_max = static_cast<int>(cfg.get_int("data", "object_size_max", s.object_size_max));
    s.object_shapes = cfg.get_string("data", "object_shapes", s.object_shapes);
    s.source_object_frequency = cfg.get_double("data", "source_object_frequency", s.source_object_frequency);
    s.target_object_frequency = cfg.get_double("data", "target_object_frequency", s.target_object_frequency);
    s.palette_source = cfg.get_rgb("data", "palette_source", s.palette_source);
    s.palette_target = cfg.get_rgb("data", "palette_target", s.palette_target);
    s.palette_intermediate = cfg.get_rgb("data", "palette_intermediate", s.palette_intermediate);
    s.background_noise = cfg.get_double("data", "background_noise", s.background_noise);
    s.background_gradient = cfg.get_double("data", "background_gradient", s.background_gradient);
    s.object_texture_noise = cfg.get_double("data", "object_texture_noise", s.object_texture_noise);
    s.object_edge_softness = cfg.get_double("data", "object_edge_softness", s.object_edge_softness);
    s.seed = cfg.get_u64("data", "seed", s.seed);
    s.validate();
    return s;
}

void DatasetSpec::to_config(Config& cfg) const {
    cfg.set_int("data", "image_size", image_size);
    cfg.set_int("data", "num_source", num_source);
    cfg.set_int("data", "num_target", num_target);
    cfg.set_int("data", "num_intermediate", num_intermediate);
    cfg.set_int("data", "objects_min", objects_min);
    cfg.set_int("data", "objects_max", objects_max);
    cfg.set_int("data", "object_size_min", object_size_min);
    cfg.set_int("data", "object_size_max", object_size_max);
    cfg.set("data", "object_shapes", object_shapes);
    cfg.set_double("data", "source_object_frequency", source_object_frequency);
    cfg.set_double("data", "target_object_frequency", target_object_frequency);
    auto set_rgb = [&](const char* key, const std::array<double, 3>& p) {
        cfg.set("data", key, std::to_string(p[0]) + "," + std::to_string(p[1]) + "," + std::to_string(p[2]));
    };
    set_rgb("palette_source", palette_source);
    set_rgb("palette_target", palette_target);
    set_rgb("palette_intermediate", palette_intermediate);
    cfg.set_double("data", "background_noise", background_noise);
    cfg.set_double("data", "background_gradient", background_gradient);
    cfg.set_double("data", "object_texture_noise", object_texture_noise);
    cfg.set_double("data", "object_edge_softness", object_edge_softness);
    cfg.set_int("data", "seed", static_cast<std::int64_t>(seed));
}

void DatasetSpec::validate() const {
    if (image_size <= 0 || image_size % kImageSizeMultiple != 0)
        throw ShapeError("image_size must be a positive multiple of " + std::to_string(kImageSizeMultiple));
    if (num_source < 1 || num_target < 1 || num_intermediate < 1) throw UsageError("sample counts must be >= 1");
    if (!(source_object_frequency > 0.0 && source_object_frequency < 1.0))
        throw UsageError("source_object_frequency must be in (0,1)");
    if (!(target_object_frequency > 0.0 && target_object_frequency < 1.0))
        throw UsageError("target_object_frequency must be in (0,1)");
    if (objects_min < 0 || objects_max < objects_min) throw UsageError("invalid object count range");
    if (object_size_min < 3 || object_size_max < object_size_min) throw UsageError("invalid object size range");
    if (object_size_max >= image_size / 2) throw UsageError("object_size_max too large for image_size");
    if (object_shapes != "both" && object_shapes != "ellipse" && object_shapes != "rectangle")
        throw UsageError("object_shapes must be both|ellipse|rectangle");
}

const std::array<double, 3>& DatasetSpec::palette(Domain d) const {
    switch (d) {
        case Domain::kSource: return palette_source;
        case Domain::kTarget: return palette_target;
        case Domain::kIntermediate: return palette_intermediate;
    }
    return palette_source;
}

std::array<double, 3> DatasetSpec::palette_shift() const {
    return {palette_target[0] - palette_source[0], palette_target[1] - palette_source[1], palette_target[2] - palette_source[2]};
}

double DatasetSpec::object_frequency(Domain d) const {
    switch (d) {
        case Domain::kSource: return source_object_frequency;
        case Domain::kTarget: return target_object_frequency;
        case Domain::kIntermediate: return 0.0;
    }
    return 0.0;
}

namespace {

// Coarse value-noise field: bilinear interpolation of a seeded control grid.
struct NoiseField {
    int cells;
    std::vector<double> control;  // (cells+1)^2

    NoiseField(int cells_, Rng& rng) : cells(cells_), control(static_cast<size_t>(cells_ + 1) * (cells_ + 1)) {
        for (double& v : control) v = rng.uniform(-1.0, 1.0);
    }

    double sample(double fy, double fx) const {
        const double gy = fy * cells, gx = fx * cells;
        const int y0 = std::min(static_cast<int>(gy), cells - 1);
        const int x0 = std::min(static_cast<int>(gx), cells - 1);
        const double ty = gy - y0, tx = gx - x0;
        auto c = [&](int y, int x) { return control[static_cast<size_t>(y) * (cells + 1) + x]; };
        const double top = c(y0, x0) * (1 - tx) + c(y0, x0 + 1) * tx;
        const double bot = c(y0 + 1, x0) * (1 - tx) + c(y0 + 1, x0 + 1) * tx;
        return top * (1 - ty) + bot * ty;
    }
};

constexpr std::array<std::array<double, 3>, 4> kObjectColorPool{{
    {0.85, 0.18, 0.15},
    {0.16, 0.35, 0.85},
    {0.88, 0.78, 0.12},
    {0.10, 0.72, 0.66},
}};

struct ShapeStencil {
    Box box;                  // tight label box
    Box bounds;               // sampled placement box
    std::vector<double> sd;   // signed distance (px, >0 inside) on bounds grid
    int label_area = 0;

    double sd_at(int y, int x) const { return sd[static_cast<size_t>(y - bounds.y0) * bounds.width() + (x - bounds.x0)]; }
};

ShapeStencil rasterize_shape(ObjectShape shape, const Box& bounds) {
    ShapeStencil st;
    st.bounds = bounds;
    st.sd.resize(static_cast<size_t>(bounds.height()) * bounds.width());
    const double cx = 0.5 * (bounds.x0 + bounds.x1);
    const double cy = 0.5 * (bounds.y0 + bounds.y1);
    const double a = 0.5 * bounds.width();
    const double b = 0.5 * bounds.height();
    int lx0 = bounds.x1, ly0 = bounds.y1, lx1 = bounds.x0, ly1 = bounds.y0;
    for (int y = bounds.y0; y < bounds.y1; ++y) {
        for (int x = bounds.x0; x < bounds.x1; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            double sd;
            if (shape == ObjectShape::kRectangle) {
                sd = std::min(std::min(px - bounds.x0, bounds.x1 - px), std::min(py - bounds.y0, bounds.y1 - py));
            } else {
                const double r = std::sqrt(((px - cx) / a) * ((px - cx) / a) + ((py - cy) / b) * ((py - cy) / b));
                sd = (1.0 - r) * std::min(a, b);
            }
            st.sd[static_cast<size_t>(y - bounds.y0) * bounds.width() + (x - bounds.x0)] = sd;
            if (sd >= 0.0) {
                ++st.label_area;
                lx0 = std::min(lx0, x);
                ly0 = std::min(ly0, y);
                lx1 = std::max(lx1, x + 1);
                ly1 = std::max(ly1, y + 1);
            }
        }
    }
    st.box = st.label_area > 0 ? Box{lx0, ly0, lx1, ly1} : Box{bounds.x0, bounds.y0, bounds.x0, bounds.y0};
    return st;
}

bool boxes_too_close(const Box& a, const Box& b, int margin) {
    return a.x0 - margin < b.x1 && b.x0 - margin < a.x1 && a.y0 - margin < b.y1 && b.y0 - margin < a.y1;
}

void paint_object(ImageSample& img, SemanticMap& labels, const ShapeStencil& st, const std::array<double, 3>& fill, Domain domain,
                  const DatasetSpec& spec, Rng& rng) {
    const bool soft = domain == Domain::kTarget;
    for (int y = st.bounds.y0; y < st.bounds.y1; ++y) {
        for (int x = st.bounds.x0; x < st.bounds.x1; ++x) {
            const double sd = st.sd_at(y, x);
            double alpha;
            if (soft) {
                alpha = std::clamp(0.5 + sd / spec.object_edge_softness, 0.0, 1.0);
            } else {
                alpha = sd >= 0.0 ? 1.0 : 0.0;
            }
            // Texture noise is drawn for every in-bounds pixel so the rng
            // stream does not depend on alpha values.
            const double jitter = soft ? rng.uniform(-spec.object_texture_noise, spec.object_texture_noise) : 0.0;
            if (alpha <= 0.0) continue;
            const double shade = soft ? 1.0 - 0.18 * (y - st.bounds.y0) / std::max(1, st.bounds.height() - 1) : 1.0;
            for (int c = 0; c < 3; ++c) {
                const double obj = std::clamp(fill[c] * shade + jitter, 0.0, 1.0);
                img.pixels.at(c, y, x) = alpha * obj + (1.0 - alpha) * img.pixels.at(c, y, x);
            }
            if (sd >= 0.0) labels.at(y, x) = kObjectClass;
        }
    }
}

}  // namespace

std::pair<ImageSample, SemanticMap> generate_background(Domain domain, int h, int w, std::uint64_t seed, const DatasetSpec& spec) {
    if (h <= 0 || w <= 0 || h % kImageSizeMultiple != 0 || w % kImageSizeMultiple != 0)
        throw ShapeError("background size must be a positive multiple of " + std::to_string(kImageSizeMultiple));

    // Structure depends on the seed only: all domains at one seed share the
    // same gradient and noise realization, shifted by palette.
    Rng rng = Rng(seed).fork("background");
    const double theta = rng.uniform(0.0, 6.283185307179586);
    const double gx = std::cos(theta), gy = std::sin(theta);
    NoiseField coarse(8, rng);
    NoiseField fine(std::max(8, w / 4), rng);

    const auto& base = spec.palette(domain);
    ImageSample img;
    img.pixels = Tensor(3, h, w);
    img.domain = domain;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double fy = (y + 0.5) / h, fx = (x + 0.5) / w;
            const double grad = spec.background_gradient * (gx * (fx - 0.5) + gy * (fy - 0.5)) * 2.0;
            const double noise = spec.background_noise * (0.7 * coarse.sample(fy, fx) + 0.3 * fine.sample(fy, fx));
            for (int c = 0; c < 3; ++c) img.pixels.at(c, y, x) = std::clamp(base[c] + grad + noise, 0.0, 1.0);
        }
    }
    quantize_inplace(img.pixels);
    return {std::move(img), SemanticMap(h, w)};
}

InPaintResult in_paint_objects(const ImageSample& scene, const SemanticMap& labels, const DatasetSpec& spec, std::uint64_t seed) {
    if (scene.pixels.h != labels.h || scene.pixels.w != labels.w) throw ShapeError("in_paint_objects: image/label shape mismatch");
    if (labels.count(kObjectClass) != 0) throw ShapeError("in_paint_objects: scene already contains object pixels");

    InPaintResult out;
    out.image = scene;
    out.labels = labels;

    const int h = labels.h, w = labels.w;
    const double budget = spec.object_frequency(scene.domain) * h * w;
    if (budget <= 0.0 || spec.objects_max == 0) {
        out.achieved_fraction = 0.0;
        return out;
    }

    Rng rng = Rng(seed).fork("objects");
    int placed_px = 0;
    std::vector<Box> taken;

    while (static_cast<int>(out.objects.size()) < spec.objects_max) {
        const int count = static_cast<int>(out.objects.size());
        const double remaining = budget - placed_px;
        if (count >= spec.objects_min && remaining <= 0.0) break;

        // Bias the proposal toward the remaining budget so the expected
        // covered area tracks the frequency target.
        const int hint = static_cast<int>(std::floor(std::sqrt(std::max(remaining, 1.0) / 0.8)));
        const int hi = std::clamp(hint, spec.object_size_min, spec.object_size_max);
        const int ow = static_cast<int>(rng.uniform_int(spec.object_size_min, hi));
        const int oh = static_cast<int>(rng.uniform_int(spec.object_size_min, hi));
        ObjectShape shape;
        if (spec.object_shapes == "ellipse") {
            shape = ObjectShape::kEllipse;
        } else if (spec.object_shapes == "rectangle") {
            shape = ObjectShape::kRectangle;
        } else {
            shape = rng.bernoulli(0.5) ? ObjectShape::kEllipse : ObjectShape::kRectangle;
        }
        const double est_area = shape == ObjectShape::kRectangle ? ow * oh : 0.785398163 * ow * oh;

        if (count >= spec.objects_min && est_area > remaining) {
            // Unbiased rounding: place the final object with probability
            // remaining/area, then stop.
            if (!rng.bernoulli(remaining / est_area)) break;
        }

        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            const int x0 = static_cast<int>(rng.uniform_int(1, w - ow - 1));
            const int y0 = static_cast<int>(rng.uniform_int(1, h - oh - 1));
            const Box bounds{x0, y0, x0 + ow, y0 + oh};
            bool clash = false;
            for (const Box& t : taken)
                if (boxes_too_close(bounds, t, 2)) {
                    clash = true;
                    break;
                }
            if (clash) continue;

            ShapeStencil st = rasterize_shape(shape, bounds);
            if (st.label_area == 0) break;
            const auto& fill = kObjectColorPool[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(kObjectColorPool.size()) - 1))];
            std::array<double, 3> styled = fill;
            if (scene.domain == Domain::kTarget) {
                for (int c = 0; c < 3; ++c) styled[c] = 0.55 * fill[c] + 0.45 * spec.palette_target[c];
            }
            Rng paint_rng = rng.fork(static_cast<std::uint64_t>(count) * 977 + attempt);
            paint_object(out.image, out.labels, st, styled, scene.domain, spec, paint_rng);
            placed_px += st.label_area;
            taken.push_back(bounds);
            ObjectRecord rec;
            rec.box = st.box;
            rec.shape = shape;
            rec.fill = styled;
            out.objects.push_back(rec);
            placed = true;
        }
        if (!placed) {
            out.budget_reached = false;  // ran out of collision-free spots
            break;
        }
        if (count + 1 >= spec.objects_min && est_area > remaining) break;
    }

    quantize_inplace(out.image.pixels);
    out.achieved_fraction = static_cast<double>(placed_px) / (static_cast<double>(h) * w);
    return out;
}

std::uint64_t sample_seed_for(const DatasetSpec& spec, Domain domain, int index) {
    const std::uint64_t tag = (static_cast<std::uint64_t>(domain) << 32) | static_cast<std::uint64_t>(index);
    return splitmix64(splitmix64(spec.seed) ^ tag);
}

LabeledSample build_sample(const DatasetSpec& spec, Domain domain, int index) {
    const std::uint64_t seed = sample_seed_for(spec, domain, index);
    auto [bg, empty_labels] = generate_background(domain, spec.image_size, spec.image_size, seed, spec);
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "%s_%05d", domain_name(domain), index);
    bg.id = idbuf;

    LabeledSample sample;
    sample.sample_seed = seed;
    if (domain == Domain::kIntermediate) {
        sample.image = std::move(bg);
        sample.labels = std::move(empty_labels);
        sample.achieved_fraction = 0.0;
        return sample;
    }
    InPaintResult r = in_paint_objects(bg, empty_labels, spec, seed);
    r.image.id = bg.id;
    sample.image = std::move(r.image);
    sample.labels = std::move(r.labels);
    sample.objects = std::move(r.objects);
    sample.placement_complete = r.budget_reached;
    sample.achieved_fraction = r.achieved_fraction;
    return sample;
}

ToyDatasets build_dataset(const DatasetSpec& spec) {
    spec.validate();
    ToyDatasets out;
    out.source.domain = Domain::kSource;
    out.target.domain = Domain::kTarget;
    out.intermediate.domain = Domain::kIntermediate;
    for (int i = 0; i < spec.num_source; ++i) out.source.samples.push_back(build_sample(spec, Domain::kSource, i));
    for (int i = 0; i < spec.num_target; ++i) out.target.samples.push_back(build_sample(spec, Domain::kTarget, i));
    for (int i = 0; i < spec.num_intermediate; ++i) out.intermediate.samples.push_back(build_sample(spec, Domain::kIntermediate, i));
    return out;
}

std::vector<ClassBalanceRow> class_balance_stats(const DomainDataset& dataset) {
    if (dataset.samples.empty()) throw UsageError("class_balance_stats: empty dataset");
    double total = 0.0;
    std::array<double, kNumClasses> counts{};
    for (const auto& s : dataset.samples) {
        for (std::uint8_t v : s.labels.labels) {
            if (v >= kNumClasses) throw ShapeError("label outside declared class set");
            counts[v] += 1.0;
        }
        total += static_cast<double>(s.labels.size());
    }
    std::vector<ClassBalanceRow> rows;
    rows.push_back({kBackgroundClass, "background", 100.0 * counts[kBackgroundClass] / total});
    rows.push_back({kObjectClass, "object", 100.0 * counts[kObjectClass] / total});
    return rows;
}

}  // namespace agat
