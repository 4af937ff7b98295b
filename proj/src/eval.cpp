#include "agat/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "agat/checkpoint.hpp"
#include "agat/dataset_store.hpp"
#include "agat/errors.hpp"
#include "agat/image_io.hpp"
#include "agat/serialize.hpp"

namespace agat::eval {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics

double object_preservation(const Tensor& original, const Tensor& translated, const Tensor& background, const ClassMask& object_mask) {
    require_same_shape(original, translated, "object_preservation");
    require_same_shape(original, background, "object_preservation");
    if (object_mask.h != original.h || object_mask.w != original.w) throw ShapeError("object_preservation: mask shape mismatch");
    if (object_mask.none_active()) throw UsageError("object_preservation: empty object mask");

    double kept = 0.0, full = 0.0;
    for (int c = 0; c < original.c; ++c) {
        const double* po = original.channel(c);
        const double* pt = translated.channel(c);
        const double* pb = background.channel(c);
        for (size_t i = 0; i < object_mask.mask.size(); ++i) {
            if (!object_mask.mask[i]) continue;
            const double object_signal = std::abs(po[i] - pb[i]);
            const double translated_signal = std::abs(pt[i] - pb[i]);
            // Overshooting away from the background still counts as fully kept.
            kept += std::min(translated_signal, object_signal);
            full += object_signal;
        }
    }
    if (full < 1e-12) return 1.0;  // object indistinguishable from background
    return kept / full;
}

double attention_iou(const Tensor& attention, const ClassMask& gt_mask, double tau) {
    if (attention.c != 1 || attention.h != gt_mask.h || attention.w != gt_mask.w) throw ShapeError("attention_iou: shape mismatch");
    int inter = 0, uni = 0;
    for (size_t i = 0; i < gt_mask.mask.size(); ++i) {
        const bool a = attention.v[i] >= tau;
        const bool g = gt_mask.mask[i] != 0;
        inter += a && g;
        uni += a || g;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// Toy detector

void DetectorConfig::validate() const {
    if (iters < 1 || minibatch < 1 || base < 1) throw UsageError("invalid detector config");
    if (!(lr > 0.0) || !(anchor > 0.0)) throw UsageError("invalid detector config");
}

EvalConfig EvalConfig::from_config(const Config& cfg) {
    EvalConfig e;
    e.detector.iters = static_cast<int>(cfg.get_int("eval", "detector_iters", e.detector.iters));
    e.detector.minibatch = static_cast<int>(cfg.get_int("eval", "detector_minibatch", e.detector.minibatch));
    e.detector.lr = cfg.get_double("eval", "detector_lr", e.detector.lr);
    e.detector.box_weight = cfg.get_double("eval", "detector_box_weight", e.detector.box_weight);
    e.detector.anchor = cfg.get_double("eval", "detector_anchor", e.detector.anchor);
    e.detector.score_threshold = cfg.get_double("eval", "detector_score_threshold", e.detector.score_threshold);
    e.detector.nms_iou = cfg.get_double("eval", "detector_nms_iou", e.detector.nms_iou);
    e.detector.base = static_cast<int>(cfg.get_int("eval", "detector_base", e.detector.base));
    e.min_object_size = static_cast<int>(cfg.get_int("eval", "min_object_size", e.min_object_size));
    e.attention_tau = cfg.get_double("eval", "attention_tau", e.attention_tau);
    e.detector.validate();
    if (e.min_object_size < 0) throw UsageError("eval.min_object_size must be >= 0");
    if (!(e.attention_tau > 0.0 && e.attention_tau < 1.0)) throw UsageError("eval.attention_tau must be in (0,1)");
    return e;
}

void EvalConfig::to_config(Config& cfg) const {
    cfg.set_int("eval", "detector_iters", detector.iters);
    cfg.set_int("eval", "detector_minibatch", detector.minibatch);
    cfg.set_double("eval", "detector_lr", detector.lr);
    cfg.set_double("eval", "detector_box_weight", detector.box_weight);
    cfg.set_double("eval", "detector_anchor", detector.anchor);
    cfg.set_double("eval", "detector_score_threshold", detector.score_threshold);
    cfg.set_double("eval", "detector_nms_iou", detector.nms_iou);
    cfg.set_int("eval", "detector_base", detector.base);
    cfg.set_int("eval", "min_object_size", min_object_size);
    cfg.set_double("eval", "attention_tau", attention_tau);
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct CellTarget {
    double tx, ty, tw, th;
};

// Grad of BCE-with-logits objectness plus L2 box terms on positive cells.
Tensor detector_grad(const Tensor& pred, const LabeledSample& sample, const DetectorConfig& cfg, int cell_px, double scale) {
    const int n = pred.h;
    Tensor grad(pred.c, n, n);

    std::vector<std::int8_t> positive(static_cast<size_t>(n) * n, 0);
    std::vector<CellTarget> targets(static_cast<size_t>(n) * n);
    int num_pos = 0;
    for (const ObjectRecord& o : sample.objects) {
        const double cx = 0.5 * (o.box.x0 + o.box.x1);
        const double cy = 0.5 * (o.box.y0 + o.box.y1);
        const int gx = std::clamp(static_cast<int>(cx) / cell_px, 0, n - 1);
        const int gy = std::clamp(static_cast<int>(cy) / cell_px, 0, n - 1);
        const size_t idx = static_cast<size_t>(gy) * n + gx;
        if (!positive[idx]) ++num_pos;
        positive[idx] = 1;
        targets[idx] = {cx / cell_px - gx, cy / cell_px - gy, std::log(std::max(1.0, static_cast<double>(o.box.width())) / cfg.anchor),
                        std::log(std::max(1.0, static_cast<double>(o.box.height())) / cfg.anchor)};
    }

    const double obj_norm = scale / (n * n);
    const double box_norm = num_pos > 0 ? cfg.box_weight * scale / num_pos : 0.0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const size_t idx = static_cast<size_t>(y) * n + x;
            const double p = sigmoid(pred.at(0, y, x));
            grad.at(0, y, x) = (p - (positive[idx] ? 1.0 : 0.0)) * obj_norm;
            if (!positive[idx]) continue;
            const CellTarget& t = targets[idx];
            const double px = sigmoid(pred.at(1, y, x));
            const double py = sigmoid(pred.at(2, y, x));
            grad.at(1, y, x) = 2.0 * (px - t.tx) * px * (1.0 - px) * box_norm;
            grad.at(2, y, x) = 2.0 * (py - t.ty) * py * (1.0 - py) * box_norm;
            grad.at(3, y, x) = 2.0 * (pred.at(3, y, x) - t.tw) * box_norm;
            grad.at(4, y, x) = 2.0 * (pred.at(4, y, x) - t.th) * box_norm;
        }
    return grad;
}

}  // namespace

nn::DetectorNet train_toy_detector(const DomainDataset& data, const DetectorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (data.samples.empty()) throw DependencyError("toy detector: empty training dataset");
    bool any_positive = false;
    for (const LabeledSample& s : data.samples)
        if (!s.objects.empty()) {
            any_positive = true;
            break;
        }
    if (!any_positive) throw DependencyError("toy detector: training dataset has no positive samples");

    nn::DetectorArch arch;
    arch.base = cfg.base;
    nn::DetectorNet net(arch);
    Rng master(seed);
    Rng init = master.fork("detector/init");
    net.init_weights(init);
    Rng batch_rng = master.fork("detector/batch");
    nn::Adam opt({cfg.lr, 0.9, 0.999, 1e-8}, net.params());

    const int cell_px = data.samples[0].image.pixels.h / net.grid_side(data.samples[0].image.pixels.h);
    for (int iter = 0; iter < cfg.iters; ++iter) {
        net.zero_grads();
        const double scale = 1.0 / cfg.minibatch;
        for (int k = 0; k < cfg.minibatch; ++k) {
            const LabeledSample& s = data.samples[batch_rng.uniform_int(0, static_cast<int>(data.samples.size()) - 1)];
            nn::Tape tape;
            const Tensor pred = net.forward(s.image.pixels, tape);
            net.backward(detector_grad(pred, s, cfg, cell_px, scale), tape);
        }
        opt.step(net.params());
    }
    return net;
}

std::vector<Detection> detect_objects(const nn::DetectorNet& net, const Tensor& image, const DetectorConfig& cfg, int image_index) {
    nn::Tape tape;
    const Tensor pred = net.forward(image, tape);
    const int n = pred.h;
    const int cell_px = image.h / n;

    std::vector<Detection> raw;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const double score = sigmoid(pred.at(0, y, x));
            if (score < cfg.score_threshold) continue;
            const double cx = (x + sigmoid(pred.at(1, y, x))) * cell_px;
            const double cy = (y + sigmoid(pred.at(2, y, x))) * cell_px;
            const double bw = cfg.anchor * std::exp(std::clamp(pred.at(3, y, x), -3.0, 3.0));
            const double bh = cfg.anchor * std::exp(std::clamp(pred.at(4, y, x), -3.0, 3.0));
            Box box;
            box.x0 = std::clamp(static_cast<int>(std::lround(cx - bw / 2)), 0, image.w - 1);
            box.y0 = std::clamp(static_cast<int>(std::lround(cy - bh / 2)), 0, image.h - 1);
            box.x1 = std::clamp(static_cast<int>(std::lround(cx + bw / 2)), box.x0 + 1, image.w);
            box.y1 = std::clamp(static_cast<int>(std::lround(cy + bh / 2)), box.y0 + 1, image.h);
            raw.push_back({image_index, box, score});
        }

    std::stable_sort(raw.begin(), raw.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
    std::vector<Detection> kept;
    for (const Detection& d : raw) {
        bool suppressed = false;
        for (const Detection& k : kept)
            if (box_iou(d.box, k.box) > cfg.nms_iou) {
                suppressed = true;
                break;
            }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

ApResult average_precision(std::vector<Detection> detections, const std::vector<std::vector<Box>>& gt_per_image, int min_object_size,
                           double iou_thresh) {
    ApResult out;
    std::vector<std::vector<bool>> ignored(gt_per_image.size()), matched(gt_per_image.size());
    for (size_t i = 0; i < gt_per_image.size(); ++i) {
        ignored[i].resize(gt_per_image[i].size());
        matched[i].resize(gt_per_image[i].size());
        for (size_t g = 0; g < gt_per_image[i].size(); ++g) {
            ignored[i][g] = gt_per_image[i][g].height() < min_object_size;
            if (!ignored[i][g]) ++out.num_gt;
        }
    }
    out.num_detections = static_cast<int>(detections.size());
    if (out.num_gt == 0) {
        out.undefined = true;
        out.ap = 0.0;
        return out;
    }

    std::stable_sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });

    double ap = 0.0;
    int tp = 0, counted = 0;
    for (const Detection& d : detections) {
        const auto& gts = gt_per_image.at(static_cast<size_t>(d.image_index));
        int best_g = -1;
        double best_iou = 0.0;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (ignored[d.image_index][g] || matched[d.image_index][g]) continue;
            const double iou = box_iou(d.box, gts[g]);
            if (iou > best_iou) {
                best_iou = iou;
                best_g = static_cast<int>(g);
            }
        }
        if (best_g >= 0 && best_iou >= iou_thresh) {
            matched[d.image_index][best_g] = true;
            ++tp;
            ++counted;
            ap += static_cast<double>(tp) / counted;  // precision at this recall step
            continue;
        }
        // Overlapping an ignored (too-small) object is neither TP nor FP.
        bool hits_ignored = false;
        for (size_t g = 0; g < gts.size(); ++g)
            if (ignored[d.image_index][g] && box_iou(d.box, gts[g]) >= iou_thresh) {
                hits_ignored = true;
                break;
            }
        if (!hits_ignored) ++counted;
    }
    out.ap = ap / out.num_gt;
    return out;
}

ApResult detector_ap(const nn::DetectorNet& net, const DomainDataset& eval_data, int min_object_size, const DetectorConfig& cfg) {
    std::vector<Detection> all;
    std::vector<std::vector<Box>> gts(eval_data.samples.size());
    for (size_t i = 0; i < eval_data.samples.size(); ++i) {
        const LabeledSample& s = eval_data.samples[i];
        for (const ObjectRecord& o : s.objects) gts[i].push_back(o.box);
        std::vector<Detection> dets = detect_objects(net, s.image.pixels, cfg, static_cast<int>(i));
        all.insert(all.end(), dets.begin(), dets.end());
    }
    return average_precision(std::move(all), gts, min_object_size);
}

// ---------------------------------------------------------------------------
// evaluate

namespace {

nn::EncoderDecoderNet load_generator(const std::string& run_dir, const std::string& producing_command) {
    const std::string path = run_dir + "/checkpoints/final/g_st.ckpt";
    if (!fs::exists(path)) throw DependencyError("no generator checkpoint at " + path + "; run " + producing_command + " first");
    return nn::load_encoder_decoder(path);
}

json quartile_stats(std::vector<double> values) {
    json j;
    if (values.empty()) {
        j["count"] = 0;
        return j;
    }
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double pos = q * (values.size() - 1);
        const size_t lo = static_cast<size_t>(pos);
        const size_t hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - lo) * (values[hi] - values[lo]);
    };
    double mean = 0.0;
    for (double v : values) mean += v;
    j["count"] = values.size();
    j["mean"] = mean / values.size();
    j["median"] = quantile(0.5);
    j["q1"] = quantile(0.25);
    j["q3"] = quantile(0.75);
    return j;
}

DomainDataset translate_domain(nn::EncoderDecoderNet& gen, const DomainDataset& data) {
    DomainDataset out;
    out.domain = data.domain;
    out.samples.reserve(data.samples.size());
    for (const LabeledSample& s : data.samples) {
        LabeledSample t = s;
        nn::Tape tape;
        t.image.pixels = gen.forward(s.image.pixels, tape);
        quantize_inplace(t.image.pixels);
        out.samples.push_back(std::move(t));
    }
    return out;
}

}  // namespace

json evaluate_run(const EvaluateInputs& in, const EvalConfig& cfg, std::uint64_t seed, const train::RunPaths& out) {
    train::ensure_dir(out.root);
    json report;
    report["seed"] = seed;
    json gaps = json::array();

    DatasetSpec eval_spec;
    ToyDatasets eval_data = load_dataset(in.eval_data_dir, &eval_spec);
    report["eval_dataset_hash"] = dataset_manifest_hash(in.eval_data_dir);

    // --- object preservation per trained arm ---
    struct Arm {
        const char* name;
        const std::string* run;
        const char* command;
    };
    const Arm arms[] = {
        {"baseline", &in.baseline_run, "train-baseline"},
        {"adapted", &in.stage2_run, "train-stage2"},
        {"annotation", &in.annotation_run, "train-annotation-split"},
    };
    for (const Arm& arm : arms) {
        if (arm.run->empty()) {
            gaps.push_back(std::string("preservation/") + arm.name);
            continue;
        }
        nn::EncoderDecoderNet gen = load_generator(*arm.run, arm.command);
        std::vector<double> values;
        for (const LabeledSample& s : eval_data.source.samples) {
            const ClassMask gt = ClassMask::from_labels(s.labels, kObjectClass);
            if (gt.none_active()) continue;
            nn::Tape tape;
            const Tensor translated = gen.forward(s.image.pixels, tape);
            auto [bg, bg_labels] = generate_background(Domain::kSource, s.image.pixels.h, s.image.pixels.w, s.sample_seed, eval_spec);
            values.push_back(object_preservation(s.image.pixels, translated, bg.pixels, gt));
        }
        report["preservation"][arm.name] = quartile_stats(std::move(values));
    }

    // --- attention alignment ---
    struct AttArm {
        const char* name;
        const std::string* run;
    };
    const AttArm att_arms[] = {{"intermediate", &in.stage1_run}, {"direct", &in.stage1_direct_run}};
    for (const AttArm& arm : att_arms) {
        if (arm.run->empty()) {
            gaps.push_back(std::string("attention/") + arm.name);
            continue;
        }
        const std::string path = *arm.run + "/checkpoints/final/att_s.ckpt";
        if (!fs::exists(path)) throw DependencyError("no attention checkpoint at " + path + "; run train-stage1 first");
        nn::EncoderDecoderNet att = nn::load_encoder_decoder(path);
        std::vector<double> ious;
        for (const LabeledSample& s : eval_data.source.samples) {
            nn::Tape tape;
            const Tensor att_map = att.forward(s.image.pixels, tape);
            ious.push_back(attention_iou(att_map, ClassMask::from_labels(s.labels, kObjectClass), cfg.attention_tau));
        }
        json stats = quartile_stats(std::move(ious));
        stats["tau"] = cfg.attention_tau;
        report["attention"][arm.name] = stats;
    }

    // --- downstream detection grid ---
    if (in.train_data_dir.empty()) {
        gaps.push_back("detection");
    } else {
        DatasetSpec train_spec;
        ToyDatasets train_data = load_dataset(in.train_data_dir, &train_spec);
        report["train_dataset_hash"] = dataset_manifest_hash(in.train_data_dir);
        if (fs::exists(in.train_data_dir + "/class_balance.json"))
            report["class_balance"] = json::parse(read_file(in.train_data_dir + "/class_balance.json"));

        std::vector<std::pair<std::string, const DomainDataset*>> det_arms;
        det_arms.emplace_back("target", &train_data.target);
        det_arms.emplace_back("augmented", &train_data.source);
        DomainDataset adapted;
        if (!in.stage2_run.empty()) {
            nn::EncoderDecoderNet gen = load_generator(in.stage2_run, "train-stage2");
            adapted = translate_domain(gen, train_data.source);
            save_domain_dataset(out.root + "/adapted", adapted, train_spec);
            det_arms.emplace_back("adapted", &adapted);
        } else {
            gaps.push_back("detection/adapted");
        }

        for (const auto& [name, dataset] : det_arms) {
            const std::uint64_t det_seed = Rng(seed).fork("detector/" + name).next_u64();
            nn::DetectorNet det = train_toy_detector(*dataset, cfg.detector, det_seed);
            const ApResult full = detector_ap(det, eval_data.target, 0, cfg.detector);
            const ApResult filtered = detector_ap(det, eval_data.target, cfg.min_object_size, cfg.detector);
            json arm;
            arm["full"] = {{"ap", full.ap}, {"num_gt", full.num_gt}, {"num_detections", full.num_detections}, {"undefined", full.undefined}};
            arm["filtered"] = {{"ap", filtered.ap}, {"num_gt", filtered.num_gt}, {"num_detections", filtered.num_detections},
                               {"undefined", filtered.undefined}};
            report["detection"][name] = arm;
        }
        report["min_object_size"] = cfg.min_object_size;
    }

    report["gaps"] = gaps;
    write_file(out.root + "/eval_report.json", report.dump(2) + "\n");
    return report;
}

// ---------------------------------------------------------------------------
// report merging and rendering

json merge_reports(const std::vector<json>& reports) {
    if (reports.empty()) throw DependencyError("report: no evaluation reports given; run evaluate first");
    json merged;
    json seeds = json::array();
    for (const json& r : reports) seeds.push_back(r.value("seed", 0ULL));
    merged["seeds"] = seeds;

    auto collect = [&](const char* section, const char* arm, const char* field) {
        json values = json::array();
        for (const json& r : reports)
            if (r.contains(section) && r[section].contains(arm) && r[section][arm].contains(field)) values.push_back(r[section][arm][field]);
        return values;
    };
    auto mean_of = [](const json& values) {
        if (values.empty()) return 0.0;
        double s = 0.0;
        for (const auto& v : values) s += v.get<double>();
        return s / values.size();
    };

    for (const char* arm : {"baseline", "adapted", "annotation"}) {
        const json means = collect("preservation", arm, "mean");
        if (means.empty()) continue;
        merged["preservation"][arm]["per_seed_mean"] = means;
        merged["preservation"][arm]["mean"] = mean_of(means);
    }
    for (const char* routing : {"intermediate", "direct"}) {
        const json medians = collect("attention", routing, "median");
        if (medians.empty()) continue;
        merged["attention"][routing]["per_seed_median"] = medians;
        merged["attention"][routing]["mean_median"] = mean_of(medians);
    }

    // Table-2-shaped grid with ratio-to-upper-bound columns.
    for (const char* row : {"full", "filtered"}) {
        bool have_row = false;
        for (const char* arm : {"target", "augmented", "adapted"}) {
            json aps = json::array();
            json ratios = json::array();
            for (const json& r : reports) {
                if (!r.contains("detection") || !r["detection"].contains(arm)) continue;
                const double ap = r["detection"][arm][row]["ap"].get<double>();
                const double upper = r["detection"]["target"][row]["ap"].get<double>();
                aps.push_back(ap);
                ratios.push_back(upper > 0.0 ? ap / upper : 0.0);
                have_row = true;
            }
            if (aps.empty()) continue;
            merged["detection"][row][arm]["ap_per_seed"] = aps;
            merged["detection"][row][arm]["ap_mean"] = mean_of(aps);
            merged["detection"][row][arm]["ratio_per_seed"] = ratios;
            merged["detection"][row][arm]["ratio_mean"] = mean_of(ratios);
        }
        if (have_row) {
            // Direction-of-effect flags per seed: adapted beats augmented,
            // upper bound beats both.
            json adapted_wins = json::array();
            json upper_wins = json::array();
            for (const json& r : reports) {
                if (!r.contains("detection") || !r["detection"].contains("adapted")) continue;
                const double t = r["detection"]["target"][row]["ap"].get<double>();
                const double a = r["detection"]["augmented"][row]["ap"].get<double>();
                const double d = r["detection"]["adapted"][row]["ap"].get<double>();
                adapted_wins.push_back(d > a);
                upper_wins.push_back(t > d && t > a);
            }
            merged["detection"][row]["ordering"]["adapted_gt_augmented"] = adapted_wins;
            merged["detection"][row]["ordering"]["upper_bound_highest"] = upper_wins;
        }
    }
    return merged;
}

namespace {

void draw_bar(Tensor& img, int x0, int y0, int x1, int y1, const std::array<double, 3>& color) {
    for (int y = std::max(0, y0); y < std::min(img.h, y1); ++y)
        for (int x = std::max(0, x0); x < std::min(img.w, x1); ++x)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
}

void render_ap_plot(const json& merged, const std::string& path) {
    const int width = 300, height = 180, base_y = 160, plot_h = 140;
    Tensor img = Tensor::full(3, height, width, 1.0);
    draw_bar(img, 20, base_y, width - 10, base_y + 2, {0.1, 0.1, 0.1});
    const std::array<std::array<double, 3>, 3> colors{{{0.35, 0.35, 0.38}, {0.82, 0.33, 0.25}, {0.25, 0.62, 0.34}}};
    const char* arms[] = {"target", "augmented", "adapted"};
    int group = 0;
    for (const char* row : {"full", "filtered"}) {
        if (!merged.contains("detection") || !merged["detection"].contains(row)) continue;
        for (int a = 0; a < 3; ++a) {
            if (!merged["detection"][row].contains(arms[a])) continue;
            const double ap = merged["detection"][row][arms[a]]["ap_mean"].get<double>();
            const int x0 = 30 + group * 130 + a * 36;
            const int bar_h = static_cast<int>(std::lround(ap * plot_h));
            draw_bar(img, x0, base_y - bar_h, x0 + 28, base_y, colors[a]);
        }
        ++group;
    }
    write_ppm(path, img);
}

std::string format_pct(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.2f %%", 100.0 * x);
    return buf;
}

}  // namespace

void render_report(const json& merged, const std::string& out_dir) {
    train::ensure_dir(out_dir);
    write_file(out_dir + "/report.json", merged.dump(2) + "\n");

    std::string table;
    table += "Detection AP by training set (mean over seeds; ratio = AP / upper bound)\n";
    table += "---------------------------------------------------------------------------\n";
    table += "eval set     |   target    Ratio  |  augmented   Ratio  |   adapted    Ratio\n";
    for (const char* row : {"full", "filtered"}) {
        if (!merged.contains("detection") || !merged["detection"].contains(row)) continue;
        char head[32];
        std::snprintf(head, sizeof(head), "%-12s |", row);
        table += head;
        for (const char* arm : {"target", "augmented", "adapted"}) {
            if (!merged["detection"][row].contains(arm)) {
                table += "      (missing)     |";
                continue;
            }
            const double ap = merged["detection"][row][arm]["ap_mean"].get<double>();
            const double ratio = merged["detection"][row][arm]["ratio_mean"].get<double>();
            char cell[48];
            std::snprintf(cell, sizeof(cell), "   %6.3f  %s |", ap, format_pct(ratio).c_str());
            table += cell;
        }
        table += "\n";
    }
    table += "\nObject preservation (mean over seeds)\n";
    for (const char* arm : {"baseline", "adapted", "annotation"}) {
        if (!merged.contains("preservation") || !merged["preservation"].contains(arm)) continue;
        char line[96];
        std::snprintf(line, sizeof(line), "  %-12s %6.3f\n", arm, merged["preservation"][arm]["mean"].get<double>());
        table += line;
    }
    table += "\nAttention IoU median (mean over seeds)\n";
    for (const char* routing : {"intermediate", "direct"}) {
        if (!merged.contains("attention") || !merged["attention"].contains(routing)) continue;
        char line[96];
        std::snprintf(line, sizeof(line), "  %-12s %6.3f\n", routing, merged["attention"][routing]["mean_median"].get<double>());
        table += line;
    }
    write_file(out_dir + "/table.txt", table);
    render_ap_plot(merged, out_dir + "/ap_plot.ppm");
}

}  // namespace agat::eval
