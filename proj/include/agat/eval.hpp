#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "agat/config.hpp"
#include "agat/data.hpp"
#include "agat/nn.hpp"
#include "agat/train.hpp"

namespace agat::eval {

// How much of the object survived translation, measured against the
// re-rendered empty background: 1 = untouched or merely restyled away from
// background, 0 = painted over with the background reconstruction. A
// successful style transfer changes object pixels too, so raw pixel
// difference to the original would not separate "restyled" from "erased".
double object_preservation(const Tensor& original, const Tensor& translated, const Tensor& background, const ClassMask& object_mask);

// IoU between threshold(attention, tau) and the ground-truth mask;
// both-empty convention: 1.
double attention_iou(const Tensor& attention, const ClassMask& gt_mask, double tau);

struct DetectorConfig {
    int iters = 800;
    int minibatch = 8;
    double lr = 1e-3;
    double box_weight = 5.0;
    double anchor = 10.0;  // base box side in px
    double score_threshold = 0.05;
    double nms_iou = 0.45;
    int base = 16;

    void validate() const;
};

struct EvalConfig {
    DetectorConfig detector;
    int min_object_size = 10;  // GT height cutoff for the size-filtered row
    double attention_tau = 0.5;

    static EvalConfig from_config(const Config& cfg);
    void to_config(Config& cfg) const;
};

// Sliding-window objectness head over a discriminator-style trunk; one
// predictor per coarse cell (objectness logit + center offset + log size).
nn::DetectorNet train_toy_detector(const DomainDataset& data, const DetectorConfig& cfg, std::uint64_t seed);

struct Detection {
    int image_index = 0;
    Box box;
    double score = 0.0;
};

std::vector<Detection> detect_objects(const nn::DetectorNet& net, const Tensor& image, const DetectorConfig& cfg, int image_index = 0);

struct ApResult {
    double ap = 0.0;
    int num_gt = 0;
    int num_detections = 0;
    bool undefined = false;  // no ground truth after filtering
};

// Score-ranked AP at IoU 0.5 without interpolation smoothing. Ground-truth
// boxes with height < min_object_size are ignored: they leave the GT pool
// and detections overlapping them are dropped from the ranking.
ApResult average_precision(std::vector<Detection> detections, const std::vector<std::vector<Box>>& gt_per_image, int min_object_size,
                           double iou_thresh = 0.5);

ApResult detector_ap(const nn::DetectorNet& net, const DomainDataset& eval_data, int min_object_size, const DetectorConfig& cfg);

// ---- evaluate / report pipeline ----

struct EvaluateInputs {
    std::string eval_data_dir;       // held-out dataset (required)
    std::string train_data_dir;      // training dataset for detector arms
    std::string baseline_run;        // optional run dirs; absent -> report gap
    std::string stage2_run;
    std::string annotation_run;
    std::string stage1_run;          // attention alignment
    std::string stage1_direct_run;   // direct-routing comparison
};

// Computes every metric the given runs allow and writes eval_report.json
// into the run directory; returns the report.
nlohmann::json evaluate_run(const EvaluateInputs& in, const EvalConfig& cfg, std::uint64_t seed, const train::RunPaths& out);

// Merges per-seed evaluation reports into the final grid (AP plus
// ratio-to-upper-bound per training set, per eval row) with ordering flags.
nlohmann::json merge_reports(const std::vector<nlohmann::json>& reports);

// report.json + table.txt + bar-chart PPM.
void render_report(const nlohmann::json& merged, const std::string& out_dir);

}  // namespace agat::eval
