#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "agat/adam.hpp"
#include "agat/config.hpp"
#include "agat/data.hpp"
#include "agat/losses.hpp"
#include "agat/nn.hpp"

namespace agat::train {

struct TrainConfig {
    int minibatch = 1;
    int stage1_iters = 1600;
    int stage2_iters = 2000;
    int baseline_iters = 2000;
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double lambda_cyc = 10.0;
    int gen_base = 8;
    int gen_res = 3;
    int disc_base = 16;
    int checkpoint_every = 1000;
    int snapshot_every = 400;
    std::string stage1_routing = "intermediate";  // "intermediate" | "direct"
    std::uint64_t seed = 1;

    static TrainConfig from_config(const Config& cfg);
    void to_config(Config& cfg) const;
    void validate() const;
};

struct MaskDerivationConfig {
    double tau = 0.5;
    int dilation_radius = 2;
    int min_area = 4;

    static MaskDerivationConfig from_config(const Config& cfg);
    void to_config(Config& cfg) const;
    void validate() const;
};

// Run directory layout shared by every training subcommand.
struct RunPaths {
    std::string root;
    std::string config_copy() const { return root + "/config.cfg"; }
    std::string manifest() const { return root + "/run_manifest.json"; }
    std::string loss_log() const { return root + "/loss_log.jsonl"; }
    std::string checkpoint_dir() const { return root + "/checkpoints"; }
    std::string final_dir() const { return root + "/checkpoints/final"; }
    std::string snapshot_dir() const { return root + "/snapshots"; }
    std::string mask_dir() const { return root + "/masks"; }
    std::string diagnostic_dir() const { return root + "/diagnostic"; }
};

void ensure_dir(const std::string& path);
void append_loss_record(const std::string& log_path, int iteration, const LossBreakdown& b);

// Per-sample object-mask lookup for split training. The background
// discriminator always receives the complement.
class MaskSource {
  public:
    virtual ~MaskSource() = default;
    virtual ClassMask object_mask(const LabeledSample& sample) const = 0;
    virtual std::string kind() const = 0;
};

// Supervised split: masks from ground-truth semantic maps.
class GroundTruthMasks : public MaskSource {
  public:
    ClassMask object_mask(const LabeledSample& sample) const override;
    std::string kind() const override { return "ground_truth"; }
};

// Baseline: the object discriminator sees the whole image (M = 1), the
// background discriminator nothing (M = 0); recovers plain cycle-consistent
// training with a single whole-image discriminator per direction.
class DegenerateMasks : public MaskSource {
  public:
    ClassMask object_mask(const LabeledSample& sample) const override;
    std::string kind() const override { return "degenerate"; }
};

// Stage 2: frozen masks derived from stage-1 attention, looked up by id.
class StoredMasks : public MaskSource {
  public:
    explicit StoredMasks(std::map<std::string, ClassMask> by_id) : by_id_(std::move(by_id)) {}
    ClassMask object_mask(const LabeledSample& sample) const override;
    std::string kind() const override { return "stored"; }

  private:
    std::map<std::string, ClassMask> by_id_;
};

struct Minibatch {
    std::vector<int> source_ids, target_ids;
};

// Cycle-consistent training between two domains with one class-split
// discriminator pair per side (Eq.-4-style objective, min/max alternation).
class SplitTrainer {
  public:
    SplitTrainer(const TrainConfig& cfg, const DomainDataset& source, const DomainDataset& target, const MaskSource& source_masks,
                 const MaskSource& target_masks);

    Minibatch sample_batch();
    // The two half-steps of the min/max alternation, exposed separately so
    // the generator's own descent can be probed against a frozen batch.
    void discriminator_update(const Minibatch& batch);
    void generator_update(const Minibatch& batch);
    // One discriminator ascent step followed by one generator descent step.
    LossBreakdown alternating_update(const Minibatch& batch);
    LossBreakdown iterate() { return alternating_update(sample_batch()); }

    // Generator-side objective (adv flip + weighted cyc) on a frozen batch;
    // pure re-evaluation, no gradients, no rng.
    double generator_objective(const Minibatch& batch);

    void save_checkpoints(const std::string& dir);
    void load_checkpoints(const std::string& dir);

    nn::EncoderDecoderNet& generator_st() { return g_st_; }
    nn::EncoderDecoderNet& generator_ts() { return g_ts_; }

  private:
    struct DirectionTerms {
        std::array<double, 2> adv_disc{};  // [object, background], discriminator side
        std::array<double, 2> adv_gen{};
        double cyc = 0.0;
    };
    DirectionTerms disc_step_direction(const std::vector<int>& fake_from, const std::vector<int>& real_on, bool source_to_target);
    DirectionTerms gen_step_direction(const std::vector<int>& ids, bool source_to_target);
    DirectionTerms last_disc_st_, last_disc_ts_, last_gen_st_, last_gen_ts_;

    const TrainConfig cfg_;
    const DomainDataset& source_;
    const DomainDataset& target_;
    const MaskSource& source_masks_;
    const MaskSource& target_masks_;
    Rng batch_rng_;

    nn::EncoderDecoderNet g_st_, g_ts_;
    nn::PatchDiscriminator d_target_obj_, d_target_bg_, d_source_obj_, d_source_bg_;
    nn::Adam opt_g_st_, opt_g_ts_, opt_d_to_, opt_d_tb_, opt_d_so_, opt_d_sb_;
};

// Stage-1 trainer for one routed pair (A adapts into B and back) with
// attention networks on both sides; whole-image discriminators realized as
// the (all-classes, no-classes) two-discriminator split.
class AttentionPairTrainer {
  public:
    AttentionPairTrainer(const TrainConfig& cfg, const DomainDataset& side_a, const DomainDataset& side_b, const std::string& pair_tag);

    Minibatch sample_batch();
    LossBreakdown alternating_update(const Minibatch& batch);
    LossBreakdown iterate() { return alternating_update(sample_batch()); }

    void save_checkpoints(const std::string& dir);

    nn::EncoderDecoderNet& attention_a() { return att_a_; }
    nn::EncoderDecoderNet& attention_b() { return att_b_; }

  private:
    struct DirectionOut {
        double adv_disc = 0.0;
        double adv_gen = 0.0;
        double cyc = 0.0;
    };
    DirectionOut disc_step_direction(bool a_to_b, const std::vector<int>& fake_ids, const std::vector<int>& real_ids);
    DirectionOut gen_step_direction(bool a_to_b, const std::vector<int>& ids);

    const TrainConfig cfg_;
    const DomainDataset& a_;
    const DomainDataset& b_;
    std::string tag_;
    Rng batch_rng_;

    nn::EncoderDecoderNet g_ab_, g_ba_, att_a_, att_b_;
    nn::PatchDiscriminator d_b_all_, d_b_none_, d_a_all_, d_a_none_;
    nn::Adam opt_g_ab_, opt_g_ba_, opt_att_a_, opt_att_b_, opt_d_b_, opt_d_a_;
};

// ---- top-level operations (each backs one CLI subcommand) ----

// Plain cycle-consistent control arm; exhibits the vanishing-object
// pathology on imbalanced data.
void baseline_train(const ToyDatasets& data, const TrainConfig& cfg, const RunPaths& out);

// Supervised split with ground-truth masks.
void annotation_split_train(const ToyDatasets& data, const TrainConfig& cfg, const RunPaths& out);

// First loop of the training algorithm: learns attention maps through
// adaptations into the intermediate domain (or directly, per routing).
void stage1_train(const ToyDatasets& data, const TrainConfig& cfg, const RunPaths& out);

struct DerivedMaskSet {
    std::map<std::string, ClassMask> by_id;
    std::vector<std::string> empty_ids;  // attention everywhere below tau
};

// mask = min-area-filtered dilation of threshold(attention, tau).
ClassMask derive_mask(const Tensor& attention, const MaskDerivationConfig& cfg);
DerivedMaskSet derive_masks(const nn::EncoderDecoderNet& attention, const DomainDataset& data, const MaskDerivationConfig& cfg);

// Derives and persists masks for SOURCE and TARGET from a stage-1 run.
void derive_masks_run(const ToyDatasets& data, const std::string& stage1_dir, const MaskDerivationConfig& cfg, const RunPaths& out);

// Second loop: reinitialized generators against mask-gated split
// discriminators; masks are frozen artifacts from derive-masks.
void stage2_train(const ToyDatasets& data, const std::string& masks_dir, const TrainConfig& cfg, const RunPaths& out);

std::map<std::string, ClassMask> load_mask_dir(const std::string& masks_dir);

}  // namespace agat::train
