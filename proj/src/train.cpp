#include "agat/train.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>

#include "agat/checkpoint.hpp"
#include "agat/errors.hpp"
#include "agat/image_io.hpp"
#include "agat/serialize.hpp"

namespace agat::train {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configs

TrainConfig TrainConfig::from_config(const Config& cfg) {
    TrainConfig t;
    t.minibatch = static_cast<int>(cfg.get_int("train", "minibatch", t.minibatch));
    t.stage1_iters = static_cast<int>(cfg.get_int("train", "stage1_iters", t.stage1_iters));
    t.stage2_iters = static_cast<int>(cfg.get_int("train", "stage2_iters", t.stage2_iters));
    t.baseline_iters = static_cast<int>(cfg.get_int("train", "baseline_iters", t.baseline_iters));
    t.lr = cfg.get_double("train", "lr", t.lr);
    t.beta1 = cfg.get_double("train", "beta1", t.beta1);
    t.beta2 = cfg.get_double("train", "beta2", t.beta2);
    t.lambda_cyc = cfg.get_double("train", "lambda_cyc", t.lambda_cyc);
    t.gen_base = static_cast<int>(cfg.get_int("train", "gen_base", t.gen_base));
    t.gen_res = static_cast<int>(cfg.get_int("train", "gen_res", t.gen_res));
    t.disc_base = static_cast<int>(cfg.get_int("train", "disc_base", t.disc_base));
    t.checkpoint_every = static_cast<int>(cfg.get_int("train", "checkpoint_every", t.checkpoint_every));
    t.snapshot_every = static_cast<int>(cfg.get_int("train", "snapshot_every", t.snapshot_every));
    t.stage1_routing = cfg.get_string("train", "stage1_routing", t.stage1_routing);
    t.seed = cfg.get_u64("train", "seed", t.seed);
    t.validate();
    return t;
}

void TrainConfig::to_config(Config& cfg) const {
    cfg.set_int("train", "minibatch", minibatch);
    cfg.set_int("train", "stage1_iters", stage1_iters);
    cfg.set_int("train", "stage2_iters", stage2_iters);
    cfg.set_int("train", "baseline_iters", baseline_iters);
    cfg.set_double("train", "lr", lr);
    cfg.set_double("train", "beta1", beta1);
    cfg.set_double("train", "beta2", beta2);
    cfg.set_double("train", "lambda_cyc", lambda_cyc);
    cfg.set_int("train", "gen_base", gen_base);
    cfg.set_int("train", "gen_res", gen_res);
    cfg.set_int("train", "disc_base", disc_base);
    cfg.set_int("train", "checkpoint_every", checkpoint_every);
    cfg.set_int("train", "snapshot_every", snapshot_every);
    cfg.set("train", "stage1_routing", stage1_routing);
    cfg.set_int("train", "seed", static_cast<std::int64_t>(seed));
}

void TrainConfig::validate() const {
    if (minibatch < 1) throw UsageError("train.minibatch must be >= 1");
    if (stage1_iters < 0 || stage2_iters < 0 || baseline_iters < 0) throw UsageError("iteration counts must be >= 0");
    if (!(lr > 0.0)) throw UsageError("train.lr must be > 0");
    if (lambda_cyc < 0.0) throw UsageError("train.lambda_cyc must be >= 0");
    if (gen_base < 1 || gen_res < 0 || disc_base < 1) throw UsageError("invalid network width");
    if (checkpoint_every < 1 || snapshot_every < 1) throw UsageError("cadence values must be >= 1");
    if (stage1_routing != "intermediate" && stage1_routing != "direct") throw UsageError("train.stage1_routing must be intermediate|direct");
}

MaskDerivationConfig MaskDerivationConfig::from_config(const Config& cfg) {
    MaskDerivationConfig m;
    m.tau = cfg.get_double("masks", "tau", m.tau);
    m.dilation_radius = static_cast<int>(cfg.get_int("masks", "dilation_radius", m.dilation_radius));
    m.min_area = static_cast<int>(cfg.get_int("masks", "min_area", m.min_area));
    m.validate();
    return m;
}

void MaskDerivationConfig::to_config(Config& cfg) const {
    cfg.set_double("masks", "tau", tau);
    cfg.set_int("masks", "dilation_radius", dilation_radius);
    cfg.set_int("masks", "min_area", min_area);
}

void MaskDerivationConfig::validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw UsageError("masks.tau must be strictly inside (0,1)");
    if (dilation_radius < 0) throw UsageError("masks.dilation_radius must be >= 0");
    if (min_area < 0) throw UsageError("masks.min_area must be >= 0");
}

// ---------------------------------------------------------------------------
// Run directory helpers

void ensure_dir(const std::string& path) { fs::create_directories(path); }

namespace {

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm {};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json breakdown_json(const LossBreakdown& b) {
    json j;
    j["adv_source_split"] = {b.adv_source_split[0], b.adv_source_split[1]};
    j["adv_target_split"] = {b.adv_target_split[0], b.adv_target_split[1]};
    j["cyc_source"] = b.cyc_source;
    j["cyc_target"] = b.cyc_target;
    j["lambda_cyc"] = b.lambda_cyc;
    j["total"] = b.total;
    return j;
}

}  // namespace

void append_loss_record(const std::string& log_path, int iteration, const LossBreakdown& b) {
    json j = breakdown_json(b);
    j["iter"] = iteration;
    j["time"] = iso_timestamp();
    std::ofstream f(log_path, std::ios::app);
    f << j.dump() << "\n";
}

// ---------------------------------------------------------------------------
// Mask sources

ClassMask GroundTruthMasks::object_mask(const LabeledSample& sample) const { return ClassMask::from_labels(sample.labels, kObjectClass); }

ClassMask DegenerateMasks::object_mask(const LabeledSample& sample) const {
    return ClassMask::all_ones(sample.labels.h, sample.labels.w);
}

ClassMask StoredMasks::object_mask(const LabeledSample& sample) const {
    auto it = by_id_.find(sample.image.id);
    if (it == by_id_.end()) throw DependencyError("no derived mask for sample " + sample.image.id + "; run derive-masks first");
    return it->second;
}

// ---------------------------------------------------------------------------
// SplitTrainer

namespace {

nn::EncoderDecoderArch gen_arch(const TrainConfig& cfg, int out_ch) {
    nn::EncoderDecoderArch a;
    a.in_ch = 3;
    a.out_ch = out_ch;
    a.base = cfg.gen_base;
    a.n_res = cfg.gen_res;
    return a;
}

nn::DiscriminatorArch disc_arch(const TrainConfig& cfg) {
    nn::DiscriminatorArch a;
    a.base = cfg.disc_base;
    return a;
}

nn::AdamConfig adam_cfg(const TrainConfig& cfg) { return {cfg.lr, cfg.beta1, cfg.beta2, 1e-8}; }

}  // namespace

SplitTrainer::SplitTrainer(const TrainConfig& cfg, const DomainDataset& source, const DomainDataset& target, const MaskSource& source_masks,
                           const MaskSource& target_masks)
    : cfg_(cfg),
      source_(source),
      target_(target),
      source_masks_(source_masks),
      target_masks_(target_masks),
      batch_rng_(Rng(cfg.seed).fork("split/batch")),
      g_st_(nn::NetRole::kGenerator, gen_arch(cfg, 3)),
      g_ts_(nn::NetRole::kGenerator, gen_arch(cfg, 3)),
      d_target_obj_(nn::NetRole::kDiscriminator, disc_arch(cfg)),
      d_target_bg_(nn::NetRole::kDiscriminator, disc_arch(cfg)),
      d_source_obj_(nn::NetRole::kDiscriminator, disc_arch(cfg)),
      d_source_bg_(nn::NetRole::kDiscriminator, disc_arch(cfg)) {
    if (source_.samples.empty() || target_.samples.empty()) throw DependencyError("split training needs non-empty source and target datasets");
    Rng init = Rng(cfg.seed).fork("split/init");
    Rng r1 = init.fork("g_st"), r2 = init.fork("g_ts");
    Rng r3 = init.fork("d_to"), r4 = init.fork("d_tb"), r5 = init.fork("d_so"), r6 = init.fork("d_sb");
    g_st_.init_weights(r1);
    g_ts_.init_weights(r2);
    d_target_obj_.init_weights(r3);
    d_target_bg_.init_weights(r4);
    d_source_obj_.init_weights(r5);
    d_source_bg_.init_weights(r6);
    opt_g_st_ = nn::Adam(adam_cfg(cfg), g_st_.params());
    opt_g_ts_ = nn::Adam(adam_cfg(cfg), g_ts_.params());
    opt_d_to_ = nn::Adam(adam_cfg(cfg), d_target_obj_.params());
    opt_d_tb_ = nn::Adam(adam_cfg(cfg), d_target_bg_.params());
    opt_d_so_ = nn::Adam(adam_cfg(cfg), d_source_obj_.params());
    opt_d_sb_ = nn::Adam(adam_cfg(cfg), d_source_bg_.params());
}

Minibatch SplitTrainer::sample_batch() {
    Minibatch b;
    for (int i = 0; i < cfg_.minibatch; ++i) b.source_ids.push_back(static_cast<int>(batch_rng_.uniform_int(0, static_cast<int>(source_.samples.size()) - 1)));
    for (int i = 0; i < cfg_.minibatch; ++i) b.target_ids.push_back(static_cast<int>(batch_rng_.uniform_int(0, static_cast<int>(target_.samples.size()) - 1)));
    return b;
}

SplitTrainer::DirectionTerms SplitTrainer::disc_step_direction(const std::vector<int>& fake_from, const std::vector<int>& real_on,
                                                               bool source_to_target) {
    DirectionTerms out;
    const double inv_m = 1.0 / static_cast<double>(fake_from.size());
    nn::EncoderDecoderNet& gen = source_to_target ? g_st_ : g_ts_;
    nn::PatchDiscriminator& d_obj = source_to_target ? d_target_obj_ : d_source_obj_;
    nn::PatchDiscriminator& d_bg = source_to_target ? d_target_bg_ : d_source_bg_;
    const DomainDataset& fake_data = source_to_target ? source_ : target_;
    const DomainDataset& real_data = source_to_target ? target_ : source_;
    const MaskSource& fake_masks = source_to_target ? source_masks_ : target_masks_;
    const MaskSource& real_masks = source_to_target ? target_masks_ : source_masks_;

    for (size_t k = 0; k < fake_from.size(); ++k) {
        const LabeledSample& fs = fake_data.samples[fake_from[k]];
        const LabeledSample& rs = real_data.samples[real_on[k]];
        nn::Tape tg;
        const Tensor fake = gen.forward(fs.image.pixels, tg);  // fake stays detached from the generator here

        const ClassMask fake_obj = fake_masks.object_mask(fs);
        const ClassMask real_obj = real_masks.object_mask(rs);
        for (int cls = 0; cls < 2; ++cls) {
            nn::PatchDiscriminator& disc = cls == 0 ? d_obj : d_bg;
            const ClassMask fm = cls == 0 ? fake_obj : fake_obj.complement();
            const ClassMask rm = cls == 0 ? real_obj : real_obj.complement();
            double term_value = 0.0;
            if (rm.active_count() > 0) {
                nn::Tape td;
                const Tensor patch = disc.forward(rs.image.pixels, &rm, td);
                MaskedTerm term = masked_ls_term(patch, 1.0, nn::downsample_mask(rm, patch.h, patch.w));
                term.grad *= inv_m;
                disc.backward(term.grad, td, /*want_input_grad=*/false);
                term_value += term.value;
            }
            if (fm.active_count() > 0) {
                nn::Tape td;
                const Tensor patch = disc.forward(fake, &fm, td);
                MaskedTerm term = masked_ls_term(patch, 0.0, nn::downsample_mask(fm, patch.h, patch.w));
                term.grad *= inv_m;
                disc.backward(term.grad, td, /*want_input_grad=*/false);
                term_value += term.value;
            }
            out.adv_disc[cls] += term_value * inv_m;
        }
    }
    return out;
}

SplitTrainer::DirectionTerms SplitTrainer::gen_step_direction(const std::vector<int>& ids, bool source_to_target) {
    DirectionTerms out;
    const double inv_m = 1.0 / static_cast<double>(ids.size());
    nn::EncoderDecoderNet& gen_fwd = source_to_target ? g_st_ : g_ts_;
    nn::EncoderDecoderNet& gen_back = source_to_target ? g_ts_ : g_st_;
    nn::PatchDiscriminator& d_obj = source_to_target ? d_target_obj_ : d_source_obj_;
    nn::PatchDiscriminator& d_bg = source_to_target ? d_target_bg_ : d_source_bg_;
    const DomainDataset& data = source_to_target ? source_ : target_;
    const MaskSource& masks = source_to_target ? source_masks_ : target_masks_;

    for (int id : ids) {
        const LabeledSample& s = data.samples[id];
        nn::Tape tg1;
        const Tensor fake = gen_fwd.forward(s.image.pixels, tg1);
        Tensor d_fake(fake.c, fake.h, fake.w);

        const ClassMask obj = masks.object_mask(s);
        for (int cls = 0; cls < 2; ++cls) {
            nn::PatchDiscriminator& disc = cls == 0 ? d_obj : d_bg;
            const ClassMask m = cls == 0 ? obj : obj.complement();
            if (m.active_count() == 0) continue;
            nn::Tape td;
            const Tensor patch = disc.forward(fake, &m, td);
            MaskedTerm term = masked_ls_term(patch, 1.0, nn::downsample_mask(m, patch.h, patch.w));
            out.adv_gen[cls] += term.value * inv_m;
            term.grad *= inv_m;
            // Discriminator gradients picked up here are discarded at the
            // start of the next discriminator step.
            d_fake += disc.backward(term.grad, td);
        }

        nn::Tape tg2;
        const Tensor recon = gen_back.forward(fake, tg2);
        CyclicLoss cyc = cyclic_loss(s.image.pixels, recon);
        out.cyc += cyc.value * inv_m;
        cyc.grad *= cfg_.lambda_cyc * inv_m;
        d_fake += gen_back.backward(cyc.grad, tg2);

        gen_fwd.backward(d_fake, tg1, /*want_input_grad=*/false);
    }
    return out;
}

void SplitTrainer::discriminator_update(const Minibatch& batch) {
    d_target_obj_.zero_grads();
    d_target_bg_.zero_grads();
    d_source_obj_.zero_grads();
    d_source_bg_.zero_grads();
    last_disc_st_ = disc_step_direction(batch.source_ids, batch.target_ids, true);
    last_disc_ts_ = disc_step_direction(batch.target_ids, batch.source_ids, false);
    opt_d_to_.step(d_target_obj_.params());
    opt_d_tb_.step(d_target_bg_.params());
    opt_d_so_.step(d_source_obj_.params());
    opt_d_sb_.step(d_source_bg_.params());
}

void SplitTrainer::generator_update(const Minibatch& batch) {
    g_st_.zero_grads();
    g_ts_.zero_grads();
    last_gen_st_ = gen_step_direction(batch.source_ids, true);
    last_gen_ts_ = gen_step_direction(batch.target_ids, false);
    opt_g_st_.step(g_st_.params());
    opt_g_ts_.step(g_ts_.params());
}

LossBreakdown SplitTrainer::alternating_update(const Minibatch& batch) {
    discriminator_update(batch);  // max side
    generator_update(batch);      // min side
    return stage2_objective(last_disc_st_.adv_disc, last_disc_ts_.adv_disc, last_gen_st_.cyc, last_gen_ts_.cyc, cfg_.lambda_cyc);
}

double SplitTrainer::generator_objective(const Minibatch& batch) {
    double obj = 0.0;
    const double inv_m = 1.0 / static_cast<double>(batch.source_ids.size());
    auto direction = [&](const std::vector<int>& ids, bool source_to_target) {
        nn::EncoderDecoderNet& gen_fwd = source_to_target ? g_st_ : g_ts_;
        nn::EncoderDecoderNet& gen_back = source_to_target ? g_ts_ : g_st_;
        nn::PatchDiscriminator& d_obj = source_to_target ? d_target_obj_ : d_source_obj_;
        nn::PatchDiscriminator& d_bg = source_to_target ? d_target_bg_ : d_source_bg_;
        const DomainDataset& data = source_to_target ? source_ : target_;
        const MaskSource& masks = source_to_target ? source_masks_ : target_masks_;
        for (int id : ids) {
            const LabeledSample& s = data.samples[id];
            nn::Tape t1, t2;
            const Tensor fake = gen_fwd.forward(s.image.pixels, t1);
            const ClassMask obj_mask = masks.object_mask(s);
            for (int cls = 0; cls < 2; ++cls) {
                const ClassMask m = cls == 0 ? obj_mask : obj_mask.complement();
                if (m.active_count() == 0) continue;
                nn::Tape td;
                const Tensor patch = (cls == 0 ? d_obj : d_bg).forward(fake, &m, td);
                obj += masked_ls_term(patch, 1.0, nn::downsample_mask(m, patch.h, patch.w)).value * inv_m;
            }
            const Tensor recon = gen_back.forward(fake, t2);
            obj += cfg_.lambda_cyc * cyclic_loss_value(s.image.pixels, recon) * inv_m;
        }
    };
    direction(batch.source_ids, true);
    direction(batch.target_ids, false);
    return obj;
}

void SplitTrainer::save_checkpoints(const std::string& dir) {
    ensure_dir(dir);
    nn::save_net(dir + "/g_st.ckpt", g_st_);
    nn::save_net(dir + "/g_ts.ckpt", g_ts_);
    nn::save_net(dir + "/d_target_obj.ckpt", d_target_obj_);
    nn::save_net(dir + "/d_target_bg.ckpt", d_target_bg_);
    nn::save_net(dir + "/d_source_obj.ckpt", d_source_obj_);
    nn::save_net(dir + "/d_source_bg.ckpt", d_source_bg_);
    nn::save_optimizer(dir + "/opt_g_st.state", opt_g_st_);
    nn::save_optimizer(dir + "/opt_g_ts.state", opt_g_ts_);
    nn::save_optimizer(dir + "/opt_d_to.state", opt_d_to_);
    nn::save_optimizer(dir + "/opt_d_tb.state", opt_d_tb_);
    nn::save_optimizer(dir + "/opt_d_so.state", opt_d_so_);
    nn::save_optimizer(dir + "/opt_d_sb.state", opt_d_sb_);
}

void SplitTrainer::load_checkpoints(const std::string& dir) {
    g_st_ = nn::load_encoder_decoder(dir + "/g_st.ckpt");
    g_ts_ = nn::load_encoder_decoder(dir + "/g_ts.ckpt");
    d_target_obj_ = nn::load_discriminator(dir + "/d_target_obj.ckpt");
    d_target_bg_ = nn::load_discriminator(dir + "/d_target_bg.ckpt");
    d_source_obj_ = nn::load_discriminator(dir + "/d_source_obj.ckpt");
    d_source_bg_ = nn::load_discriminator(dir + "/d_source_bg.ckpt");
    opt_g_st_ = nn::load_optimizer(dir + "/opt_g_st.state");
    opt_g_ts_ = nn::load_optimizer(dir + "/opt_g_ts.state");
    opt_d_to_ = nn::load_optimizer(dir + "/opt_d_to.state");
    opt_d_tb_ = nn::load_optimizer(dir + "/opt_d_tb.state");
    opt_d_so_ = nn::load_optimizer(dir + "/opt_d_so.state");
    opt_d_sb_ = nn::load_optimizer(dir + "/opt_d_sb.state");
}

// ---------------------------------------------------------------------------
// AttentionPairTrainer

AttentionPairTrainer::AttentionPairTrainer(const TrainConfig& cfg, const DomainDataset& side_a, const DomainDataset& side_b,
                                           const std::string& pair_tag)
    : cfg_(cfg),
      a_(side_a),
      b_(side_b),
      tag_(pair_tag),
      batch_rng_(Rng(cfg.seed).fork("attention/" + pair_tag + "/batch")),
      g_ab_(nn::NetRole::kGenerator, gen_arch(cfg, 3)),
      g_ba_(nn::NetRole::kGenerator, gen_arch(cfg, 3)),
      att_a_(nn::NetRole::kAttention, gen_arch(cfg, 1)),
      att_b_(nn::NetRole::kAttention, gen_arch(cfg, 1)),
      d_b_all_(nn::NetRole::kDiscriminator, disc_arch(cfg)),
      d_b_none_(nn::NetRole::kDiscriminator, disc_arch(cfg)),
      d_a_all_(nn::NetRole::kDiscriminator, disc_arch(cfg)),
      d_a_none_(nn::NetRole::kDiscriminator, disc_arch(cfg)) {
    if (a_.samples.empty() || b_.samples.empty()) throw DependencyError("attention training needs non-empty datasets on both sides");
    Rng init = Rng(cfg.seed).fork("attention/" + pair_tag + "/init");
    Rng r1 = init.fork("g_ab"), r2 = init.fork("g_ba"), r3 = init.fork("att_a"), r4 = init.fork("att_b");
    Rng r5 = init.fork("d_b_all"), r6 = init.fork("d_b_none"), r7 = init.fork("d_a_all"), r8 = init.fork("d_a_none");
    g_ab_.init_weights(r1);
    g_ba_.init_weights(r2);
    att_a_.init_weights(r3);
    att_b_.init_weights(r4);
    d_b_all_.init_weights(r5);
    d_b_none_.init_weights(r6);
    d_a_all_.init_weights(r7);
    d_a_none_.init_weights(r8);
    opt_g_ab_ = nn::Adam(adam_cfg(cfg), g_ab_.params());
    opt_g_ba_ = nn::Adam(adam_cfg(cfg), g_ba_.params());
    opt_att_a_ = nn::Adam(adam_cfg(cfg), att_a_.params());
    opt_att_b_ = nn::Adam(adam_cfg(cfg), att_b_.params());
    opt_d_b_ = nn::Adam(adam_cfg(cfg), d_b_all_.params());
    opt_d_a_ = nn::Adam(adam_cfg(cfg), d_a_all_.params());
}

Minibatch AttentionPairTrainer::sample_batch() {
    Minibatch batch;
    for (int i = 0; i < cfg_.minibatch; ++i) batch.source_ids.push_back(static_cast<int>(batch_rng_.uniform_int(0, static_cast<int>(a_.samples.size()) - 1)));
    for (int i = 0; i < cfg_.minibatch; ++i) batch.target_ids.push_back(static_cast<int>(batch_rng_.uniform_int(0, static_cast<int>(b_.samples.size()) - 1)));
    return batch;
}

AttentionPairTrainer::DirectionOut AttentionPairTrainer::disc_step_direction(bool a_to_b, const std::vector<int>& fake_ids,
                                                                             const std::vector<int>& real_ids) {
    DirectionOut out;
    const double inv_m = 1.0 / static_cast<double>(fake_ids.size());
    nn::EncoderDecoderNet& gen = a_to_b ? g_ab_ : g_ba_;
    nn::EncoderDecoderNet& att = a_to_b ? att_a_ : att_b_;
    nn::PatchDiscriminator& disc = a_to_b ? d_b_all_ : d_a_all_;
    const DomainDataset& fake_data = a_to_b ? a_ : b_;
    const DomainDataset& real_data = a_to_b ? b_ : a_;

    for (size_t k = 0; k < fake_ids.size(); ++k) {
        const Tensor& src = fake_data.samples[fake_ids[k]].image.pixels;
        const Tensor& real = real_data.samples[real_ids[k]].image.pixels;
        nn::Tape t1, t2;
        const Tensor gen_out = gen.forward(src, t1);
        const Tensor att_map = att.forward(src, t2);
        const Tensor composed = nn::compose_translation(src, gen_out, att_map);

        const ClassMask all = ClassMask::all_ones(real.h, real.w);
        {
            nn::Tape td;
            const Tensor patch = disc.forward(real, &all, td);
            MaskedTerm term = masked_ls_term(patch, 1.0, nn::downsample_mask(all, patch.h, patch.w));
            out.adv_disc += term.value * inv_m;
            term.grad *= inv_m;
            disc.backward(term.grad, td, /*want_input_grad=*/false);
        }
        {
            nn::Tape td;
            const Tensor patch = disc.forward(composed, &all, td);
            MaskedTerm term = masked_ls_term(patch, 0.0, nn::downsample_mask(all, patch.h, patch.w));
            out.adv_disc += term.value * inv_m;
            term.grad *= inv_m;
            disc.backward(term.grad, td, /*want_input_grad=*/false);
        }
        // The zero-mask twin of the two-discriminator formalism contributes
        // exactly 0 for any input, so it is never evaluated or updated.
    }
    return out;
}

AttentionPairTrainer::DirectionOut AttentionPairTrainer::gen_step_direction(bool a_to_b, const std::vector<int>& ids) {
    DirectionOut out;
    const double inv_m = 1.0 / static_cast<double>(ids.size());
    nn::EncoderDecoderNet& gen_fwd = a_to_b ? g_ab_ : g_ba_;
    nn::EncoderDecoderNet& gen_back = a_to_b ? g_ba_ : g_ab_;
    nn::EncoderDecoderNet& att_fwd = a_to_b ? att_a_ : att_b_;
    nn::EncoderDecoderNet& att_back = a_to_b ? att_b_ : att_a_;
    nn::PatchDiscriminator& disc = a_to_b ? d_b_all_ : d_a_all_;
    const DomainDataset& data = a_to_b ? a_ : b_;

    for (int id : ids) {
        const Tensor& src = data.samples[id].image.pixels;
        nn::Tape tg1, ta1;
        const Tensor gen_out = gen_fwd.forward(src, tg1);
        const Tensor att_map = att_fwd.forward(src, ta1);
        const Tensor composed = nn::compose_translation(src, gen_out, att_map);

        Tensor d_composed(composed.c, composed.h, composed.w);

        const ClassMask all = ClassMask::all_ones(src.h, src.w);
        {
            nn::Tape td;
            const Tensor patch = disc.forward(composed, &all, td);
            MaskedTerm term = masked_ls_term(patch, 1.0, nn::downsample_mask(all, patch.h, patch.w));
            out.adv_gen += term.value * inv_m;
            term.grad *= inv_m;
            d_composed += disc.backward(term.grad, td);
        }

        // Cycle back with the other side's attention applied to the composed
        // image, mirroring the forward composition.
        nn::Tape tg2, ta2;
        const Tensor back_out = gen_back.forward(composed, tg2);
        const Tensor back_att = att_back.forward(composed, ta2);
        const Tensor recon = nn::compose_translation(composed, back_out, back_att);
        CyclicLoss cyc = cyclic_loss(src, recon);
        out.cyc += cyc.value * inv_m;
        cyc.grad *= cfg_.lambda_cyc * inv_m;

        nn::ComposeGrads back_grads = nn::compose_translation_backward(cyc.grad, composed, back_out, back_att);
        d_composed += back_grads.d_img;
        d_composed += gen_back.backward(back_grads.d_gen, tg2);
        d_composed += att_back.backward(back_grads.d_att, ta2);

        nn::ComposeGrads fwd_grads = nn::compose_translation_backward(d_composed, src, gen_out, att_map);
        gen_fwd.backward(fwd_grads.d_gen, tg1, /*want_input_grad=*/false);
        att_fwd.backward(fwd_grads.d_att, ta1, /*want_input_grad=*/false);
    }
    return out;
}

LossBreakdown AttentionPairTrainer::alternating_update(const Minibatch& batch) {
    d_b_all_.zero_grads();
    d_a_all_.zero_grads();
    const DirectionOut disc_ab = disc_step_direction(true, batch.source_ids, batch.target_ids);
    const DirectionOut disc_ba = disc_step_direction(false, batch.target_ids, batch.source_ids);
    opt_d_b_.step(d_b_all_.params());
    opt_d_a_.step(d_a_all_.params());

    g_ab_.zero_grads();
    g_ba_.zero_grads();
    att_a_.zero_grads();
    att_b_.zero_grads();
    const DirectionOut gen_ab = gen_step_direction(true, batch.source_ids);
    const DirectionOut gen_ba = gen_step_direction(false, batch.target_ids);
    opt_g_ab_.step(g_ab_.params());
    opt_g_ba_.step(g_ba_.params());
    opt_att_a_.step(att_a_.params());
    opt_att_b_.step(att_b_.params());

    return stage1_objective(disc_ab.adv_disc, disc_ba.adv_disc, gen_ab.cyc, gen_ba.cyc, cfg_.lambda_cyc);
}

void AttentionPairTrainer::save_checkpoints(const std::string& dir) {
    ensure_dir(dir);
    nn::save_net(dir + "/g_ab.ckpt", g_ab_);
    nn::save_net(dir + "/g_ba.ckpt", g_ba_);
    nn::save_net(dir + "/att_a.ckpt", att_a_);
    nn::save_net(dir + "/att_b.ckpt", att_b_);
    nn::save_net(dir + "/d_b_all.ckpt", d_b_all_);
    nn::save_net(dir + "/d_b_none.ckpt", d_b_none_);
    nn::save_net(dir + "/d_a_all.ckpt", d_a_all_);
    nn::save_net(dir + "/d_a_none.ckpt", d_a_none_);
    nn::save_optimizer(dir + "/opt_g_ab.state", opt_g_ab_);
    nn::save_optimizer(dir + "/opt_g_ba.state", opt_g_ba_);
    nn::save_optimizer(dir + "/opt_att_a.state", opt_att_a_);
    nn::save_optimizer(dir + "/opt_att_b.state", opt_att_b_);
    nn::save_optimizer(dir + "/opt_d_b.state", opt_d_b_);
    nn::save_optimizer(dir + "/opt_d_a.state", opt_d_a_);
}

// ---------------------------------------------------------------------------
// Top-level training operations

namespace {

void dump_diagnostic(const RunPaths& out, const Minibatch& batch, const std::string& reason) {
    ensure_dir(out.diagnostic_dir());
    json j;
    j["reason"] = reason;
    j["source_ids"] = batch.source_ids;
    j["target_ids"] = batch.target_ids;
    j["time"] = iso_timestamp();
    write_file(out.diagnostic_dir() + "/abort.json", j.dump(2) + "\n");
}

void run_split_training(SplitTrainer& trainer, int iters, const TrainConfig& cfg, const RunPaths& out) {
    ensure_dir(out.root);
    ensure_dir(out.checkpoint_dir());
    for (int i = 1; i <= iters; ++i) {
        const Minibatch batch = trainer.sample_batch();
        LossBreakdown b;
        try {
            b = trainer.alternating_update(batch);
            b.validate();
        } catch (const NumericError& e) {
            trainer.save_checkpoints(out.diagnostic_dir() + "/nets");
            dump_diagnostic(out, batch, e.what());
            throw;
        }
        append_loss_record(out.loss_log(), i, b);
        if (i % cfg.checkpoint_every == 0 && i != iters) {
            char sub[32];
            std::snprintf(sub, sizeof(sub), "/iter_%06d", i);
            trainer.save_checkpoints(out.checkpoint_dir() + sub);
        }
    }
    trainer.save_checkpoints(out.final_dir());
}

std::string mask_dir_hash(const std::string& dir) {
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const std::string& name : names) {
        h = fnv1a64(name, h);
        h = fnv1a64(read_file(dir + "/" + name), h);
    }
    return to_hex(h);
}

}  // namespace

void baseline_train(const ToyDatasets& data, const TrainConfig& cfg, const RunPaths& out) {
    DegenerateMasks masks;
    SplitTrainer trainer(cfg, data.source, data.target, masks, masks);
    run_split_training(trainer, cfg.baseline_iters, cfg, out);
}

void annotation_split_train(const ToyDatasets& data, const TrainConfig& cfg, const RunPaths& out) {
    GroundTruthMasks masks;
    SplitTrainer trainer(cfg, data.source, data.target, masks, masks);
    run_split_training(trainer, cfg.baseline_iters, cfg, out);
}

void stage1_train(const ToyDatasets& data, const TrainConfig& cfg, const RunPaths& out) {
    ensure_dir(out.root);
    ensure_dir(out.checkpoint_dir());
    ensure_dir(out.snapshot_dir());

    struct PairRun {
        std::unique_ptr<AttentionPairTrainer> trainer;
        std::string tag;
    };
    std::vector<PairRun> pairs;
    if (cfg.stage1_routing == "intermediate") {
        if (data.intermediate.samples.empty()) throw DependencyError("intermediate routing needs a non-empty intermediate dataset");
        pairs.push_back({std::make_unique<AttentionPairTrainer>(cfg, data.source, data.intermediate, "s2i"), "s2i"});
        pairs.push_back({std::make_unique<AttentionPairTrainer>(cfg, data.target, data.intermediate, "t2i"), "t2i"});
    } else {
        pairs.push_back({std::make_unique<AttentionPairTrainer>(cfg, data.source, data.target, "s2t"), "s2t"});
    }

    const int probes = std::min<int>(4, static_cast<int>(data.source.samples.size()));
    auto snapshot = [&](int iter) {
        nn::EncoderDecoderNet& att_s = pairs[0].trainer->attention_a();
        for (int p = 0; p < probes; ++p) {
            nn::Tape t;
            const Tensor att = att_s.forward(data.source.samples[p].image.pixels, t);
            char name[96];
            std::snprintf(name, sizeof(name), "/att_s_iter%06d_%s.pgm", iter, data.source.samples[p].image.id.c_str());
            write_pgm(out.snapshot_dir() + name, att);
        }
    };

    for (int i = 1; i <= cfg.stage1_iters; ++i) {
        for (PairRun& pair : pairs) {
            const Minibatch batch = pair.trainer->sample_batch();
            LossBreakdown b;
            try {
                b = pair.trainer->alternating_update(batch);
                b.validate();
            } catch (const NumericError& e) {
                pair.trainer->save_checkpoints(out.diagnostic_dir() + "/nets_" + pair.tag);
                dump_diagnostic(out, batch, std::string(e.what()) + " (pair " + pair.tag + ")");
                throw;
            }
            append_loss_record(out.loss_log(), i, b);
        }
        if (i % cfg.snapshot_every == 0) snapshot(i);
        if (i % cfg.checkpoint_every == 0 && i != cfg.stage1_iters) {
            char sub[32];
            std::snprintf(sub, sizeof(sub), "/iter_%06d", i);
            for (PairRun& pair : pairs) pair.trainer->save_checkpoints(out.checkpoint_dir() + sub + "/pair_" + pair.tag);
        }
    }
    for (PairRun& pair : pairs) pair.trainer->save_checkpoints(out.final_dir() + "/pair_" + pair.tag);

    // Canonical attention artifacts consumed by derive-masks.
    if (cfg.stage1_routing == "intermediate") {
        nn::save_net(out.final_dir() + "/att_s.ckpt", pairs[0].trainer->attention_a());
        nn::save_net(out.final_dir() + "/att_t.ckpt", pairs[1].trainer->attention_a());
    } else {
        nn::save_net(out.final_dir() + "/att_s.ckpt", pairs[0].trainer->attention_a());
        nn::save_net(out.final_dir() + "/att_t.ckpt", pairs[0].trainer->attention_b());
    }
}

// ---------------------------------------------------------------------------
// Mask derivation

ClassMask derive_mask(const Tensor& attention, const MaskDerivationConfig& cfg) {
    if (attention.c != 1) throw ShapeError("derive_mask: attention map must be 1×H×W");
    const int h = attention.h, w = attention.w;
    ClassMask thresholded(h, w, kObjectClass);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) thresholded.at(y, x) = attention.at(0, y, x) >= cfg.tau ? 1 : 0;

    // Chebyshev dilation
    ClassMask dilated(h, w, kObjectClass);
    const int r = cfg.dilation_radius;
    if (r == 0) {
        dilated = thresholded;
    } else {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                std::uint8_t any = 0;
                for (int dy = -r; dy <= r && !any; ++dy) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= h) continue;
                    for (int dx = -r; dx <= r; ++dx) {
                        const int xx = x + dx;
                        if (xx >= 0 && xx < w && thresholded.at(yy, xx)) {
                            any = 1;
                            break;
                        }
                    }
                }
                dilated.at(y, x) = any;
            }
    }

    if (cfg.min_area <= 1) return dilated;

    // Remove 8-connected components smaller than min_area.
    ClassMask out(h, w, kObjectClass);
    std::vector<int> stack;
    std::vector<std::uint8_t> seen(static_cast<size_t>(h) * w, 0);
    for (int start = 0; start < h * w; ++start) {
        if (!dilated.mask[start] || seen[start]) continue;
        std::vector<int> component;
        stack.push_back(start);
        seen[start] = 1;
        while (!stack.empty()) {
            const int cur = stack.back();
            stack.pop_back();
            component.push_back(cur);
            const int cy = cur / w, cx = cur % w;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    const int yy = cy + dy, xx = cx + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    const int idx = yy * w + xx;
                    if (dilated.mask[idx] && !seen[idx]) {
                        seen[idx] = 1;
                        stack.push_back(idx);
                    }
                }
        }
        if (static_cast<int>(component.size()) >= cfg.min_area)
            for (int idx : component) out.mask[idx] = 1;
    }
    return out;
}

DerivedMaskSet derive_masks(const nn::EncoderDecoderNet& attention, const DomainDataset& data, const MaskDerivationConfig& cfg) {
    if (data.samples.empty()) throw DependencyError("derive_masks: dataset is empty");
    DerivedMaskSet out;
    for (const LabeledSample& s : data.samples) {
        nn::Tape t;
        const Tensor att = attention.forward(s.image.pixels, t);
        ClassMask m = derive_mask(att, cfg);
        if (m.none_active()) out.empty_ids.push_back(s.image.id);
        out.by_id.emplace(s.image.id, std::move(m));
    }
    return out;
}

void derive_masks_run(const ToyDatasets& data, const std::string& stage1_dir, const MaskDerivationConfig& cfg, const RunPaths& out) {
    const std::string att_s_path = stage1_dir + "/checkpoints/final/att_s.ckpt";
    const std::string att_t_path = stage1_dir + "/checkpoints/final/att_t.ckpt";
    if (!fs::exists(att_s_path) || !fs::exists(att_t_path))
        throw DependencyError("no attention checkpoints under " + stage1_dir + "; run train-stage1 first");
    nn::EncoderDecoderNet att_s = nn::load_encoder_decoder(att_s_path);
    nn::EncoderDecoderNet att_t = nn::load_encoder_decoder(att_t_path);
    if (att_s.role() != nn::NetRole::kAttention || att_t.role() != nn::NetRole::kAttention)
        throw DependencyError("checkpoints under " + stage1_dir + " are not attention networks");

    ensure_dir(out.mask_dir());
    DerivedMaskSet masks_s = derive_masks(att_s, data.source, cfg);
    DerivedMaskSet masks_t = derive_masks(att_t, data.target, cfg);

    json manifest;
    manifest["tau"] = cfg.tau;
    manifest["dilation_radius"] = cfg.dilation_radius;
    manifest["min_area"] = cfg.min_area;
    manifest["attention_source_checkpoint"] = hash_file_hex(att_s_path);
    manifest["attention_target_checkpoint"] = hash_file_hex(att_t_path);
    json entries = json::array();
    auto persist = [&](const DerivedMaskSet& set, const DomainDataset& domain_data) {
        for (const LabeledSample& s : domain_data.samples) {
            const ClassMask& m = set.by_id.at(s.image.id);
            const std::string file = s.image.id + ".pgm";
            write_mask_pgm(out.mask_dir() + "/" + file, m.mask, m.h, m.w);
            json e;
            e["id"] = s.image.id;
            e["file"] = file;
            e["active"] = m.active_count();
            e["empty"] = m.none_active();
            entries.push_back(e);
        }
    };
    persist(masks_s, data.source);
    persist(masks_t, data.target);
    manifest["samples"] = entries;
    manifest["empty_count"] = masks_s.empty_ids.size() + masks_t.empty_ids.size();
    write_file(out.root + "/masks_manifest.json", manifest.dump(2) + "\n");
}

std::map<std::string, ClassMask> load_mask_dir(const std::string& masks_dir) {
    const std::string manifest_path = masks_dir + "/masks_manifest.json";
    if (!fs::exists(manifest_path)) throw DependencyError("no masks_manifest.json under " + masks_dir + "; run derive-masks first");
    const json manifest = json::parse(read_file(manifest_path));
    std::map<std::string, ClassMask> out;
    for (const json& e : manifest.at("samples")) {
        int h = 0, w = 0;
        std::vector<std::uint8_t> bits = read_mask_pgm(masks_dir + "/masks/" + e.at("file").get<std::string>(), &h, &w);
        ClassMask m(h, w, kObjectClass);
        m.mask = std::move(bits);
        out.emplace(e.at("id").get<std::string>(), std::move(m));
    }
    return out;
}

void stage2_train(const ToyDatasets& data, const std::string& masks_dir, const TrainConfig& cfg, const RunPaths& out) {
    std::map<std::string, ClassMask> masks = load_mask_dir(masks_dir);
    const std::string hash_before = mask_dir_hash(masks_dir + "/masks");

    StoredMasks stored(std::move(masks));
    SplitTrainer trainer(cfg, data.source, data.target, stored, stored);
    run_split_training(trainer, cfg.stage2_iters, cfg, out);

    // Phase discipline: masks are frozen artifacts between the stages.
    const std::string hash_after = mask_dir_hash(masks_dir + "/masks");
    json check;
    check["mask_dir"] = masks_dir;
    check["hash_before"] = hash_before;
    check["hash_after"] = hash_after;
    check["unchanged"] = hash_before == hash_after;
    write_file(out.root + "/mask_freeze_check.json", check.dump(2) + "\n");
    if (hash_before != hash_after) throw DependencyError("mask directory changed during stage-2 training");
}

}  // namespace agat::train
