#pragma once

#include <memory>
#include <string>
#include <vector>

#include "agat/data.hpp"
#include "agat/rng.hpp"
#include "agat/tensor.hpp"

namespace agat::nn {

// Per-call activation storage. Forward pushes, backward pops in reverse, so
// one network instance can run several forward passes per iteration (cycle
// graphs) with independent tapes while its parameters stay read-only.
struct Tape {
    std::vector<Tensor> stack;
    void push(Tensor t) { stack.push_back(std::move(t)); }
    Tensor pop() {
        Tensor t = std::move(stack.back());
        stack.pop_back();
        return t;
    }
    bool empty() const { return stack.empty(); }
};

struct Param {
    std::string name;
    Tensor* value;
    Tensor* grad;
};

class Layer {
  public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, Tape& tape) const = 0;
    // Accumulates parameter gradients and returns dL/dx. Callers whose input
    // is a graph leaf (dataset pixels) pass want_input_grad = false so the
    // input-gradient work is skipped.
    virtual Tensor backward(const Tensor& dy, Tape& tape, bool want_input_grad = true) = 0;
    virtual void collect_params(const std::string& /*prefix*/, std::vector<Param>& /*out*/) {}
    virtual std::string describe() const = 0;
};

class Conv2d : public Layer {
  public:
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad);
    Tensor forward(const Tensor& x, Tape& tape) const override;
    Tensor backward(const Tensor& dy, Tape& tape, bool want_input_grad = true) override;
    void collect_params(const std::string& prefix, std::vector<Param>& out) override;
    std::string describe() const override;

    int in_ch, out_ch, kernel, stride, pad;
    Tensor w, b, gw, gb;  // w: 1×out_ch×(in_ch·k·k), b: 1×1×out_ch
};

class InstanceNorm : public Layer {
  public:
    explicit InstanceNorm(int channels, double eps = 1e-5);
    Tensor forward(const Tensor& x, Tape& tape) const override;
    Tensor backward(const Tensor& dy, Tape& tape, bool want_input_grad = true) override;
    void collect_params(const std::string& prefix, std::vector<Param>& out) override;
    std::string describe() const override;

    int channels;
    double eps;
    Tensor gamma, beta, ggamma, gbeta;
};

class ReLU : public Layer {
  public:
    Tensor forward(const Tensor& x, Tape& tape) const override;
    Tensor backward(const Tensor& dy, Tape& tape, bool want_input_grad = true) override;
    std::string describe() const override { return "relu"; }
};

class LeakyReLU : public Layer {
  public:
    explicit LeakyReLU(double slope = 0.2) : slope(slope) {}
    Tensor forward(const Tensor& x, Tape& tape) const override;
    Tensor backward(const Tensor& dy, Tape& tape, bool want_input_grad = true) override;
    std::string describe() const override;
    double slope;
};

class Sigmoid : public Layer {
  public:
    Tensor forward(const Tensor& x, Tape& tape) const override;
    Tensor backward(const Tensor& dy, Tape& tape, bool want_input_grad = true) override;
    std::string describe() const override { return "sigmoid"; }
};

class UpsampleNearest2x : public Layer {
  public:
    Tensor forward(const Tensor& x, Tape& tape) const override;
    Tensor backward(const Tensor& dy, Tape& tape, bool want_input_grad = true) override;
    std::string describe() const override { return "upsample2x"; }
};

class Sequential : public Layer {
  public:
    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    Tensor forward(const Tensor& x, Tape& tape) const override;
    Tensor backward(const Tensor& dy, Tape& tape, bool want_input_grad = true) override;
    void collect_params(const std::string& prefix, std::vector<Param>& out) override;
    std::string describe() const override;
    size_t size() const { return layers_.size(); }

  private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// y = x + body(x)
class ResidualBlock : public Layer {
  public:
    explicit ResidualBlock(int channels);
    Tensor forward(const Tensor& x, Tape& tape) const override;
    Tensor backward(const Tensor& dy, Tape& tape, bool want_input_grad = true) override;
    void collect_params(const std::string& prefix, std::vector<Param>& out) override;
    std::string describe() const override;

  private:
    Sequential body_;
};

enum class NetRole { kGenerator, kDiscriminator, kAttention, kDetector };
const char* role_name(NetRole role);
NetRole role_from_name(const std::string& name);

// Downsample a binary mask with max-pooling semantics: a coarse cell is 1
// iff any fine pixel in its window is 1. Sizes must divide evenly.
ClassMask downsample_mask(const ClassMask& mask, int target_h, int target_w);

// Encoder / residual trunk / decoder with a bounded [0,1] output head.
// out_ch = 3 is a generator; out_ch = 1 is an attention network.
struct EncoderDecoderArch {
    int in_ch = 3;
    int out_ch = 3;
    int base = 8;
    int n_res = 2;
};

class EncoderDecoderNet {
  public:
    EncoderDecoderNet(NetRole role, EncoderDecoderArch arch);

    Tensor forward(const Tensor& x, Tape& tape) const;
    Tensor backward(const Tensor& dy, Tape& tape, bool want_input_grad = true);

    std::vector<Param> params();
    void init_weights(Rng& rng);
    void zero_grads();

    NetRole role() const { return role_; }
    const EncoderDecoderArch& arch() const { return arch_; }
    std::string describe() const { return seq_.describe(); }

  private:
    NetRole role_;
    EncoderDecoderArch arch_;
    Sequential seq_;
};

// PatchGAN discriminator with mask gating after every convolution block and
// on the output grid. Norm-free: every computation is spatially local, which
// keeps the masked output bit-exactly independent of far-field input pixels.
struct DiscriminatorArch {
    int in_ch = 3;
    int base = 16;
    int blocks = 3;
    int head_kernel = 3;
};

class PatchDiscriminator {
  public:
    PatchDiscriminator(NetRole role, DiscriminatorArch arch);

    // mask == nullptr means no gating (plain PatchGAN forward).
    Tensor forward(const Tensor& x, const ClassMask* mask, Tape& tape) const;
    Tensor backward(const Tensor& dpatch, Tape& tape, bool want_input_grad = true);

    std::vector<Param> params();
    void init_weights(Rng& rng);
    void zero_grads();

    int patch_side(int image_side) const { return image_side >> arch_.blocks; }
    NetRole role() const { return role_; }
    const DiscriminatorArch& arch() const { return arch_; }
    std::string describe() const;

  private:
    NetRole role_;
    DiscriminatorArch arch_;
    std::vector<std::unique_ptr<Conv2d>> convs_;
    std::vector<std::unique_ptr<LeakyReLU>> acts_;
    std::unique_ptr<Conv2d> head_;
};

// Detector: discriminator-style trunk with a K-channel prediction head on
// the coarse grid (objectness logit + box regression).
struct DetectorArch {
    int in_ch = 3;
    int base = 16;
    int blocks = 3;
    int head_ch = 5;
};

class DetectorNet {
  public:
    explicit DetectorNet(DetectorArch arch);
    Tensor forward(const Tensor& x, Tape& tape) const;
    Tensor backward(const Tensor& dy, Tape& tape, bool want_input_grad = false);
    std::vector<Param> params();
    void init_weights(Rng& rng);
    void zero_grads();
    int grid_side(int image_side) const { return image_side >> arch_.blocks; }
    const DetectorArch& arch() const { return arch_; }

  private:
    DetectorArch arch_;
    Sequential seq_;
};

// Eq-style attention composition: out = att ∘ gen + (1 - att) ∘ img, with the
// single-channel attention map broadcast across image channels.
Tensor compose_translation(const Tensor& img, const Tensor& gen, const Tensor& att);

struct ComposeGrads {
    Tensor d_img, d_gen, d_att;
};
ComposeGrads compose_translation_backward(const Tensor& d_out, const Tensor& img, const Tensor& gen, const Tensor& att);

void zero_grads(const std::vector<Param>& params);
bool params_finite(const std::vector<Param>& params);

}  // namespace agat::nn
