#include "agat/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <sstream>

#include "agat/errors.hpp"

namespace agat::nn {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

int conv_out_side(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

void im2col(const Tensor& x, int kernel, int stride, int pad, std::vector<double>& cols, int oh, int ow) {
    const int rows = x.c * kernel * kernel;
    cols.assign(static_cast<size_t>(rows) * oh * ow, 0.0);
    for (int ci = 0; ci < x.c; ++ci) {
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                const int row = (ci * kernel + ky) * kernel + kx;
                double* dst = cols.data() + static_cast<size_t>(row) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= x.h) continue;
                    const double* src = x.channel(ci) + static_cast<size_t>(iy) * x.w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < x.w) dst[static_cast<size_t>(oy) * ow + ox] = src[ix];
                    }
                }
            }
        }
    }
}

void col2im_accumulate(const std::vector<double>& cols, int kernel, int stride, int pad, Tensor& dx, int oh, int ow) {
    for (int ci = 0; ci < dx.c; ++ci) {
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                const int row = (ci * kernel + ky) * kernel + kx;
                const double* src = cols.data() + static_cast<size_t>(row) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= dx.h) continue;
                    double* dst = dx.channel(ci) + static_cast<size_t>(iy) * dx.w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < dx.w) dst[ix] += src[static_cast<size_t>(oy) * ow + ox];
                    }
                }
            }
        }
    }
}

void multiply_broadcast(Tensor& y, const Tensor& m) {
    for (int c = 0; c < y.c; ++c) {
        double* p = y.channel(c);
        for (size_t i = 0; i < m.v.size(); ++i) p[i] *= m.v[i];
    }
}

void init_gaussian(std::vector<Param> params, Rng& rng) {
    // CycleGAN-family convention: conv weights N(0, 0.02), biases and norm
    // offsets zero, norm scales one.
    for (Param& p : params) {
        if (p.name.ends_with(".w")) {
            for (double& v : p.value->v) v = rng.normal(0.0, 0.02);
        } else if (p.name.ends_with(".gamma")) {
            p.value->fill(1.0);
        } else {
            p.value->fill(0.0);
        }
        p.grad->fill(0.0);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_ch_, int out_ch_, int kernel_, int stride_, int pad_)
    : in_ch(in_ch_),
      out_ch(out_ch_),
      kernel(kernel_),
      stride(stride_),
      pad(pad_),
      w(1, out_ch_, in_ch_ * kernel_ * kernel_),
      b(1, 1, out_ch_),
      gw(1, out_ch_, in_ch_ * kernel_ * kernel_),
      gb(1, 1, out_ch_) {}

Tensor Conv2d::forward(const Tensor& x, Tape& tape) const {
    if (x.c != in_ch) throw ShapeError("conv: input channel mismatch");
    const int oh = conv_out_side(x.h, kernel, stride, pad);
    const int ow = conv_out_side(x.w, kernel, stride, pad);
    if (oh <= 0 || ow <= 0) throw ShapeError("conv: input too small");
    const int rows = in_ch * kernel * kernel;

    Tensor cols(1, rows, oh * ow);
    im2col(x, kernel, stride, pad, cols.v, oh, ow);

    Tensor y(out_ch, oh, ow);
    CMapRM wm(w.v.data(), out_ch, rows);
    CMapRM cm(cols.v.data(), rows, oh * ow);
    MapRM ym(y.v.data(), out_ch, oh * ow);
    ym.noalias() = wm * cm;
    for (int oc = 0; oc < out_ch; ++oc) ym.row(oc).array() += b.v[oc];

    Tensor in_shape(1, 1, 2);
    in_shape.v[0] = x.h;
    in_shape.v[1] = x.w;
    tape.push(std::move(in_shape));
    tape.push(std::move(cols));  // reused in backward instead of rebuilding
    return y;
}

Tensor Conv2d::backward(const Tensor& dy, Tape& tape, bool want_input_grad) {
    const Tensor cols = tape.pop();
    const Tensor in_shape = tape.pop();
    const int oh = dy.h, ow = dy.w;
    const int rows = in_ch * kernel * kernel;

    CMapRM dym(dy.v.data(), out_ch, oh * ow);
    CMapRM cm(cols.v.data(), rows, oh * ow);
    MapRM gwm(gw.v.data(), out_ch, rows);
    gwm.noalias() += dym * cm.transpose();
    for (int oc = 0; oc < out_ch; ++oc) gb.v[oc] += dym.row(oc).sum();

    if (!want_input_grad) return Tensor();

    std::vector<double> dcols(static_cast<size_t>(rows) * oh * ow);
    CMapRM wm(w.v.data(), out_ch, rows);
    MapRM dcm(dcols.data(), rows, oh * ow);
    dcm.noalias() = wm.transpose() * dym;

    Tensor dx(in_ch, static_cast<int>(in_shape.v[0]), static_cast<int>(in_shape.v[1]));
    col2im_accumulate(dcols, kernel, stride, pad, dx, oh, ow);
    return dx;
}

void Conv2d::collect_params(const std::string& prefix, std::vector<Param>& out) {
    out.push_back({prefix + "w", &w, &gw});
    out.push_back({prefix + "b", &b, &gb});
}

std::string Conv2d::describe() const {
    std::ostringstream ss;
    ss << "conv(" << in_ch << "->" << out_ch << ",k" << kernel << ",s" << stride << ",p" << pad << ")";
    return ss.str();
}

// ---------------------------------------------------------------------------
// InstanceNorm

InstanceNorm::InstanceNorm(int channels_, double eps_)
    : channels(channels_), eps(eps_), gamma(1, 1, channels_), beta(1, 1, channels_), ggamma(1, 1, channels_), gbeta(1, 1, channels_) {
    gamma.fill(1.0);
}

Tensor InstanceNorm::forward(const Tensor& x, Tape& tape) const {
    if (x.c != channels) throw ShapeError("instance_norm: channel mismatch");
    const int hw = x.h * x.w;
    Tensor xhat(x.c, x.h, x.w);
    Tensor inv(1, 1, channels);
    Tensor y(x.c, x.h, x.w);
    for (int c = 0; c < channels; ++c) {
        const double* px = x.channel(c);
        double mean = 0.0;
        for (int i = 0; i < hw; ++i) mean += px[i];
        mean /= hw;
        double var = 0.0;
        for (int i = 0; i < hw; ++i) {
            const double d = px[i] - mean;
            var += d * d;
        }
        var /= hw;
        const double istd = 1.0 / std::sqrt(var + eps);
        inv.v[c] = istd;
        double* ph = xhat.channel(c);
        double* py = y.channel(c);
        for (int i = 0; i < hw; ++i) {
            ph[i] = (px[i] - mean) * istd;
            py[i] = gamma.v[c] * ph[i] + beta.v[c];
        }
    }
    tape.push(std::move(xhat));
    tape.push(std::move(inv));
    return y;
}

Tensor InstanceNorm::backward(const Tensor& dy, Tape& tape, bool /*want_input_grad*/) {
    Tensor inv = tape.pop();
    Tensor xhat = tape.pop();
    const int hw = dy.h * dy.w;
    Tensor dx(dy.c, dy.h, dy.w);
    for (int c = 0; c < channels; ++c) {
        const double* pdy = dy.channel(c);
        const double* ph = xhat.channel(c);
        double sum_dy = 0.0, sum_dyh = 0.0;
        for (int i = 0; i < hw; ++i) {
            sum_dy += pdy[i];
            sum_dyh += pdy[i] * ph[i];
        }
        ggamma.v[c] += sum_dyh;
        gbeta.v[c] += sum_dy;
        const double mean_dy = sum_dy / hw;
        const double mean_dyh = sum_dyh / hw;
        const double scale = gamma.v[c] * inv.v[c];
        double* pdx = dx.channel(c);
        for (int i = 0; i < hw; ++i) pdx[i] = scale * (pdy[i] - mean_dy - ph[i] * mean_dyh);
    }
    return dx;
}

void InstanceNorm::collect_params(const std::string& prefix, std::vector<Param>& out) {
    out.push_back({prefix + "gamma", &gamma, &ggamma});
    out.push_back({prefix + "beta", &beta, &gbeta});
}

std::string InstanceNorm::describe() const { return "inorm(" + std::to_string(channels) + ")"; }

// ---------------------------------------------------------------------------
// Activations

Tensor ReLU::forward(const Tensor& x, Tape& tape) const {
    Tensor y = x;
    for (double& v : y.v) v = v > 0.0 ? v : 0.0;
    tape.push(x);
    return y;
}

Tensor ReLU::backward(const Tensor& dy, Tape& tape, bool /*want_input_grad*/) {
    Tensor x = tape.pop();
    Tensor dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i)
        if (x.v[i] <= 0.0) dx.v[i] = 0.0;
    return dx;
}

Tensor LeakyReLU::forward(const Tensor& x, Tape& tape) const {
    Tensor y = x;
    for (double& v : y.v) v = v > 0.0 ? v : slope * v;
    tape.push(x);
    return y;
}

Tensor LeakyReLU::backward(const Tensor& dy, Tape& tape, bool /*want_input_grad*/) {
    Tensor x = tape.pop();
    Tensor dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i)
        if (x.v[i] <= 0.0) dx.v[i] *= slope;
    return dx;
}

std::string LeakyReLU::describe() const {
    std::ostringstream ss;
    ss << "lrelu(" << slope << ")";
    return ss.str();
}

Tensor Sigmoid::forward(const Tensor& x, Tape& tape) const {
    Tensor y = x;
    for (double& v : y.v) v = 1.0 / (1.0 + std::exp(-v));
    tape.push(y);
    return y;
}

Tensor Sigmoid::backward(const Tensor& dy, Tape& tape, bool /*want_input_grad*/) {
    Tensor y = tape.pop();
    Tensor dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= y.v[i] * (1.0 - y.v[i]);
    return dx;
}

Tensor UpsampleNearest2x::forward(const Tensor& x, Tape& tape) const {
    (void)tape;
    Tensor y(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c)
        for (int iy = 0; iy < x.h; ++iy)
            for (int ix = 0; ix < x.w; ++ix) {
                const double v = x.at(c, iy, ix);
                y.at(c, 2 * iy, 2 * ix) = v;
                y.at(c, 2 * iy, 2 * ix + 1) = v;
                y.at(c, 2 * iy + 1, 2 * ix) = v;
                y.at(c, 2 * iy + 1, 2 * ix + 1) = v;
            }
    return y;
}

Tensor UpsampleNearest2x::backward(const Tensor& dy, Tape& tape, bool /*want_input_grad*/) {
    (void)tape;
    Tensor dx(dy.c, dy.h / 2, dy.w / 2);
    for (int c = 0; c < dx.c; ++c)
        for (int iy = 0; iy < dx.h; ++iy)
            for (int ix = 0; ix < dx.w; ++ix)
                dx.at(c, iy, ix) = dy.at(c, 2 * iy, 2 * ix) + dy.at(c, 2 * iy, 2 * ix + 1) + dy.at(c, 2 * iy + 1, 2 * ix) +
                                   dy.at(c, 2 * iy + 1, 2 * ix + 1);
    return dx;
}

// ---------------------------------------------------------------------------
// Sequential / ResidualBlock

Tensor Sequential::forward(const Tensor& x, Tape& tape) const {
    Tensor y = x;
    for (const auto& layer : layers_) y = layer->forward(y, tape);
    return y;
}

Tensor Sequential::backward(const Tensor& dy, Tape& tape, bool want_input_grad) {
    Tensor d = dy;
    for (size_t i = layers_.size(); i-- > 0;) d = layers_[i]->backward(d, tape, want_input_grad || i > 0);
    return d;
}

void Sequential::collect_params(const std::string& prefix, std::vector<Param>& out) {
    for (size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect_params(prefix + "l" + std::to_string(i) + ".", out);
}

std::string Sequential::describe() const {
    std::string s;
    for (const auto& layer : layers_) {
        if (!s.empty()) s += ";";
        s += layer->describe();
    }
    return s;
}

ResidualBlock::ResidualBlock(int channels) {
    body_.add(std::make_unique<Conv2d>(channels, channels, 3, 1, 1));
    body_.add(std::make_unique<InstanceNorm>(channels));
    body_.add(std::make_unique<ReLU>());
    body_.add(std::make_unique<Conv2d>(channels, channels, 3, 1, 1));
    body_.add(std::make_unique<InstanceNorm>(channels));
}

Tensor ResidualBlock::forward(const Tensor& x, Tape& tape) const {
    Tensor y = body_.forward(x, tape);
    y += x;
    return y;
}

Tensor ResidualBlock::backward(const Tensor& dy, Tape& tape, bool /*want_input_grad*/) {
    // The skip connection always needs dL/dx of the body.
    Tensor dx = body_.backward(dy, tape, true);
    dx += dy;
    return dx;
}

void ResidualBlock::collect_params(const std::string& prefix, std::vector<Param>& out) { body_.collect_params(prefix + "res.", out); }

std::string ResidualBlock::describe() const { return "res[" + body_.describe() + "]"; }

// ---------------------------------------------------------------------------
// Roles, masks, composition

const char* role_name(NetRole role) {
    switch (role) {
        case NetRole::kGenerator: return "generator";
        case NetRole::kDiscriminator: return "discriminator";
        case NetRole::kAttention: return "attention";
        case NetRole::kDetector: return "detector";
    }
    return "?";
}

NetRole role_from_name(const std::string& name) {
    if (name == "generator") return NetRole::kGenerator;
    if (name == "discriminator") return NetRole::kDiscriminator;
    if (name == "attention") return NetRole::kAttention;
    if (name == "detector") return NetRole::kDetector;
    throw UsageError("unknown network role: " + name);
}

ClassMask downsample_mask(const ClassMask& mask, int target_h, int target_w) {
    if (target_h <= 0 || target_w <= 0 || mask.h % target_h != 0 || mask.w % target_w != 0)
        throw ShapeError("downsample_mask: target size must divide mask size");
    const int fh = mask.h / target_h, fw = mask.w / target_w;
    ClassMask out(target_h, target_w, mask.class_id);
    for (int y = 0; y < target_h; ++y)
        for (int x = 0; x < target_w; ++x) {
            std::uint8_t any = 0;
            for (int dy = 0; dy < fh && !any; ++dy)
                for (int dx = 0; dx < fw; ++dx)
                    if (mask.at(y * fh + dy, x * fw + dx)) {
                        any = 1;
                        break;
                    }
            out.at(y, x) = any;
        }
    return out;
}

Tensor compose_translation(const Tensor& img, const Tensor& gen, const Tensor& att) {
    require_same_shape(img, gen, "compose_translation");
    if (att.c != 1 || att.h != img.h || att.w != img.w) throw ShapeError("compose_translation: attention must be 1×H×W");
    Tensor out(img.c, img.h, img.w);
    for (int c = 0; c < img.c; ++c) {
        const double* pi = img.channel(c);
        const double* pg = gen.channel(c);
        double* po = out.channel(c);
        for (size_t i = 0; i < att.v.size(); ++i) po[i] = att.v[i] * pg[i] + (1.0 - att.v[i]) * pi[i];
    }
    return out;
}

ComposeGrads compose_translation_backward(const Tensor& d_out, const Tensor& img, const Tensor& gen, const Tensor& att) {
    ComposeGrads g;
    g.d_img = Tensor(img.c, img.h, img.w);
    g.d_gen = Tensor(img.c, img.h, img.w);
    g.d_att = Tensor(1, img.h, img.w);
    for (int c = 0; c < img.c; ++c) {
        const double* pd = d_out.channel(c);
        const double* pi = img.channel(c);
        const double* pg = gen.channel(c);
        double* di = g.d_img.channel(c);
        double* dg = g.d_gen.channel(c);
        for (size_t i = 0; i < att.v.size(); ++i) {
            di[i] = (1.0 - att.v[i]) * pd[i];
            dg[i] = att.v[i] * pd[i];
            g.d_att.v[i] += (pg[i] - pi[i]) * pd[i];
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// EncoderDecoderNet

EncoderDecoderNet::EncoderDecoderNet(NetRole role, EncoderDecoderArch arch) : role_(role), arch_(arch) {
    const int b = arch.base;
    seq_.add(std::make_unique<Conv2d>(arch.in_ch, b, 5, 1, 2));
    seq_.add(std::make_unique<InstanceNorm>(b));
    seq_.add(std::make_unique<ReLU>());
    seq_.add(std::make_unique<Conv2d>(b, 2 * b, 3, 2, 1));
    seq_.add(std::make_unique<InstanceNorm>(2 * b));
    seq_.add(std::make_unique<ReLU>());
    seq_.add(std::make_unique<Conv2d>(2 * b, 4 * b, 3, 2, 1));
    seq_.add(std::make_unique<InstanceNorm>(4 * b));
    seq_.add(std::make_unique<ReLU>());
    for (int i = 0; i < arch.n_res; ++i) seq_.add(std::make_unique<ResidualBlock>(4 * b));
    // Convolve at the coarse scale, then upsample: same receptive structure,
    // a quarter of the decoder FLOPs of conv-after-upsample.
    seq_.add(std::make_unique<Conv2d>(4 * b, 2 * b, 3, 1, 1));
    seq_.add(std::make_unique<InstanceNorm>(2 * b));
    seq_.add(std::make_unique<ReLU>());
    seq_.add(std::make_unique<UpsampleNearest2x>());
    seq_.add(std::make_unique<Conv2d>(2 * b, b, 3, 1, 1));
    seq_.add(std::make_unique<InstanceNorm>(b));
    seq_.add(std::make_unique<ReLU>());
    seq_.add(std::make_unique<UpsampleNearest2x>());
    seq_.add(std::make_unique<Conv2d>(b, arch.out_ch, 5, 1, 2));
    seq_.add(std::make_unique<Sigmoid>());
}

Tensor EncoderDecoderNet::forward(const Tensor& x, Tape& tape) const {
    if (x.c != arch_.in_ch) throw ShapeError("encoder_decoder: channel mismatch");
    if (x.h % 4 != 0 || x.w % 4 != 0) throw ShapeError("encoder_decoder: input sides must be multiples of 4");
    return seq_.forward(x, tape);
}

Tensor EncoderDecoderNet::backward(const Tensor& dy, Tape& tape, bool want_input_grad) { return seq_.backward(dy, tape, want_input_grad); }

std::vector<Param> EncoderDecoderNet::params() {
    std::vector<Param> out;
    seq_.collect_params("", out);
    return out;
}

void EncoderDecoderNet::init_weights(Rng& rng) { init_gaussian(params(), rng); }

void EncoderDecoderNet::zero_grads() { nn::zero_grads(params()); }

// ---------------------------------------------------------------------------
// PatchDiscriminator

PatchDiscriminator::PatchDiscriminator(NetRole role, DiscriminatorArch arch) : role_(role), arch_(arch) {
    int in = arch.in_ch;
    for (int i = 0; i < arch.blocks; ++i) {
        const int out = arch.base << i;
        convs_.push_back(std::make_unique<Conv2d>(in, out, 4, 2, 1));
        acts_.push_back(std::make_unique<LeakyReLU>(0.2));
        in = out;
    }
    head_ = std::make_unique<Conv2d>(in, 1, arch.head_kernel, 1, arch.head_kernel / 2);
}

Tensor PatchDiscriminator::forward(const Tensor& x, const ClassMask* mask, Tape& tape) const {
    if (mask && (mask->h != x.h || mask->w != x.w)) throw ShapeError("discriminator: mask shape must match image");
    Tensor y = x;
    for (size_t i = 0; i < convs_.size(); ++i) {
        y = convs_[i]->forward(y, tape);
        y = acts_[i]->forward(y, tape);
        if (mask) {
            Tensor m = downsample_mask(*mask, y.h, y.w).to_tensor();
            multiply_broadcast(y, m);
            tape.push(std::move(m));
        }
    }
    y = head_->forward(y, tape);
    if (mask) {
        Tensor m = downsample_mask(*mask, y.h, y.w).to_tensor();
        multiply_broadcast(y, m);
        tape.push(std::move(m));
    }
    Tensor flag(1, 1, 1);
    flag.v[0] = mask ? 1.0 : 0.0;
    tape.push(std::move(flag));
    return y;
}

Tensor PatchDiscriminator::backward(const Tensor& dpatch, Tape& tape, bool want_input_grad) {
    const Tensor flag = tape.pop();
    const bool masked = flag.v[0] != 0.0;
    Tensor d = dpatch;
    if (masked) {
        Tensor m = tape.pop();
        multiply_broadcast(d, m);
    }
    d = head_->backward(d, tape);
    for (size_t i = convs_.size(); i-- > 0;) {
        if (masked) {
            Tensor m = tape.pop();
            multiply_broadcast(d, m);
        }
        d = acts_[i]->backward(d, tape);
        d = convs_[i]->backward(d, tape, want_input_grad || i > 0);
    }
    return d;
}

std::vector<Param> PatchDiscriminator::params() {
    std::vector<Param> out;
    for (size_t i = 0; i < convs_.size(); ++i) convs_[i]->collect_params("b" + std::to_string(i) + ".", out);
    head_->collect_params("head.", out);
    return out;
}

void PatchDiscriminator::init_weights(Rng& rng) { init_gaussian(params(), rng); }

void PatchDiscriminator::zero_grads() { nn::zero_grads(params()); }

std::string PatchDiscriminator::describe() const {
    std::string s;
    for (size_t i = 0; i < convs_.size(); ++i) s += convs_[i]->describe() + ";" + acts_[i]->describe() + ";mask;";
    s += head_->describe() + ";mask";
    return s;
}

// ---------------------------------------------------------------------------
// DetectorNet

DetectorNet::DetectorNet(DetectorArch arch) : arch_(arch) {
    int in = arch.in_ch;
    for (int i = 0; i < arch.blocks; ++i) {
        const int out = arch.base << i;
        seq_.add(std::make_unique<Conv2d>(in, out, 4, 2, 1));
        seq_.add(std::make_unique<LeakyReLU>(0.2));
        in = out;
    }
    seq_.add(std::make_unique<Conv2d>(in, arch.head_ch, 3, 1, 1));
}

Tensor DetectorNet::forward(const Tensor& x, Tape& tape) const { return seq_.forward(x, tape); }
Tensor DetectorNet::backward(const Tensor& dy, Tape& tape, bool want_input_grad) { return seq_.backward(dy, tape, want_input_grad); }

std::vector<Param> DetectorNet::params() {
    std::vector<Param> out;
    seq_.collect_params("", out);
    return out;
}

void DetectorNet::init_weights(Rng& rng) { init_gaussian(params(), rng); }

void DetectorNet::zero_grads() { nn::zero_grads(params()); }

// ---------------------------------------------------------------------------

void zero_grads(const std::vector<Param>& params) {
    for (const Param& p : params) p.grad->fill(0.0);
}

bool params_finite(const std::vector<Param>& params) {
    for (const Param& p : params)
        if (!p.value->all_finite()) return false;
    return true;
}

}  // namespace agat::nn
