#include "agat/adam.hpp"

#include <cmath>

#include "agat/errors.hpp"
#include "agat/serialize.hpp"

namespace agat::nn {

Adam::Adam(const AdamConfig& cfg, const std::vector<Param>& params) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Param& p : params) {
        m_.emplace_back(p.value->c, p.value->h, p.value->w);
        v_.emplace_back(p.value->c, p.value->h, p.value->w);
    }
}

void Adam::step(const std::vector<Param>& params) {
    if (params.size() != m_.size()) throw ShapeError("adam: parameter list size changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& value = *params[i].value;
        const Tensor& grad = *params[i].grad;
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (size_t j = 0; j < value.v.size(); ++j) {
            const double g = grad.v[j];
            m.v[j] = cfg_.beta1 * m.v[j] + (1.0 - cfg_.beta1) * g;
            v.v[j] = cfg_.beta2 * v.v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m.v[j] / bc1;
            const double vhat = v.v[j] / bc2;
            value.v[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

std::string Adam::serialize() const {
    std::string out;
    out += "AGATADAM";
    put_u32(out, 1);  // format version
    put_f64(out, cfg_.lr);
    put_f64(out, cfg_.beta1);
    put_f64(out, cfg_.beta2);
    put_f64(out, cfg_.eps);
    put_u64(out, t_);
    put_u64(out, m_.size());
    auto put_tensor = [&](const Tensor& t) {
        put_u32(out, static_cast<std::uint32_t>(t.c));
        put_u32(out, static_cast<std::uint32_t>(t.h));
        put_u32(out, static_cast<std::uint32_t>(t.w));
        for (double x : t.v) put_f64(out, x);
    };
    for (const Tensor& t : m_) put_tensor(t);
    for (const Tensor& t : v_) put_tensor(t);
    return out;
}

Adam Adam::deserialize(const std::string& bytes) {
    ByteReader r(bytes);
    if (r.bytes(8) != "AGATADAM") throw std::runtime_error("not an optimizer state file");
    const std::uint32_t version = r.u32();
    if (version != 1) throw std::runtime_error("unsupported optimizer state version");
    Adam a;
    a.cfg_.lr = r.f64();
    a.cfg_.beta1 = r.f64();
    a.cfg_.beta2 = r.f64();
    a.cfg_.eps = r.f64();
    a.t_ = r.u64();
    const std::uint64_t n = r.u64();
    auto get_tensor = [&]() {
        const int c = static_cast<int>(r.u32());
        const int h = static_cast<int>(r.u32());
        const int w = static_cast<int>(r.u32());
        Tensor t(c, h, w);
        for (double& x : t.v) x = r.f64();
        return t;
    };
    for (std::uint64_t i = 0; i < n; ++i) a.m_.push_back(get_tensor());
    for (std::uint64_t i = 0; i < n; ++i) a.v_.push_back(get_tensor());
    return a;
}

}  // namespace agat::nn
