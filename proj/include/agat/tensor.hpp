#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "agat/errors.hpp"

namespace agat {

// Dense row-major C×H×W grid of doubles. The single value type flowing
// through networks, losses and metrics.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0) {}

    static Tensor zeros(int c, int h, int w) { return Tensor(c, h, w); }
    static Tensor full(int c, int h, int w, double value) {
        Tensor t(c, h, w);
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }

    size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }
    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    double& at(int ci, int y, int x) { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }
    double at(int ci, int y, int x) const { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }

    double* channel(int ci) { return v.data() + static_cast<size_t>(ci) * h * w; }
    const double* channel(int ci) const { return v.data() + static_cast<size_t>(ci) * h * w; }

    void fill(double value) { std::fill(v.begin(), v.end(), value); }

    Tensor& operator+=(const Tensor& o) {
        assert(same_shape(o));
        for (size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        assert(same_shape(o));
        for (size_t i = 0; i < v.size(); ++i) v[i] -= o.v[i];
        return *this;
    }
    Tensor& operator*=(double s) {
        for (double& x : v) x *= s;
        return *this;
    }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    double min() const {
        double m = v.empty() ? 0.0 : v[0];
        for (double x : v) m = std::min(m, x);
        return m;
    }
    double max() const {
        double m = v.empty() ? 0.0 : v[0];
        for (double x : v) m = std::max(m, x);
        return m;
    }
    double sum() const {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    double mean() const { return v.empty() ? 0.0 : sum() / static_cast<double>(v.size()); }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": shape mismatch");
}

}  // namespace agat
