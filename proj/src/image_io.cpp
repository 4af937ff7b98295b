#include "agat/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "agat/errors.hpp"

namespace agat {

std::uint8_t quantize_byte(double x) {
    const double c = std::clamp(x, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

void quantize_inplace(Tensor& t) {
    for (double& x : t.v) x = quantize_byte(x) / 255.0;
}

namespace {

void write_pnm(const std::string& path, const char* magic, int channels, const Tensor& img) {
    if (img.c != channels) throw ShapeError("image channel count does not match format");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << magic << "\n" << img.w << " " << img.h << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<size_t>(img.w) * channels);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < channels; ++c) row[static_cast<size_t>(x) * channels + c] = quantize_byte(img.at(c, y, x));
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

Tensor read_pnm(const std::string& path, const char* magic, int channels) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string m;
    f >> m;
    if (m != magic) throw std::runtime_error(path + ": expected " + magic + " header");
    // Header tokens may be separated by whitespace or comment lines.
    auto next_int = [&]() {
        std::string tok;
        while (f >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(f, rest);
                continue;
            }
            return std::stoi(tok);
        }
        throw std::runtime_error(path + ": truncated header");
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw std::runtime_error(path + ": only maxval 255 supported");
    f.get();  // single whitespace after maxval
    Tensor img(channels, h, w);
    std::vector<std::uint8_t> row(static_cast<size_t>(w) * channels);
    for (int y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!f) throw std::runtime_error(path + ": truncated pixel data");
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) img.at(c, y, x) = row[static_cast<size_t>(x) * channels + c] / 255.0;
    }
    return img;
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& rgb) { write_pnm(path, "P6", 3, rgb); }
Tensor read_ppm(const std::string& path) { return read_pnm(path, "P6", 3); }

void write_pgm(const std::string& path, const Tensor& gray) { write_pnm(path, "P5", 1, gray); }
Tensor read_pgm(const std::string& path) { return read_pnm(path, "P5", 1); }

void write_mask_pgm(const std::string& path, const std::vector<std::uint8_t>& mask, int h, int w) {
    Tensor t(1, h, w);
    for (size_t i = 0; i < mask.size(); ++i) t.v[i] = mask[i] ? 1.0 : 0.0;
    write_pgm(path, t);
}

std::vector<std::uint8_t> read_mask_pgm(const std::string& path, int* h, int* w) {
    const Tensor t = read_pgm(path);
    if (h) *h = t.h;
    if (w) *w = t.w;
    std::vector<std::uint8_t> mask(t.size());
    for (size_t i = 0; i < t.size(); ++i) mask[i] = t.v[i] > 0.5 ? 1 : 0;
    return mask;
}

}  // namespace agat
