#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agat/tensor.hpp"

namespace agat {

// Lossless 8-bit image files: binary PPM (P6) for 3-channel, PGM (P5) for
// 1-channel. Pixel values in [0,1] quantize to k/255.

std::uint8_t quantize_byte(double x);

// Snaps every value to the nearest k/255 so in-memory grids match their
// on-disk representation exactly.
void quantize_inplace(Tensor& t);

void write_ppm(const std::string& path, const Tensor& rgb);
Tensor read_ppm(const std::string& path);

void write_pgm(const std::string& path, const Tensor& gray);
Tensor read_pgm(const std::string& path);

// 0/1 label grids stored as 0/255 PGM.
void write_mask_pgm(const std::string& path, const std::vector<std::uint8_t>& mask, int h, int w);
std::vector<std::uint8_t> read_mask_pgm(const std::string& path, int* h, int* w);

}  // namespace agat
