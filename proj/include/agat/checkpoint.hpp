#pragma once

#include <string>

#include "agat/adam.hpp"
#include "agat/nn.hpp"

namespace agat::nn {

// Network checkpoint container: magic, format version, role, an architecture
// descriptor (expanded layer list plus the builder parameters), then the flat
// weight arrays by name as little-endian float64. Round-trips bit-exactly.

void save_net(const std::string& path, EncoderDecoderNet& net);
void save_net(const std::string& path, PatchDiscriminator& net);
void save_net(const std::string& path, DetectorNet& net);

EncoderDecoderNet load_encoder_decoder(const std::string& path);
PatchDiscriminator load_discriminator(const std::string& path);
DetectorNet load_detector(const std::string& path);

NetRole peek_role(const std::string& path);

void save_optimizer(const std::string& path, const Adam& adam);
Adam load_optimizer(const std::string& path);

}  // namespace agat::nn
