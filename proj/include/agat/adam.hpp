#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agat/nn.hpp"

namespace agat::nn {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One optimizer instance per network; moment buffers parallel the network's
// parameter list order.
class Adam {
  public:
    Adam() = default;
    Adam(const AdamConfig& cfg, const std::vector<Param>& params);

    void step(const std::vector<Param>& params);

    const AdamConfig& config() const { return cfg_; }
    std::uint64_t step_count() const { return t_; }

    // Bit-exact state round-trip.
    std::string serialize() const;
    static Adam deserialize(const std::string& bytes);

  private:
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace agat::nn
