#pragma once

// Decoupled-weight-decay adaptive optimizer (AdamW). Moments are serialized
// alongside parameters so training resumes bit-exactly.

#include <cstdint>
#include <string>
#include <vector>

#include "dhvae/model.hpp"
#include "dhvae/serialize.hpp"
#include "dhvae/tensor.hpp"

namespace dhvae {

struct AdamWConfig {
    double lr = 5e-5;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double weight_decay = 1e-6;
    double eps = 1e-8;
};

class AdamW {
  public:
    AdamW() = default;
    AdamW(AdamWConfig cfg, const ParamSet& params);

    // grads aligned with params.entries; decay_skip entries (by name) are
    // exempt from weight decay
    void step(ParamSet& params, const std::vector<Tensor>& grads,
              const std::vector<std::string>& decay_skip = {});

    std::int64_t step_count() const { return t_; }

    void save(Archive& ar, const std::string& prefix) const;
    void load(const Archive& ar, const std::string& prefix, const ParamSet& params);

    AdamWConfig config() const { return cfg_; }

  private:
    AdamWConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace dhvae
