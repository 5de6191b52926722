#include "dhvae/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "dhvae/errors.hpp"

namespace dhvae {

AdamW::AdamW(AdamWConfig cfg, const ParamSet& params) : cfg_(cfg) {
    if (!(cfg.lr > 0.0)) throw ConfigError("AdamW: lr must be positive");
    m_.reserve(params.entries.size());
    v_.reserve(params.entries.size());
    for (const auto& [name, t] : params.entries) {
        m_.emplace_back(t.shape());
        v_.emplace_back(t.shape());
    }
}

void AdamW::step(ParamSet& params, const std::vector<Tensor>& grads, const std::vector<std::string>& decay_skip) {
    if (grads.size() != params.entries.size() || m_.size() != grads.size())
        throw ShapeError("AdamW: gradient list does not match parameter list");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        Tensor& p = params.entries[i].second;
        const Tensor& g = grads[i];
        if (!g.same_shape(p)) throw ShapeError("AdamW: grad shape mismatch for " + params.entries[i].first);
        const bool skip_decay =
            std::find(decay_skip.begin(), decay_skip.end(), params.entries[i].first) != decay_skip.end();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::int64_t j = 0; j < p.numel(); ++j) {
            if (!skip_decay) p[j] -= cfg_.lr * cfg_.weight_decay * p[j];
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void AdamW::save(Archive& ar, const std::string& prefix) const {
    ar.meta += kv_line(prefix + ".step", std::to_string(t_));
    ar.meta += kv_line(prefix + ".lr", format_double(cfg_.lr));
    ar.meta += kv_line(prefix + ".beta1", format_double(cfg_.beta1));
    ar.meta += kv_line(prefix + ".beta2", format_double(cfg_.beta2));
    ar.meta += kv_line(prefix + ".weight_decay", format_double(cfg_.weight_decay));
    ar.meta += kv_line(prefix + ".eps", format_double(cfg_.eps));
    for (std::size_t i = 0; i < m_.size(); ++i) {
        ar.add_tensor(prefix + ".m." + std::to_string(i), m_[i]);
        ar.add_tensor(prefix + ".v." + std::to_string(i), v_[i]);
    }
}

void AdamW::load(const Archive& ar, const std::string& prefix, const ParamSet& params) {
    const auto kv = parse_kv_lines(ar.meta);
    auto need = [&](const std::string& k) -> const std::string& {
        auto it = kv.find(k);
        if (it == kv.end()) throw FormatError("checkpoint missing key " + k, 0);
        return it->second;
    };
    t_ = std::stoll(need(prefix + ".step"));
    cfg_.lr = std::stod(need(prefix + ".lr"));
    cfg_.beta1 = std::stod(need(prefix + ".beta1"));
    cfg_.beta2 = std::stod(need(prefix + ".beta2"));
    cfg_.weight_decay = std::stod(need(prefix + ".weight_decay"));
    cfg_.eps = std::stod(need(prefix + ".eps"));
    m_.clear();
    v_.clear();
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
        m_.push_back(ar.entry(prefix + ".m." + std::to_string(i)).to_tensor());
        v_.push_back(ar.entry(prefix + ".v." + std::to_string(i)).to_tensor());
        if (!m_.back().same_shape(params.entries[i].second))
            throw FormatError("checkpoint moment shape mismatch at index " + std::to_string(i), 0);
    }
}

}  // namespace dhvae
