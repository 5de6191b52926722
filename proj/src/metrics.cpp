#include "dhvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "dhvae/errors.hpp"
#include "dhvae/serialize.hpp"

namespace dhvae {

double psnr(const Tensor& a, const Tensor& b, double max_val) {
    if (!a.same_shape(b)) throw ShapeError("psnr: shapes differ");
    if (!(max_val > 0.0)) throw DomainError("psnr: max_val must be positive");
    double mse = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(max_val / std::sqrt(mse));
}

void EmbeddingStats::validate() const {
    if (mean.rank() != 1 || covariance.rank() != 2) throw ShapeError("embedding stats: bad ranks");
    const std::int64_t d = mean.numel();
    if (covariance.shape() != Shape{d, d}) throw ShapeError("embedding stats: covariance shape mismatch");
    for (std::int64_t i = 0; i < d; ++i)
        for (std::int64_t j = 0; j < d; ++j)
            if (std::abs(covariance.at(i, j) - covariance.at(j, i)) > 1e-10)
                throw NumericError("embedding covariance asymmetric beyond 1e-10");
}

EmbeddingStats gaussian_stats(const Tensor& embeddings) {
    if (embeddings.rank() != 2) throw ShapeError("gaussian_stats expects (N, d)");
    const std::int64_t n = embeddings.dim(0), d = embeddings.dim(1);
    if (n < 2) throw InsufficientSampleError("gaussian_stats needs at least 2 samples");
    EmbeddingStats st;
    st.mean = Tensor({d});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j) st.mean[j] += embeddings.at(i, j);
    for (std::int64_t j = 0; j < d; ++j) st.mean[j] /= static_cast<double>(n);
    st.covariance = Tensor({d, d});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t a = 0; a < d; ++a) {
            const double va = embeddings.at(i, a) - st.mean[a];
            for (std::int64_t b = a; b < d; ++b)
                st.covariance.at(a, b) += va * (embeddings.at(i, b) - st.mean[b]);
        }
    for (std::int64_t a = 0; a < d; ++a)
        for (std::int64_t b = a; b < d; ++b) {
            const double v = st.covariance.at(a, b) / static_cast<double>(n - 1);
            st.covariance.at(a, b) = v;
            st.covariance.at(b, a) = v;
        }
    return st;
}

// cyclic Jacobi on a symmetric matrix
std::vector<double> symmetric_eigenvalues(const Tensor& m) {
    if (m.rank() != 2 || m.dim(0) != m.dim(1)) throw ShapeError("symmetric_eigenvalues expects square");
    const std::int64_t n = m.dim(0);
    Tensor a = m;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0;
        for (std::int64_t p = 0; p < n; ++p)
            for (std::int64_t q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        if (off < 1e-24) break;
        for (std::int64_t p = 0; p < n; ++p)
            for (std::int64_t q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::int64_t k = 0; k < n; ++k) {
                    const double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (std::int64_t k = 0; k < n; ++k) {
                    const double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a.at(i, i);
    return ev;
}

double fid(const EmbeddingStats& r, const EmbeddingStats& f) {
    r.validate();
    f.validate();
    const std::int64_t d = r.mean.numel();
    if (f.mean.numel() != d) throw ShapeError("fid: embedding dimensions differ");
    double mean_term = 0;
    for (std::int64_t i = 0; i < d; ++i) {
        const double dv = r.mean[i] - f.mean[i];
        mean_term += dv * dv;
    }
    const Tensor prod = matmul(r.covariance, f.covariance);
    // symmetrize before the eigendecomposition; clamp negative eigenvalues
    Tensor sym({d, d});
    for (std::int64_t i = 0; i < d; ++i)
        for (std::int64_t j = 0; j < d; ++j) sym.at(i, j) = 0.5 * (prod.at(i, j) + prod.at(j, i));
    double tr_sqrt = 0;
    for (double ev : symmetric_eigenvalues(sym)) tr_sqrt += std::sqrt(std::max(0.0, ev));
    double tr = 0;
    for (std::int64_t i = 0; i < d; ++i) tr += r.covariance.at(i, i) + f.covariance.at(i, i);
    return std::max(0.0, mean_term + tr - 2.0 * tr_sqrt);
}

double lpips(const Tensor& a, const Tensor& b, const FeatureExtractor& fx) {
    if (!a.same_shape(b)) throw ShapeError("lpips: shapes differ");
    const auto ta = extract_features(fx, a);
    const auto tb = extract_features(fx, b);
    double total = 0;
    for (std::size_t l = 0; l < ta.size(); ++l) {
        const Tensor& fa = ta[l];
        const Tensor& fb = tb[l];
        const std::int64_t C = fa.dim(0), P = fa.dim(1) * fa.dim(2);
        double layer = 0;
        for (std::int64_t p = 0; p < P; ++p) {
            double na = 0, nb = 0;
            for (std::int64_t c = 0; c < C; ++c) {
                na += fa[c * P + p] * fa[c * P + p];
                nb += fb[c * P + p] * fb[c * P + p];
            }
            na = std::sqrt(na) + 1e-10;
            nb = std::sqrt(nb) + 1e-10;
            for (std::int64_t c = 0; c < C; ++c) {
                const double d = fa[c * P + p] / na - fb[c * P + p] / nb;
                layer += d * d;
            }
        }
        total += layer / static_cast<double>(P);
    }
    return total;
}

PixelClassDistribution pixel_class_distribution(const std::vector<Tensor>& masks) {
    if (masks.empty()) throw InsufficientSampleError("pixel_class_distribution: empty mask set");
    const Shape s = masks.front().shape();
    PixelClassDistribution out;
    out.prob = Tensor(s);
    out.n_masks = static_cast<std::int64_t>(masks.size());
    for (const auto& m : masks) {
        if (m.shape() != s) throw ShapeError("pixel_class_distribution: mask shapes differ");
        for (std::int64_t i = 0; i < m.numel(); ++i) out.prob[i] += m[i] != 0.0 ? 1.0 : 0.0;
    }
    for (std::int64_t i = 0; i < out.prob.numel(); ++i) out.prob[i] /= static_cast<double>(out.n_masks);
    return out;
}

namespace {
inline double bern_kl(double p, double q) {
    return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}
}  // namespace

double divergence(const PixelClassDistribution& p, const PixelClassDistribution& q, DivergenceMode mode,
                  double eps) {
    if (!p.prob.same_shape(q.prob)) throw ShapeError("divergence: distributions have different shapes");
    if (!(eps > 0.0)) throw DomainError("divergence: eps must be positive");
    const std::int64_t n = p.prob.numel();
    double acc = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double ps = (p.prob[i] + eps) / (1.0 + 2.0 * eps);
        const double qs = (q.prob[i] + eps) / (1.0 + 2.0 * eps);
        if (mode == DivergenceMode::kld) {
            acc += bern_kl(ps, qs);
        } else {
            const double m = 0.5 * (ps + qs);
            acc += 0.5 * bern_kl(ps, m) + 0.5 * bern_kl(qs, m);
        }
    }
    return acc / static_cast<double>(n);
}

double dsc(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt)) throw ShapeError("dsc: shapes differ");
    std::int64_t inter = 0, np = 0, ng = 0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const bool a = pred[i] != 0.0;
        const bool b = gt[i] != 0.0;
        inter += a && b;
        np += a;
        ng += b;
    }
    if (np + ng == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

void MetricsReport::add(const std::string& metric, double value) { values.emplace_back(metric, value); }

double MetricsReport::get(const std::string& metric) const {
    for (const auto& [k, v] : values)
        if (k == metric) return v;
    throw ConfigError("metrics report has no entry " + metric);
}

void MetricsReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << "metric,value,n_real,n_synth,seed,config_hash\n";
    for (const auto& [k, v] : values)
        os << k << "," << format_double(v) << "," << n_real << "," << n_synth << "," << seed << ","
           << config_hash << "\n";
    for (const auto& note : notes) os << "# " << note << "\n";
    if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace dhvae
