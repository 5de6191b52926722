#include "dhvae/rng.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "dhvae/errors.hpp"

namespace dhvae {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t s = base;
    (void)splitmix64(s);
    s ^= 0xA02C1F75D4E2B6C9ull * (a + 1);
    (void)splitmix64(s);
    s ^= 0xD6E8FEB86659FD93ull * (b + 1);
    (void)splitmix64(s);
    s ^= 0x8CB92BA72F3D8DD7ull * (c + 1);
    return splitmix64(s);
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
}

static inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // Box-Muller; u1 kept away from 0
    double u1 = 0.0;
    do { u1 = uniform(); } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

std::int64_t Rng::uniform_int(std::int64_t n) {
    if (n <= 0) throw RangeError("uniform_int: n must be positive");
    // rejection sampling to avoid modulo bias
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x;
    do { x = next_u64(); } while (x >= limit);
    return static_cast<std::int64_t>(x % un);
}

Tensor Rng::normal_tensor(const Shape& shape, double mean, double stddev) {
    Tensor t(shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = mean + stddev * normal();
    return t;
}

Tensor Rng::uniform_tensor(const Shape& shape, double lo, double hi) {
    Tensor t(shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
    return t;
}

std::string Rng::state_str() const {
    std::ostringstream os;
    os << s_[0] << " " << s_[1] << " " << s_[2] << " " << s_[3] << " " << (have_spare_ ? 1 : 0);
    if (have_spare_) {
        os << " ";
        // hex image of the double, bit-exact
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(spare_));
        std::memcpy(&bits, &spare_, sizeof(bits));
        os << bits;
    }
    return os.str();
}

Rng Rng::from_state_str(const std::string& s) {
    std::istringstream is(s);
    Rng r(0);
    int have = 0;
    if (!(is >> r.s_[0] >> r.s_[1] >> r.s_[2] >> r.s_[3] >> have))
        throw FormatError("bad rng state string", 0);
    r.have_spare_ = have != 0;
    if (r.have_spare_) {
        std::uint64_t bits = 0;
        if (!(is >> bits)) throw FormatError("bad rng state string (missing spare)", 0);
        std::memcpy(&r.spare_, &bits, sizeof(bits));
    }
    return r;
}

}  // namespace dhvae
