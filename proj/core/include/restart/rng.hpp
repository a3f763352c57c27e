#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Core>

namespace restart {

// Stage tags salt the per-trajectory streams so that pipeline stages draw
// independent noise and so that re-ordering stages cannot alias streams.
enum Stage : std::uint64_t {
    kStagePrior = 0xA1,     // prior draws at the start time
    kStageTrueInit = 0xA2,  // draws from the true noisy distribution
    kStageDataRef = 0xA3,   // reference draws from the dataset
    kStageWindow = 0xA4,    // sampler noise inside the comparison window
    kStageSampler = 0xA5,   // standalone sampler noise
    kStageCoupling = 0xA6,  // coupled-chain noise
    kStageTrain = 0xA7,     // training batches and noise
    kStageInit = 0xA8,      // parameter initialization
    kStageProbe = 0xA9,     // test probes
    kStageDataset = 0xAA,   // synthetic dataset construction
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
} // namespace detail

// Collapses (seed, a, b) into one well-mixed 64-bit stream id.  Streams for
// distinct tuples are independent for practical purposes, so results do not
// depend on batch size or evaluation order.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = seed;
    std::uint64_t h = detail::splitmix64(s);
    s ^= a * 0x9E3779B97F4A7C15ULL;
    h ^= detail::splitmix64(s);
    s ^= b * 0xC2B2AE3D27D4EB4FULL;
    h ^= detail::splitmix64(s);
    return h;
}

// Deterministic random stream.  Uniforms come straight from mt19937_64 bits
// and normals from an explicit Box-Muller transform, so the same seed gives
// the same draws on every platform.
class RngStream {
public:
    explicit RngStream(std::uint64_t stream_id) : engine_(stream_id) {}
    RngStream(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
        : engine_(derive_stream(seed, a, b)) {}

    // Uniform on [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Eigen::VectorXd normal_vec(int d) {
        Eigen::VectorXd v(d);
        for (int i = 0; i < d; ++i) v[i] = normal();
        return v;
    }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace restart
