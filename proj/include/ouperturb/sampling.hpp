#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ouperturb/rng.hpp"
#include "ouperturb/types.hpp"

namespace oup {

/// Sup norms over H are estimated as a max over a low-discrepancy sample of a
/// radius-R ball. The sampler is nested: the first n points are the same for
/// every count >= n, so sup estimates are nondecreasing in the count.
struct SupSampler {
    double radius = 8.0;
    int count = 4096;
    std::uint64_t seed = 0;

    std::string describe() const {
        return "ball(r=" + std::to_string(radius) + ",n=" + std::to_string(count) +
               ",seed=" + std::to_string(seed) + ")";
    }
};

inline double halton(std::uint64_t index, std::uint64_t base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= static_cast<double>(base);
        r += f * static_cast<double>(index % base);
        index /= base;
    }
    return r;
}

namespace detail {
inline const std::uint64_t kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                                        31, 37, 41, 43, 47, 53, 59, 61, 67, 71};
}

/// Points of the radius-R ball in dimension `dim`: Halton sequence with a
/// seed-derived Cranley-Patterson shift, mapped through the inverse normal
/// CDF to a direction and a uniform-in-ball radius.
inline std::vector<Vec> sample_ball(const SupSampler& s, int dim) {
    require(dim >= 1, "sample_ball: dim must be >= 1");
    require(s.count >= 1, "sample_ball: count must be >= 1");
    require(dim + 1 <= static_cast<int>(std::size(detail::kPrimes)),
            "sample_ball: dimension too large for Halton bases");
    std::uint64_t st = s.seed;
    std::vector<double> shift(dim + 1);
    for (int k = 0; k <= dim; ++k)
        shift[k] = static_cast<double>(splitmix64(st) >> 11) * 0x1.0p-53;

    std::vector<Vec> pts;
    pts.reserve(s.count);
    for (int i = 0; i < s.count; ++i) {
        Vec g(dim);
        for (int k = 0; k < dim; ++k) {
            double u = halton(i + 1, detail::kPrimes[k]) + shift[k];
            u -= std::floor(u);
            u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
            g(k) = inverse_normal_cdf(u);
        }
        double ur = halton(i + 1, detail::kPrimes[dim]) + shift[dim];
        ur -= std::floor(ur);
        const double norm = g.norm();
        const double radius = s.radius * std::pow(ur, 1.0 / dim);
        pts.push_back(norm > 0 ? Vec(radius / norm * g) : Vec(Vec::Zero(dim)));
    }
    return pts;
}

}  // namespace oup
