#pragma once

// Exhaustive reference implementation of precision and coverage. Shares no
// code with ddig/manifold.hpp: it materializes the full distance matrices,
// takes k-th neighbours by sorting, and reduces the membership relation with
// plain loops. Quadratic in memory; meant for n of a few hundred.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "ddig/error.hpp"

namespace ddig::oracle {

/// Same accumulation contract as ddig::squared_l2: coordinate c goes to lane
/// c % 8, lanes combined ((0+1)+(2+3))+((4+5)+(6+7)).
inline double lane_squared_distance(const float* a, const float* b, std::size_t d) {
    double lane[8] = {};
    for (std::size_t c = 0; c < d; ++c) {
        const double diff = static_cast<double>(a[c]) - static_cast<double>(b[c]);
        lane[c % 8] += diff * diff;
    }
    return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
}

struct Result {
    double precision = 0.0;
    double coverage = 0.0;
    std::size_t inside_count = 0;
    std::size_t covered_count = 0;
    std::vector<double> squared_radii;
    /// membership[j][i]: generated i inside reference j's hypersphere
    std::vector<std::vector<bool>> membership;
    std::vector<bool> generated_inside;
    std::vector<bool> reference_covered;
};

/// `reference` and `generated` are row-major with `dim` columns.
inline Result brute_force_oracle(std::span<const float> reference, std::span<const float> generated,
                                 std::size_t dim, std::size_t k, std::size_t n_generated_total) {
    if (dim == 0 || reference.size() % dim != 0 || generated.size() % dim != 0) {
        throw Error(ErrorKind::DimensionMismatch, "oracle: payload is not a multiple of the dimension");
    }
    const std::size_t n_ref = reference.size() / dim;
    const std::size_t n_gen = generated.size() / dim;
    if (k == 0) throw Error(ErrorKind::InvalidArgument, "oracle: k must be positive");
    if (n_ref <= k) throw Error(ErrorKind::TooFewPoints, "oracle: need more than k reference rows");
    if (n_generated_total == 0) throw Error(ErrorKind::ZeroDenominator, "oracle: zero precision denominator");
    if (n_generated_total < n_gen) throw Error(ErrorKind::InvalidArgument, "oracle: n_generated_total < rows");

    Result out;
    std::vector<std::vector<double>> rr(n_ref, std::vector<double>(n_ref));
    for (std::size_t a = 0; a < n_ref; ++a) {
        for (std::size_t b = 0; b < n_ref; ++b) {
            rr[a][b] = lane_squared_distance(&reference[a * dim], &reference[b * dim], dim);
        }
    }
    out.squared_radii.resize(n_ref);
    for (std::size_t a = 0; a < n_ref; ++a) {
        std::vector<double> others;
        for (std::size_t b = 0; b < n_ref; ++b) {
            if (b != a) others.push_back(rr[a][b]);
        }
        std::sort(others.begin(), others.end());
        out.squared_radii[a] = others[k - 1];
    }

    out.membership.assign(n_ref, std::vector<bool>(n_gen, false));
    for (std::size_t j = 0; j < n_ref; ++j) {
        for (std::size_t i = 0; i < n_gen; ++i) {
            const double d2 = lane_squared_distance(&generated[i * dim], &reference[j * dim], dim);
            out.membership[j][i] = d2 <= out.squared_radii[j];
        }
    }

    out.generated_inside.assign(n_gen, false);
    out.reference_covered.assign(n_ref, false);
    for (std::size_t j = 0; j < n_ref; ++j) {
        for (std::size_t i = 0; i < n_gen; ++i) {
            if (out.membership[j][i]) {
                out.generated_inside[i] = true;
                out.reference_covered[j] = true;
            }
        }
    }
    out.inside_count = static_cast<std::size_t>(std::count(out.generated_inside.begin(), out.generated_inside.end(), true));
    out.covered_count =
        static_cast<std::size_t>(std::count(out.reference_covered.begin(), out.reference_covered.end(), true));
    out.precision = static_cast<double>(out.inside_count) / static_cast<double>(n_generated_total);
    out.coverage = static_cast<double>(out.covered_count) / static_cast<double>(n_ref);
    return out;
}

} // namespace ddig::oracle
