#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "codelab/types.hpp"

namespace codelab {

/// Isotropic Gaussian mixture sum_i w_i N(mu_i, sigma^2 I_2).
struct GmmSpec {
    std::vector<double> weights;
    std::vector<Point2> means;
    double sigma = 1.0;

    /// Throws InvalidArgument unless weights are non-negative and sum to 1
    /// (within 1e-12), there is at least one component and sigma > 0.
    void validate() const;

    Point2 mean() const;
    /// Mixture covariance entries (xx, xy, yy).
    std::array<double, 3> covariance() const;
};

/// Equal-weight three-component prior with sigma = 2 and means
/// (5,3), (3,7), (7,7).
GmmSpec default_prior();

/// n i.i.d. draws; deterministic for a fixed seed.
std::vector<Point2> sample_gmm(const GmmSpec& spec, std::size_t n, std::uint64_t seed);

}  // namespace codelab
