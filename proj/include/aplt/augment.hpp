#pragma once

#include <random>
#include <span>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"

namespace aplt::augment {

// Feature-space analogs of weak/strong augmentation: Gaussian jitter, and
// for the strong view, jitter followed by random coordinate dropout.
struct AugmentConfig {
    double weak_sigma = 0.05;
    double strong_sigma = 0.20;
    double strong_mask_prob = 0.10;

    void validate() const {
        if (!(weak_sigma >= 0.0) || !(strong_sigma >= 0.0))
            throw Error(ErrorKind::invalid_parameter, "augmentation sigmas must be >= 0");
        if (!(strong_mask_prob >= 0.0 && strong_mask_prob <= 1.0))
            throw Error(ErrorKind::invalid_parameter, "strong_mask_prob must lie in [0,1]");
        if (weak_sigma > strong_sigma)
            throw Error(ErrorKind::invalid_parameter, "weak_sigma must not exceed strong_sigma");
    }
};

inline std::vector<double> weak(std::span<const double> x, const AugmentConfig& cfg,
                                std::mt19937_64& rng) {
    std::vector<double> out(x.begin(), x.end());
    if (cfg.weak_sigma > 0.0) {
        std::normal_distribution<double> g(0.0, cfg.weak_sigma);
        for (double& v : out) v += g(rng);
    }
    return out;
}

inline std::vector<double> strong(std::span<const double> x, const AugmentConfig& cfg,
                                  std::mt19937_64& rng) {
    std::vector<double> out(x.begin(), x.end());
    if (cfg.strong_sigma > 0.0) {
        std::normal_distribution<double> g(0.0, cfg.strong_sigma);
        for (double& v : out) v += g(rng);
    }
    if (cfg.strong_mask_prob > 0.0) {
        std::bernoulli_distribution drop(cfg.strong_mask_prob);
        for (double& v : out)
            if (drop(rng)) v = 0.0;
    }
    return out;
}

inline Matrix weak_batch(const Matrix& x, const AugmentConfig& cfg, std::mt19937_64& rng) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto v = weak(x.row(r), cfg, rng);
        std::copy(v.begin(), v.end(), out.row(r).begin());
    }
    return out;
}

inline Matrix strong_batch(const Matrix& x, const AugmentConfig& cfg, std::mt19937_64& rng) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto v = strong(x.row(r), cfg, rng);
        std::copy(v.begin(), v.end(), out.row(r).begin());
    }
    return out;
}

}  // namespace aplt::augment
