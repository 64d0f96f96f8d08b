// Weighted vector standardization and k-means, the clustering stage that
// turns hidden-state vectors into automaton states.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "fstforge/errors.hpp"

namespace fstforge {

// Per-dimension affine map z = (x - mean) * scale fitted on weighted data.
// Zero-variance dimensions get scale 0, so they standardize to exactly 0.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
        return (x - mean).cwiseProduct(scale);
    }

    static Standardizer fit(const std::vector<Eigen::VectorXd>& xs,
                            const std::vector<double>& weights) {
        if (xs.empty()) throw ConfigError("cannot standardize an empty set");
        if (xs.size() != weights.size())
            throw ConfigError("standardize: weight count mismatch");
        const Eigen::Index dim = xs[0].size();
        double total = 0.0;
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            mean += weights[i] * xs[i];
            total += weights[i];
        }
        if (total <= 0.0) throw ConfigError("standardize: total weight is zero");
        mean /= total;
        Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
        for (std::size_t i = 0; i < xs.size(); ++i)
            var += weights[i] * (xs[i] - mean).array().square().matrix();
        var /= total;
        Standardizer st;
        st.mean = std::move(mean);
        st.scale = Eigen::VectorXd::Zero(dim);
        for (Eigen::Index j = 0; j < dim; ++j)
            if (var[j] > 0.0) st.scale[j] = 1.0 / std::sqrt(var[j]);
        return st;
    }
};

struct KMeansResult {
    std::vector<std::uint32_t> assignment;
    std::vector<Eigen::VectorXd> centroids;
    int iterations = 0;
};

namespace detail {

// Index drawn proportionally to mass[i]; caller guarantees a positive total.
inline std::size_t sample_by_mass(const std::vector<double>& mass, double total,
                                  std::mt19937_64& rng) {
    double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i) {
        acc += mass[i];
        if (r < acc) return i;
    }
    for (std::size_t i = mass.size(); i-- > 0;)
        if (mass[i] > 0.0) return i;
    return 0;
}

}  // namespace detail

// Lloyd's algorithm with weighted points and k-means++ seeding. Distance
// ties go to the lowest centroid index; an emptied cluster keeps its old
// centroid. Stops at an assignment fixpoint or after 100 rounds.
inline KMeansResult weighted_kmeans(const std::vector<Eigen::VectorXd>& xs,
                                    const std::vector<double>& weights,
                                    std::uint32_t k, std::mt19937_64& rng) {
    if (k < 1) throw InvalidKError("k must be at least 1");
    if (xs.empty() || xs.size() != weights.size())
        throw ConfigError("kmeans: empty input or weight count mismatch");
    const std::size_t n = xs.size();

    std::vector<Eigen::VectorXd> centroids;
    centroids.reserve(k);
    {
        double total = 0.0;
        for (double w : weights) total += w;
        if (total <= 0.0) throw ConfigError("kmeans: total weight is zero");
        centroids.push_back(xs[detail::sample_by_mass(weights, total, rng)]);
        std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
        std::vector<double> mass(n);
        while (centroids.size() < k) {
            double mass_total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double d = (xs[i] - centroids.back()).squaredNorm();
                if (d < dist2[i]) dist2[i] = d;
                mass[i] = weights[i] * dist2[i];
                mass_total += mass[i];
            }
            if (!(mass_total > 0.0))
                throw InvalidKError("k = " + std::to_string(k) +
                                    " exceeds the number of distinct vectors");
            centroids.push_back(xs[detail::sample_by_mass(mass, mass_total, rng)]);
        }
    }

    KMeansResult res;
    res.assignment.assign(n, 0);
    for (res.iterations = 1; res.iterations <= 100; ++res.iterations) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t best = 0;
            double best_d = (xs[i] - centroids[0]).squaredNorm();
            for (std::uint32_t c = 1; c < k; ++c) {
                double d = (xs[i] - centroids[c]).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (res.assignment[i] != best) {
                res.assignment[i] = best;
                changed = true;
            }
        }
        if (!changed && res.iterations > 1) break;
        std::vector<Eigen::VectorXd> sums(k, Eigen::VectorXd::Zero(xs[0].size()));
        std::vector<double> totals(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            sums[res.assignment[i]] += weights[i] * xs[i];
            totals[res.assignment[i]] += weights[i];
        }
        for (std::uint32_t c = 0; c < k; ++c)
            if (totals[c] > 0.0) centroids[c] = sums[c] / totals[c];
    }
    res.centroids = std::move(centroids);
    return res;
}

}  // namespace fstforge
