// Shared random fixtures for tests.
#pragma once

#include <vector>

#include "lodet/losses.hpp"
#include "lodet/rng.hpp"
#include "lodet/volume.hpp"

namespace fixtures {

// Predictions are a random permutation of an evenly spaced grid in
// [0.05, 0.95]: every value is distinct and the gap between any two values is
// far larger than a finite-difference step, so per-volume maxima are unique
// and stay unique under perturbation.
inline std::vector<double> permuted_linspace(lodet::Rng& rng, std::int64_t n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        v[static_cast<std::size_t>(i)] =
            n == 1 ? 0.5 : 0.05 + 0.9 * double(i) / double(n - 1);
    }
    for (std::int64_t i = n; i > 1; --i) {
        std::swap(v[static_cast<std::size_t>(i - 1)],
                  v[static_cast<std::size_t>(rng.uniform_int(0, i - 1))]);
    }
    return v;
}

// Random batch of edge^3 grids. Roughly half the volumes carry positive labels;
// at least one all-negative volume is common, exercising both loss terms.
inline lodet::SubvolumeBatch random_batch(lodet::Rng& rng, int batch_size, int edge) {
    lodet::SubvolumeBatch batch;
    batch.shape = {edge, edge, edge};
    const std::int64_t n = lodet::voxel_count(batch.shape);
    for (int b = 0; b < batch_size; ++b) {
        batch.preds.push_back(permuted_linspace(rng, n));
        std::vector<std::uint8_t> label(static_cast<std::size_t>(n), 0);
        if (rng.bernoulli(0.6)) {
            const auto k = rng.uniform_int(1, std::max<std::int64_t>(1, n / 4));
            for (std::int64_t i = 0; i < k; ++i) {
                label[static_cast<std::size_t>(rng.uniform_int(0, n - 1))] = 1;
            }
        }
        batch.labels.push_back(std::move(label));
    }
    return batch;
}

inline lodet::MaskVolume random_mask(lodet::Rng& rng, const lodet::Dims& dims,
                                     double fill = 0.2) {
    lodet::MaskVolume m = lodet::MaskVolume::zeros(dims);
    for (auto& v : m.data) v = rng.bernoulli(fill) ? 1 : 0;
    return m;
}

}  // namespace fixtures
