#pragma once

#include "itr/dataset.hpp"
#include "itr/rng.hpp"
#include "itr/sim_lab.hpp"

#include <numeric>
#include <random>
#include <vector>

namespace fixtures {

using itr::Index;
using itr::MatrixXd;
using itr::VectorXd;

inline itr::Dataset sim_data(int sim, Index n, std::uint64_t seed) {
    return itr::generate(itr::preset(sim, n), seed).data;
}

inline MatrixXd normal_matrix(Index rows, Index cols, std::uint64_t seed) {
    auto rng = itr::make_stream(seed, 0);
    std::normal_distribution<double> z(0.0, 1.0);
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = z(rng);
    return m;
}

/// Rows of `data` in a fixed scrambled order.
inline std::vector<Index> scrambled(Index n, std::uint64_t seed) {
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    auto rng = itr::make_stream(seed, 1);
    for (std::size_t k = idx.size(); k > 1; --k) {
        std::swap(idx[k - 1], idx[itr::uniform_index(rng, k)]);
    }
    return idx;
}

inline double sup_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace fixtures
