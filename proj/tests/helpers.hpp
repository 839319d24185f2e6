#pragma once

// Shared test utilities: deterministic random data and small brute-force
// oracles kept independent of the library's solver paths.

#include <vector>

#include "slsgrid/common.hpp"
#include "slsgrid/plant.hpp"
#include "slsgrid/rng.hpp"

namespace slsgrid::testing {

inline Mat random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.uniform(-1, 1);
    return m;
}

inline Vec random_vector(Rng& rng, int size, double scale = 1.0) {
    Vec v(size);
    for (int i = 0; i < size; ++i) v[i] = scale * rng.uniform(-1, 1);
    return v;
}

inline LocalityMask all_true_mask(int n, int p) {
    LocalityMask mask;
    mask.d = kFullLocality;
    mask.state_support = BoolMat::Constant(n, n, true);
    mask.input_support = BoolMat::Constant(p, n, true);
    return mask;
}

/// Brute-force box-QP oracle (no equality rows): enumerate active sets.
inline Vec enumerate_box_qp(const Mat& H, const Vec& g, const Vec& lower, const Vec& upper) {
    const int n = static_cast<int>(H.rows());
    int patterns = 1;
    for (int i = 0; i < n; ++i) patterns *= 3;
    Vec best;
    double best_obj = kInf;
    for (int code = 0; code < patterns; ++code) {
        int rem = code;
        std::vector<int> kind(static_cast<size_t>(n));
        std::vector<int> free_idx;
        for (int i = 0; i < n; ++i) {
            kind[static_cast<size_t>(i)] = rem % 3;
            rem /= 3;
            if (kind[static_cast<size_t>(i)] == 1) free_idx.push_back(i);
        }
        Vec z(n);
        for (int i = 0; i < n; ++i)
            z[i] = kind[static_cast<size_t>(i)] == 0   ? lower[i]
                   : kind[static_cast<size_t>(i)] == 2 ? upper[i]
                                                       : 0.0;
        const int nf = static_cast<int>(free_idx.size());
        if (nf > 0) {
            Mat Hff(nf, nf);
            Vec rhs(nf);
            for (int a = 0; a < nf; ++a) {
                rhs[a] = -g[free_idx[static_cast<size_t>(a)]];
                for (int b = 0; b < nf; ++b)
                    Hff(a, b) =
                        H(free_idx[static_cast<size_t>(a)], free_idx[static_cast<size_t>(b)]);
                for (int i = 0; i < n; ++i)
                    if (kind[static_cast<size_t>(i)] != 1)
                        rhs[a] -= H(free_idx[static_cast<size_t>(a)], i) * z[i];
            }
            Vec zf = Hff.ldlt().solve(rhs);
            for (int a = 0; a < nf; ++a) z[free_idx[static_cast<size_t>(a)]] = zf[a];
        }
        bool ok = true;
        Vec grad = H * z + g;
        for (int i = 0; i < n && ok; ++i) {
            switch (kind[static_cast<size_t>(i)]) {
                case 0: ok = grad[i] >= -1e-9; break;
                case 2: ok = grad[i] <= 1e-9; break;
                default: ok = z[i] >= lower[i] - 1e-9 && z[i] <= upper[i] + 1e-9;
            }
        }
        if (!ok) continue;
        const double obj = 0.5 * z.dot(H * z) + g.dot(z);
        if (obj < best_obj) {
            best_obj = obj;
            best = z;
        }
    }
    if (best.size() != n) throw NumericalError("enumerate_box_qp: no KKT-consistent pattern");
    return best;
}

}  // namespace slsgrid::testing
