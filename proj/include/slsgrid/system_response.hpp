#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "slsgrid/common.hpp"
#include "slsgrid/plant.hpp"

namespace slsgrid {

/// Finite-impulse-response closed-loop maps from the disturbance sequence to
/// state and input, stored as spectral blocks: phi_x[k-1] is the map from the
/// disturbance k steps ago to the current state (phi_x[0] = identity), and
/// phi_u[k-1] the matching map to the current input.
struct SystemResponse {
    int horizon = 0;              // T
    std::vector<Mat> phi_x;       // T blocks, n x n
    std::vector<Mat> phi_u;       // T blocks, p x n

    int state_dim() const { return phi_x.empty() ? 0 : static_cast<int>(phi_x[0].rows()); }
    int input_dim() const { return phi_u.empty() ? 0 : static_cast<int>(phi_u[0].rows()); }

    static SystemResponse zero(int horizon, int n, int p) {
        SystemResponse r;
        r.horizon = horizon;
        r.phi_x.assign(static_cast<size_t>(horizon), Mat::Zero(n, n));
        r.phi_u.assign(static_cast<size_t>(horizon), Mat::Zero(p, n));
        return r;
    }

    /// Text dump, one spectral block per line (row-major), exact round-trip.
    void save(std::ostream& os) const {
        os << "slsgrid-response 1\n";
        os << "horizon " << horizon << "\n";
        os << "state_dim " << state_dim() << "\n";
        os << "input_dim " << input_dim() << "\n";
        auto dump = [&os](const std::string& tag, int k, const Mat& m) {
            os << tag << " " << k;
            for (int r = 0; r < m.rows(); ++r)
                for (int c = 0; c < m.cols(); ++c) os << " " << format_double(m(r, c));
            os << "\n";
        };
        for (int k = 0; k < horizon; ++k) dump("phix", k + 1, phi_x[static_cast<size_t>(k)]);
        for (int k = 0; k < horizon; ++k) dump("phiu", k + 1, phi_u[static_cast<size_t>(k)]);
    }

    static SystemResponse load(std::istream& is) {
        std::string magic;
        int version = 0;
        is >> magic >> version;
        if (magic != "slsgrid-response" || version != 1)
            throw NumericalError("SystemResponse::load: unrecognized header");
        std::string key;
        int T = 0, n = 0, p = 0;
        is >> key >> T;
        if (key != "horizon") throw NumericalError("SystemResponse::load: expected 'horizon'");
        is >> key >> n;
        if (key != "state_dim") throw NumericalError("SystemResponse::load: expected 'state_dim'");
        is >> key >> p;
        if (key != "input_dim") throw NumericalError("SystemResponse::load: expected 'input_dim'");
        SystemResponse out = SystemResponse::zero(T, n, p);
        auto read_block = [&is](const std::string& tag, int expect_k, Mat& m) {
            std::string t;
            int k = 0;
            is >> t >> k;
            if (t != tag || k != expect_k)
                throw NumericalError("SystemResponse::load: unexpected block " + t);
            for (int r = 0; r < m.rows(); ++r)
                for (int c = 0; c < m.cols(); ++c) is >> m(r, c);
        };
        for (int k = 0; k < T; ++k) read_block("phix", k + 1, out.phi_x[static_cast<size_t>(k)]);
        for (int k = 0; k < T; ++k) read_block("phiu", k + 1, out.phi_u[static_cast<size_t>(k)]);
        if (!is) throw NumericalError("SystemResponse::load: truncated input");
        return out;
    }
};

/// Max-entry violation of the response achievability constraints for the
/// dynamics (A, B): the identity leading block, the block recursion
/// phi_x[k+1] = A phi_x[k] + B phi_u[k], and (when `include_terminal`) the FIR
/// closure A phi_x[T-1] + B phi_u[T-1] = 0.
inline double achievability_residual(const Mat& A, const Mat& B, const SystemResponse& response,
                                     bool include_terminal = true) {
    const int n = static_cast<int>(A.rows());
    check_dim(A.cols() == n, "achievability_residual: A must be square");
    check_dim(B.rows() == n, "achievability_residual: B rows mismatch");
    check_dim(response.state_dim() == n, "achievability_residual: response/state mismatch");
    check_dim(response.input_dim() == static_cast<int>(B.cols()),
              "achievability_residual: response/input mismatch");
    check_dim(response.horizon >= 1, "achievability_residual: empty response");

    double residual =
        (response.phi_x[0] - Mat::Identity(n, n)).cwiseAbs().maxCoeff();
    for (int k = 0; k + 1 < response.horizon; ++k) {
        Mat gap = response.phi_x[static_cast<size_t>(k + 1)] -
                  A * response.phi_x[static_cast<size_t>(k)] -
                  B * response.phi_u[static_cast<size_t>(k)];
        residual = std::max(residual, gap.cwiseAbs().maxCoeff());
    }
    if (include_terminal) {
        Mat tail = A * response.phi_x[static_cast<size_t>(response.horizon - 1)] +
                   B * response.phi_u[static_cast<size_t>(response.horizon - 1)];
        residual = std::max(residual, tail.cwiseAbs().maxCoeff());
    }
    return residual;
}

inline double validate_achievability(const PlantModel& plant, const SystemResponse& response,
                                     bool include_terminal = true) {
    return achievability_residual(plant.state_matrix(), plant.input_matrix(), response,
                                  include_terminal);
}

/// Support containment of every spectral block inside the mask (bitwise:
/// entries outside the mask must be exactly zero).
inline bool response_within_mask(const SystemResponse& response, const LocalityMask& mask) {
    for (const Mat& block : response.phi_x)
        for (int r = 0; r < block.rows(); ++r)
            for (int c = 0; c < block.cols(); ++c)
                if (!mask.state_support(r, c) && block(r, c) != 0.0) return false;
    for (const Mat& block : response.phi_u)
        for (int r = 0; r < block.rows(); ++r)
            for (int c = 0; c < block.cols(); ++c)
                if (!mask.input_support(r, c) && block(r, c) != 0.0) return false;
    return true;
}

}  // namespace slsgrid
