#pragma once

#include <vector>

#include "slsgrid/common.hpp"
#include "slsgrid/system_response.hpp"

namespace slsgrid {

/// Online state of the buffer realization of a synthesized response: the last
/// T reconstructed disturbances and the predicted nominal state. The response
/// matrices themselves stay outside (shared, immutable); one runtime instance
/// is strictly sequential.
class SlsRuntimeState {
public:
    SlsRuntimeState() = default;

    SlsRuntimeState(const SystemResponse& response, const Vec& x0) {
        check_dim(x0.size() == response.state_dim(), "SlsRuntimeState: x0 size mismatch");
        horizon_ = response.horizon;
        buffer_.assign(static_cast<size_t>(horizon_), Vec::Zero(x0.size()));
        head_ = 0;
        x_hat_ = x0;
    }

    const Vec& nominal_state() const { return x_hat_; }

    /// Coordinate change of the tracked nominal (used when the reference
    /// trajectory is swapped underneath the controller).
    void shift_nominal(const Vec& delta) { x_hat_ += delta; }

    /// One step of the realization: reconstruct the latest disturbance from
    /// the measurement, emit the input, advance the nominal-state prediction.
    Vec step(const SystemResponse& response, const Vec& x_measured) {
        check_dim(horizon_ > 0, "SlsRuntimeState: not initialized");
        check_dim(x_measured.size() == x_hat_.size(), "SlsRuntimeState: state size mismatch");
        push(x_measured - x_hat_);
        Vec u = Vec::Zero(response.input_dim());
        for (int k = 0; k < horizon_; ++k)
            u.noalias() += response.phi_u[static_cast<size_t>(k)] * at(k);
        x_hat_.setZero();
        for (int k = 1; k < horizon_; ++k)
            x_hat_.noalias() += response.phi_x[static_cast<size_t>(k)] * at(k - 1);
        return u;
    }

    /// k-th most recent reconstructed disturbance (0 = newest).
    const Vec& at(int k) const {
        return buffer_[static_cast<size_t>((head_ + k) % horizon_)];
    }

    int horizon() const { return horizon_; }

private:
    void push(Vec w_new) {
        head_ = (head_ + horizon_ - 1) % horizon_;
        buffer_[static_cast<size_t>(head_)] = std::move(w_new);
    }

    int horizon_ = 0;
    std::vector<Vec> buffer_;
    int head_ = 0;
    Vec x_hat_;
};

inline SlsRuntimeState runtime_init(const SystemResponse& response, const Vec& x0) {
    return SlsRuntimeState(response, x0);
}

inline Vec runtime_step(SlsRuntimeState& state, const SystemResponse& response,
                        const Vec& x_measured) {
    return state.step(response, x_measured);
}

}  // namespace slsgrid
