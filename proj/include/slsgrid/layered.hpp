#pragma once

#include <memory>
#include <string>
#include <optional>
#include <utility>
#include <vector>

#include "slsgrid/common.hpp"
#include "slsgrid/lqr.hpp"
#include "slsgrid/mpc.hpp"
#include "slsgrid/opf.hpp"
#include "slsgrid/plant.hpp"
#include "slsgrid/sls_runtime.hpp"
#include "slsgrid/synthesis.hpp"
#include "slsgrid/system_response.hpp"

namespace slsgrid {

/// Two-layer controller: a localized MPC top layer replans once per period in
/// response to setpoint changes, an offline-synthesized localized response in
/// the bottom layer tracks the plan and rejects disturbances between replans.
/// The final input is the saturated sum of the plan feedforward and the
/// bottom-layer feedback.
class LayeredController {
public:
    struct Options {
        int t_mpc = 20;          // replanning period
        int horizon = 20;        // top-layer plan horizon (>= t_mpc)
        int locality_d = 2;      // shared by both layers
        double headroom = 0.05;  // input-bound fraction reserved for feedback
        bool use_partial_plans = true;  // degrade to best-iterate plans vs reference hold
        bool bottom_enabled = true;
        bool audit = false;      // runtime information-flow assertions
        int threads = 1;
    };

    LayeredController(const PlantModel& plant, const Mat& q_weight, const Mat& r_weight,
                      const AdmmConfig& admm, Options options)
        : plant_(plant), options_(options) {
        check_dim(options_.t_mpc >= 1, "LayeredController: t_mpc must be >= 1");
        check_dim(options_.horizon >= options_.t_mpc,
                  "LayeredController: horizon must cover the replanning period");
        check_dim(options_.headroom >= 0.0 && options_.headroom < 1.0,
                  "LayeredController: headroom must lie in [0, 1)");
        mask_ = locality_mask(plant_.topology(), options_.locality_d);
        // The plan keeps a sliver of the input range free so the bottom
        // layer's corrections are not routinely clipped away mid-transition.
        const double planning_bound = (1.0 - options_.headroom) * plant_.u_max();
        top_ = std::make_unique<LocalizedMpcSolver>(plant_, options_.horizon, mask_, q_weight,
                                                    r_weight, planning_bound, admm,
                                                    options_.threads);
        if (options_.bottom_enabled) {
            bottom_response_ = synthesize_h2(plant_, options_.horizon, mask_, q_weight,
                                             r_weight, options_.threads);
            if (options_.audit && !response_within_mask(bottom_response_, mask_))
                throw NumericalError("LayeredController: bottom response leaves its mask");
            bottom_state_ = runtime_init(bottom_response_, Vec::Zero(plant_.state_dim()));
        }
    }

    /// One control step. A setpoint passed on a period boundary replaces the
    /// tracked reference before the replan; mid-period setpoints are deferred
    /// to the next boundary.
    Vec step(const Vec& x_measured, const std::optional<Setpoint>& new_setpoint = {}) {
        check_dim(x_measured.size() == plant_.state_dim(),
                  "LayeredController: state size mismatch");
        if (new_setpoint) pending_setpoint_ = *new_setpoint;
        if (step_in_period_ == 0) replan(x_measured);

        const int j = step_in_period_;
        const Vec& ref_state = plan_.states[static_cast<size_t>(j)];
        Vec u = plan_.inputs[static_cast<size_t>(j)];
        if (options_.bottom_enabled) {
            const Vec error = x_measured - ref_state;
            Vec u_fb = bottom_state_.step(bottom_response_, error);
            if (options_.audit) audit_feedback(u_fb);
            last_feedback_ = u_fb;
            u += u_fb;
        }
        step_in_period_ = (step_in_period_ + 1) % options_.t_mpc;
        Vec u_applied = saturate(u, plant_.u_max());
        if (options_.bottom_enabled) {
            // Conditioning: the nominal prediction must reflect the input the
            // plant actually received, or the clipped share of the feedback
            // reappears as a phantom disturbance and the buffer winds up.
            // The deficit is each node's own information, so locality holds.
            bottom_state_.shift_nominal(plant_.input_matrix() * (u_applied - u));
        }
        return u_applied;
    }

    int online_solve_count() const { return online_solves_; }
    int degraded_count() const { return degraded_periods_; }
    const std::string& last_error() const { return last_error_; }
    long long top_iteration_total() const { return top_iterations_; }
    const PlannedTrajectory& current_plan() const { return plan_; }
    const SystemResponse& bottom_response() const { return bottom_response_; }
    const Vec& last_feedback() const { return last_feedback_; }

private:
    void replan(const Vec& x_measured) {
        if (pending_setpoint_) {
            setpoint_ = *pending_setpoint_;
            pending_setpoint_.reset();
            top_->set_reference(setpoint_.x_star, setpoint_.u_star);
            have_reference_ = true;
        }
        if (!have_reference_)
            throw DimensionError("LayeredController: no setpoint provided before first step");

        // The bottom layer's error coordinates move with the plan: shift its
        // nominal prediction by (implied old-plan state) - (new plan start) so
        // reconstructed disturbances stay physical across the boundary.
        Vec implied_old = Vec::Zero(plant_.state_dim());
        const bool had_plan = !plan_.states.empty();
        if (had_plan) {
            const int last = options_.t_mpc - 1;
            implied_old = plant_.state_matrix() * plan_.states[static_cast<size_t>(last)] +
                          plant_.input_matrix() * plan_.inputs[static_cast<size_t>(last)];
        }
        // A replan that runs out of iterations still yields its best iterate:
        // box-exact inputs rolled through the dynamics. That beats holding the
        // reference open-loop, which lets an unstable plant run away between
        // periods; such periods are counted as degraded.
        PlannedTrajectory fresh;
        try {
            auto res = top_->solve(x_measured, options_.use_partial_plans);
            top_iterations_ += res.iterations;
            ++online_solves_;
            if (!res.converged) ++degraded_periods_;
            fresh = std::move(res.plan);
        } catch (const std::exception& e) {
            // Anything beyond plain non-convergence: hold the reference.
            last_error_ = e.what();
            ++degraded_periods_;
            fresh.states.assign(static_cast<size_t>(options_.t_mpc), setpoint_.x_star);
            fresh.inputs.assign(static_cast<size_t>(options_.t_mpc), setpoint_.u_star);
        }
        if (options_.bottom_enabled && had_plan)
            bottom_state_.shift_nominal(implied_old - fresh.states.front());
        plan_ = std::move(fresh);
    }

    /// The bottom feedback of a probe node must be reproducible from d-hop
    /// local information alone: zeroing non-local buffer entries cannot change
    /// it (all out-of-mask response entries are structural zeros).
    void audit_feedback(const Vec& u_fb) const {
        const int probe = audit_probe_ % plant_.node_count();
        double local_sum = 0.0;
        for (int k = 0; k < bottom_response_.horizon; ++k) {
            const Vec& w = bottom_state_.at(k);
            for (int j = 0; j < plant_.state_dim(); ++j) {
                if (!mask_.input_support(probe, j)) continue;
                local_sum += bottom_response_.phi_u[static_cast<size_t>(k)](probe, j) * w[j];
            }
        }
        double dense_sum = 0.0;
        for (int k = 0; k < bottom_response_.horizon; ++k)
            dense_sum += bottom_response_.phi_u[static_cast<size_t>(k)].row(probe).dot(
                bottom_state_.at(k));
        if (std::abs(local_sum - dense_sum) > 1e-12 * (1.0 + std::abs(dense_sum)))
            throw NumericalError("LayeredController: bottom feedback reads non-local state");
        (void)u_fb;
        ++audit_probe_;
    }

    PlantModel plant_;
    Options options_;
    LocalityMask mask_;
    std::unique_ptr<LocalizedMpcSolver> top_;
    SystemResponse bottom_response_;
    SlsRuntimeState bottom_state_;
    PlannedTrajectory plan_;
    Setpoint setpoint_;
    std::optional<Setpoint> pending_setpoint_;
    bool have_reference_ = false;
    int step_in_period_ = 0;
    int online_solves_ = 0;
    int degraded_periods_ = 0;
    long long top_iterations_ = 0;
    std::string last_error_;
    Vec last_feedback_;
    mutable int audit_probe_ = 0;
};

/// Top-layer solves required for a simulation of the given length.
inline int count_online_solves(int sim_length, int t_mpc) {
    check_dim(t_mpc >= 1, "count_online_solves: t_mpc must be >= 1");
    if (sim_length <= 0) return 0;
    return (sim_length + t_mpc - 1) / t_mpc;
}

}  // namespace slsgrid
