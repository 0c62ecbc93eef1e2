#include "platoon/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace platoon::dyn {

const char* role_name(RoleKind r) {
    switch (r) {
        case RoleKind::Leader: return "Leader";
        case RoleKind::Follower: return "Follower";
        case RoleKind::Joiner: return "Joiner";
    }
    return "?";
}

const char* mode_name(HaMode m) {
    switch (m) {
        case HaMode::Cruise: return "cruise";
        case HaMode::Follow: return "follow";
        case HaMode::CreateGap: return "create_gap";
        case HaMode::AlignLong: return "align_long";
        case HaMode::LaneChange: return "lane_change";
    }
    return "?";
}

void WorldView::put(const Pose& p) {
    auto it = std::lower_bound(poses_.begin(), poses_.end(), p.id,
                               [](const Pose& a, std::uint32_t id) { return a.id < id; });
    if (it != poses_.end() && it->id == p.id)
        *it = p;
    else
        poses_.insert(it, p);
}

const Pose* WorldView::find(std::uint32_t id) const {
    auto it = std::lower_bound(poses_.begin(), poses_.end(), id,
                               [](const Pose& a, std::uint32_t i) { return a.id < i; });
    return it != poses_.end() && it->id == id ? &*it : nullptr;
}

const Pose& WorldView::at(std::uint32_t id) const {
    const Pose* p = find(id);
    if (!p) throw UnknownVehicleError(id);
    return *p;
}

double gap_long(const Pose& self, const Pose& target) {
    return (target.long_pos - target.length) - self.long_pos;
}

double gap_long(const WorldView& w, const VehicleState& self, std::uint32_t target) {
    const Pose& t = w.at(target);
    return (t.long_pos - t.length) - self.long_pos;
}

double offset_lat(const WorldView& w, const VehicleState& self, std::uint32_t target) {
    const Pose& t = w.at(target);
    return lane_center(t.lane_index) - self.lat_pos;
}

// ── Controllers ─────────────────────────────────────────────────────────────

double pid_control(PidState& st, const PidParams& p, double error, double error_rate,
                   double dt) {
    st.integral = std::clamp(st.integral + error * dt, -10.0, 10.0);
    return p.kp * error + p.ki * st.integral + p.kd * error_rate;
}

double predictive_control(const PredictiveParams& p, double gap_error, double rel_speed,
                          double d) {
    const double delta = 0.1;  // internal model step
    const double kappa = 0.4;  // velocity reference slope vs. gap error
    const double scale = 1.0 + std::abs(gap_error) / std::max(d, 1e-9);
    const double q = p.base_q * scale;
    const double qv = 8.0 * q;  // strong relative-speed tracking keeps chains string-stable
    const double r = p.base_r / scale;

    // state x = (e, rel); e+ = e + delta rel - delta^2 a; rel+ = rel - delta a
    const double A[2][2] = {{1.0, delta}, {0.0, 1.0}};
    const double B[2] = {-delta * delta, -delta};
    // stage cost x'Cx + r a^2 with C from q e^2 + qv (rel + kappa e)^2
    const double C[2][2] = {{q + qv * kappa * kappa, qv * kappa}, {qv * kappa, qv}};

    double P[2][2] = {{C[0][0], C[0][1]}, {C[1][0], C[1][1]}};
    double K[2] = {0, 0};
    int h = std::max(1, p.horizon);
    for (int k = 0; k < h; ++k) {
        // K = (r + B'PB)^-1 B'PA ; P = C + A'P(A - BK)
        double PB[2] = {P[0][0] * B[0] + P[0][1] * B[1], P[1][0] * B[0] + P[1][1] * B[1]};
        double btpb = B[0] * PB[0] + B[1] * PB[1];
        double BtPA[2] = {B[0] * (P[0][0] * A[0][0] + P[0][1] * A[1][0]) +
                              B[1] * (P[1][0] * A[0][0] + P[1][1] * A[1][0]),
                          B[0] * (P[0][0] * A[0][1] + P[0][1] * A[1][1]) +
                              B[1] * (P[1][0] * A[0][1] + P[1][1] * A[1][1])};
        K[0] = BtPA[0] / (r + btpb);
        K[1] = BtPA[1] / (r + btpb);
        double ABK[2][2];  // A - B K
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) ABK[i][j] = A[i][j] - B[i] * K[j];
        double PABK[2][2];
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                PABK[i][j] = P[i][0] * ABK[0][j] + P[i][1] * ABK[1][j];
        double next[2][2];
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                next[i][j] = C[i][j] + A[0][i] * PABK[0][j] + A[1][i] * PABK[1][j];
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) P[i][j] = next[i][j];
    }
    return -(K[0] * gap_error + K[1] * rel_speed);
}

// ── Flow ────────────────────────────────────────────────────────────────────

FlowCommand command_for(const VehicleState& v, double d) {
    FlowCommand cmd;
    cmd.gap_target = d;
    cmd.lateral_target_lane = v.target_lane;
    switch (v.mode) {
        case HaMode::Cruise:
            break;
        case HaMode::Follow:
        case HaMode::CreateGap:
        case HaMode::AlignLong:
        case HaMode::LaneChange:
            if (v.signals.leader) {
                cmd.follow = true;
                cmd.long_target = *v.signals.leader;
            }
            break;
    }
    return cmd;
}

void flow(VehicleState& v, const FlowCommand& cmd, const WorldView& w, double dt,
          const Tolerances& tol) {
    double accel;
    if (!cmd.follow) {
        accel = 1.0 * (v.params.cruise_speed - v.v_long);  // speed regulation
    } else {
        const Pose& target = w.at(cmd.long_target);
        double e = gap_long(w, v, cmd.long_target) - cmd.gap_target;
        double rel = target.v_long - v.v_long;
        if (const auto* pid = std::get_if<PidParams>(&v.params.controller))
            accel = pid_control(v.pid, *pid, e, rel, dt);
        else
            accel = predictive_control(std::get<PredictiveParams>(v.params.controller), e, rel,
                                       cmd.gap_target);
    }
    accel = std::clamp(accel, -v.params.max_decel, v.params.max_accel);

    double lat_err = lane_center(cmd.lateral_target_lane) - v.lat_pos;
    if (std::abs(lat_err) <= tol.eps_lat)
        v.v_lat = 0;
    else
        v.v_lat = lat_err > 0 ? v.params.lane_change_rate : -v.params.lane_change_rate;

    v.long_pos += v.v_long * dt;
    v.lat_pos += v.v_lat * dt;
    v.v_long = std::max(0.0, v.v_long + accel * dt);
    v.lane_index = static_cast<int>(std::llround(v.lat_pos / kLaneWidth));
}

// ── Hybrid automaton step ───────────────────────────────────────────────────

HaOutputs ha_step(VehicleState& v, const WorldView& w, double d, const Tolerances& tol) {
    HaOutputs out;

    if (v.role == RoleKind::Leader) {
        // one mode, no transitions, no signals
        v.signals.align_start_pulse = false;
        v.signals.merge_start_pulse = false;
        v.signals.merge_done_input_pulse = false;
        return out;
    }

    if (v.signals.align_start_pulse) {
        v.signals.align_start_pulse = false;
        if (!v.signals.leader)
            throw ProtocolOrderViolationError("align_start with no leader set");
        // longitudinal target switches to the new leader; the lateral
        // reference stays in the current lane (followers must not sway)
        v.mode = v.role == RoleKind::Follower ? HaMode::CreateGap : HaMode::AlignLong;
        v.target_lane = v.lane_index;
        v.align_monitor = {true, 0, false};
    }

    if (v.signals.merge_start_pulse) {
        v.signals.merge_start_pulse = false;
        if (v.role != RoleKind::Joiner)
            throw ProtocolOrderViolationError("merge_start on a non-joining vehicle");
        if (!v.align_monitor.emitted)
            throw ProtocolOrderViolationError("merge_start before align_done was emitted");
        v.mode = HaMode::LaneChange;
        v.target_lane = w.at(*v.signals.leader).lane_index;
        v.merge_monitor = {true, false};
    }

    if (v.signals.merge_done_input_pulse) {
        v.signals.merge_done_input_pulse = false;
        // the follower now references its new leader on both axes
        v.mode = HaMode::Follow;
        v.align_monitor = {};
    }

    if (v.align_monitor.armed && v.signals.leader) {
        const Pose& lead = w.at(*v.signals.leader);
        double e = gap_long(w, v, *v.signals.leader) - d;
        double rel = std::abs(lead.v_long - v.v_long);
        if (std::abs(e) <= tol.eps_align && rel <= tol.eps_v)
            ++v.align_monitor.consecutive;
        else
            v.align_monitor.consecutive = 0;
        if (v.align_monitor.consecutive >= tol.align_hold_ticks) {
            v.align_monitor.armed = false;
            v.align_monitor.emitted = true;
            v.signals.align_done_fired = true;
            out.align_done = true;
        }
    }

    if (v.merge_monitor.armed && v.signals.leader) {
        if (std::abs(offset_lat(w, v, *v.signals.leader)) <= tol.eps_lat) {
            v.merge_monitor.armed = false;
            v.merge_monitor.emitted = true;
            v.signals.merge_done_fired = true;
            out.merge_done = true;
            v.mode = HaMode::Follow;  // merged: follow the leader on both axes
        }
    }

    return out;
}

}  // namespace platoon::dyn
