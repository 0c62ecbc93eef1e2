#ifndef PLATOON_DYNAMICS_HPP
#define PLATOON_DYNAMICS_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace platoon::dyn {

struct DynError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnknownVehicleError : DynError {
    explicit UnknownVehicleError(std::uint32_t id)
        : DynError("unknown vehicle id " + std::to_string(id)) {}
};

struct ProtocolOrderViolationError : DynError {
    using DynError::DynError;
};

// ── Parameters ──────────────────────────────────────────────────────────────

struct PidParams {
    double kp = 0.49;
    double ki = 0.01;
    double kd = 1.4;
};

struct PredictiveParams {
    int horizon = 30;      // model steps of 0.1 s
    double base_q = 1.0;   // error weight before scaling
    double base_r = 5.0;   // effort weight before scaling
};

using ControllerConfig = std::variant<PidParams, PredictiveParams>;

struct VehicleParams {
    double length = 4.5;           // m
    double max_accel = 2.5;        // m/s^2
    double max_decel = 6.0;        // m/s^2, positive
    double cruise_speed = 20.0;    // m/s
    double lane_change_rate = 1.0; // m/s lateral
    ControllerConfig controller = PidParams{};
};

struct Tolerances {
    double eps_align = 0.25;  // m
    double eps_v = 0.1;       // m/s
    double eps_lat = 0.1;     // m
    int align_hold_ticks = 5;
};

inline constexpr double kLaneWidth = 3.5;
inline double lane_center(int lane) { return lane * kLaneWidth; }

// ── State ───────────────────────────────────────────────────────────────────

enum class RoleKind : std::uint8_t { Leader, Follower, Joiner };
const char* role_name(RoleKind r);

// Modes of the three behavior automata. Leader: Cruise only. Follower:
// Follow, with CreateGap between the align_start and merge_done signals.
// Joiner: Cruise until adopted, AlignLong while closing on the handed-over
// leader, LaneChange after merge_start, Follow once merged.
enum class HaMode : std::uint8_t { Cruise, Follow, CreateGap, AlignLong, LaneChange };
const char* mode_name(HaMode m);

struct SignalSet {
    // input pulses raised by the protocol layer, consumed by ha_step
    bool align_start_pulse = false;
    bool merge_start_pulse = false;
    bool merge_done_input_pulse = false;
    // output events latched until the protocol wait consumes them
    bool align_done_fired = false;
    bool merge_done_fired = false;
    // S3: current and previous leader
    std::optional<std::uint32_t> leader;
    std::optional<std::uint32_t> prev_leader;
};

struct AlignMonitor {
    bool armed = false;
    int consecutive = 0;
    bool emitted = false;
};

struct MergeMonitor {
    bool armed = false;
    bool emitted = false;
};

struct PidState {
    double integral = 0;
};

struct VehicleState {
    std::uint32_t id = 0;
    double long_pos = 0;  // front bumper position along the road
    double lat_pos = 0;   // offset from the road centerline
    double v_long = 0;
    double v_lat = 0;
    int lane_index = 0;
    int target_lane = 0;
    VehicleParams params;
    RoleKind role = RoleKind::Leader;
    HaMode mode = HaMode::Cruise;
    SignalSet signals;
    AlignMonitor align_monitor;
    MergeMonitor merge_monitor;
    PidState pid;
};

// ── World snapshot ──────────────────────────────────────────────────────────
// Positions every vehicle broadcast at the last localization update.

struct Pose {
    std::uint32_t id = 0;
    double long_pos = 0;
    double lat_pos = 0;
    double v_long = 0;
    int lane_index = 0;
    double length = 0;
};

class WorldView {
public:
    void put(const Pose& p);
    const Pose* find(std::uint32_t id) const;
    const Pose& at(std::uint32_t id) const;  // throws UnknownVehicleError
    const std::vector<Pose>& all() const { return poses_; }

private:
    std::vector<Pose> poses_;  // sorted by id
};

// Bumper-to-bumper longitudinal distance to the target (its rear minus our
// front); negative when the target's rear is behind our front.
double gap_long(const WorldView& w, const VehicleState& self, std::uint32_t target);
double gap_long(const Pose& self, const Pose& target);

// Signed lateral distance from us to the center of the target's current lane.
double offset_lat(const WorldView& w, const VehicleState& self, std::uint32_t target);

// ── Controllers ─────────────────────────────────────────────────────────────

// Gap-tracking PID on e = gap - d with measured rate de = vL - v.
double pid_control(PidState& st, const PidParams& p, double error, double error_rate, double dt);

// Finite-horizon quadratic gap tracker: state (gap error, relative speed),
// constant leader speed over the horizon, error-scaled weights
// Q(e) = baseQ (1 + |e|/d) and R(e) = baseR / (1 + |e|/d), a velocity
// reference of leader speed plus kappa * error; returns the first action.
double predictive_control(const PredictiveParams& p, double gap_error, double rel_speed,
                          double d);

// ── Stepping ────────────────────────────────────────────────────────────────

struct FlowCommand {
    bool follow = false;            // false: cruise at the reference speed
    std::uint32_t long_target = 0;  // leader to track when following
    double gap_target = 10.0;
    int lateral_target_lane = 0;
};

FlowCommand command_for(const VehicleState& v, double d);

// One explicit-Euler substep: longitudinal acceleration from the mode's
// controller (clamped to [-max_decel, max_accel]), lateral bang-bang toward
// the commanded lane center with an eps_lat deadband.
void flow(VehicleState& v, const FlowCommand& cmd, const WorldView& w, double dt,
          const Tolerances& tol);

struct HaOutputs {
    bool align_done = false;
    bool merge_done = false;
};

// One protocol-tick step of the behavior automaton: consumes input pulses,
// switches modes, evaluates the align/merge monitors against the world
// snapshot, and latches output events for the protocol waits.
HaOutputs ha_step(VehicleState& v, const WorldView& w, double d, const Tolerances& tol);

}  // namespace platoon::dyn

#endif
