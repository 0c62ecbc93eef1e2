#ifndef PLATOON_SCENARIO_HPP
#define PLATOON_SCENARIO_HPP

#include <string>
#include <vector>

#include "platoon/dynamics.hpp"

namespace platoon::sim {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VehicleSpec {
    std::uint32_t id = 0;
    dyn::RoleKind role = dyn::RoleKind::Leader;
    int lane = 0;
    double long_pos = 0;
    dyn::VehicleParams params;
};

// Declarative experiment setup. Scenario files are plain text: one `key: value`
// per line, vehicles as `vehicle: key=value ...` property lists, lists in
// brackets, `#` comments (see scenarios/*.scn for annotated examples).
struct Scenario {
    std::vector<VehicleSpec> vehicles;
    std::vector<std::uint32_t> platoon_order;
    double d = 10.0;
    double sampling_period = 0.1;
    double dynamics_dt = 0.01;
    double broadcast_range = 200.0;
    std::uint64_t seed = 1;
    double max_duration = 120.0;
    dyn::Tolerances tolerances;
    // optional extension, disabled by default: a follower whose align wait
    // stays pending this many ticks restores its previous leader
    std::uint64_t align_timeout_ticks = 0;
    bool buffered_broadcast = false;

    const VehicleSpec* find(std::uint32_t id) const {
        for (const auto& v : vehicles)
            if (v.id == id) return &v;
        return nullptr;
    }
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario_file(const std::string& path);

// Unique ids, platoon order consistent with roles, dynamics_dt dividing the
// sampling period. Throws ConfigError.
void validate(const Scenario& sc);

}  // namespace platoon::sim

#endif
