#include "platoon/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace platoon::sim {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + what + ": '" + s + "'");
    }
}

std::uint64_t to_u64(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        auto v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + what + ": '" + s + "'");
    }
}

dyn::RoleKind to_role(const std::string& s) {
    if (s == "Leader" || s == "leader" || s == "L") return dyn::RoleKind::Leader;
    if (s == "Follower" || s == "follower" || s == "F") return dyn::RoleKind::Follower;
    if (s == "Joiner" || s == "joiner" || s == "J") return dyn::RoleKind::Joiner;
    throw ConfigError("unknown role: '" + s + "'");
}

std::vector<std::pair<std::string, std::string>> split_props(const std::string& body) {
    std::vector<std::pair<std::string, std::string>> props;
    std::istringstream in(body);
    std::string tok;
    while (in >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + tok + "'");
        props.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
    }
    return props;
}

VehicleSpec parse_vehicle(const std::string& body) {
    VehicleSpec v;
    bool have_id = false;
    bool predictive = false;
    dyn::PidParams pid;
    dyn::PredictiveParams mpc;
    for (const auto& [key, value] : split_props(body)) {
        if (key == "id") {
            v.id = static_cast<std::uint32_t>(to_u64(value, key));
            have_id = true;
        } else if (key == "role") {
            v.role = to_role(value);
        } else if (key == "lane") {
            v.lane = static_cast<int>(to_double(value, key));
        } else if (key == "long") {
            v.long_pos = to_double(value, key);
        } else if (key == "length") {
            v.params.length = to_double(value, key);
        } else if (key == "max_accel") {
            v.params.max_accel = to_double(value, key);
        } else if (key == "max_decel") {
            v.params.max_decel = to_double(value, key);
        } else if (key == "cruise_speed") {
            v.params.cruise_speed = to_double(value, key);
        } else if (key == "lane_change_rate") {
            v.params.lane_change_rate = to_double(value, key);
        } else if (key == "controller") {
            if (value == "pid")
                predictive = false;
            else if (value == "predictive")
                predictive = true;
            else
                throw ConfigError("unknown controller: '" + value + "'");
        } else if (key == "kp") {
            pid.kp = to_double(value, key);
        } else if (key == "ki") {
            pid.ki = to_double(value, key);
        } else if (key == "kd") {
            pid.kd = to_double(value, key);
        } else if (key == "horizon") {
            mpc.horizon = static_cast<int>(to_u64(value, key));
        } else if (key == "base_q") {
            mpc.base_q = to_double(value, key);
        } else if (key == "base_r") {
            mpc.base_r = to_double(value, key);
        } else {
            throw ConfigError("unknown vehicle property: '" + key + "'");
        }
    }
    if (!have_id) throw ConfigError("vehicle without an id");
    if (predictive)
        v.params.controller = mpc;
    else
        v.params.controller = pid;
    return v;
}

std::vector<std::uint32_t> parse_id_list(std::string s) {
    s = trim(s);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']')
        throw ConfigError("expected a bracketed id list, got '" + s + "'");
    s = s.substr(1, s.size() - 2);
    std::vector<std::uint32_t> ids;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        ids.push_back(static_cast<std::uint32_t>(to_u64(tok, "platoon_order")));
    }
    return ids;
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
    Scenario sc;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        auto colon = line.find(':');
        if (colon == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key: value'");
        std::string key = trim(line.substr(0, colon));
        std::string value = trim(line.substr(colon + 1));
        if (key == "vehicle")
            sc.vehicles.push_back(parse_vehicle(value));
        else if (key == "platoon_order")
            sc.platoon_order = parse_id_list(value);
        else if (key == "d")
            sc.d = to_double(value, key);
        else if (key == "sampling_period")
            sc.sampling_period = to_double(value, key);
        else if (key == "dynamics_dt")
            sc.dynamics_dt = to_double(value, key);
        else if (key == "broadcast_range")
            sc.broadcast_range = to_double(value, key);
        else if (key == "seed")
            sc.seed = to_u64(value, key);
        else if (key == "max_duration")
            sc.max_duration = to_double(value, key);
        else if (key == "eps_align")
            sc.tolerances.eps_align = to_double(value, key);
        else if (key == "eps_v")
            sc.tolerances.eps_v = to_double(value, key);
        else if (key == "eps_lat")
            sc.tolerances.eps_lat = to_double(value, key);
        else if (key == "align_hold_ticks")
            sc.tolerances.align_hold_ticks = static_cast<int>(to_u64(value, key));
        else if (key == "align_timeout_ticks")
            sc.align_timeout_ticks = to_u64(value, key);
        else if (key == "buffered_broadcast")
            sc.buffered_broadcast = (value == "true" || value == "1");
        else
            throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    validate(sc);
    return sc;
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw ConfigError("cannot open scenario file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_scenario(os.str());
}

void validate(const Scenario& sc) {
    if (sc.vehicles.empty()) throw ConfigError("scenario has no vehicles");
    std::unordered_set<std::uint32_t> ids;
    for (const auto& v : sc.vehicles)
        if (!ids.insert(v.id).second)
            throw ConfigError("duplicate vehicle id " + std::to_string(v.id));

    if (sc.sampling_period <= 0 || sc.dynamics_dt <= 0)
        throw ConfigError("sampling_period and dynamics_dt must be positive");
    double ratio = sc.sampling_period / sc.dynamics_dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9)
        throw ConfigError("dynamics_dt must divide sampling_period");
    if (sc.d <= 0) throw ConfigError("d must be positive");

    if (sc.platoon_order.empty()) throw ConfigError("platoon_order is required");
    for (std::size_t i = 0; i < sc.platoon_order.size(); ++i) {
        const VehicleSpec* v = sc.find(sc.platoon_order[i]);
        if (!v)
            throw ConfigError("platoon_order references unknown id " +
                              std::to_string(sc.platoon_order[i]));
        dyn::RoleKind want = i == 0 ? dyn::RoleKind::Leader : dyn::RoleKind::Follower;
        if (v->role != want)
            throw ConfigError("platoon_order position " + std::to_string(i) +
                              " must be a " + (i == 0 ? std::string("Leader") : "Follower"));
    }
    for (const auto& v : sc.vehicles) {
        bool in_order = false;
        for (auto id : sc.platoon_order) in_order |= (id == v.id);
        if (v.role == dyn::RoleKind::Joiner && in_order)
            throw ConfigError("joiner " + std::to_string(v.id) + " cannot be in platoon_order");
        if (v.role != dyn::RoleKind::Joiner && !in_order)
            throw ConfigError("platoon member " + std::to_string(v.id) +
                              " missing from platoon_order");
        if (v.params.length <= 0 || v.params.max_decel <= 0 || v.params.cruise_speed <= 0)
            throw ConfigError("vehicle " + std::to_string(v.id) + " has invalid parameters");
    }
}

}  // namespace platoon::sim
