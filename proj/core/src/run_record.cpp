#include "tbench/run_record.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tbench/errors.hpp"
#include "tbench/rng.hpp"

namespace tbench {

namespace {

std::string seed_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::string to_string(LearnerProfile p) {
    return p == LearnerProfile::MPL_PPO ? "MPL_PPO" : "SHADOW_DDPGHER";
}

LearnerProfile parse_learner_profile(const std::string& s) {
    if (s == "MPL_PPO") return LearnerProfile::MPL_PPO;
    if (s == "SHADOW_DDPGHER") return LearnerProfile::SHADOW_DDPGHER;
    throw LookupError("unknown learner profile '" + s + "'");
}

HandProfileId hand_of(LearnerProfile p) {
    return p == LearnerProfile::MPL_PPO ? HandProfileId::MPL : HandProfileId::SHADOW;
}

std::uint64_t derive_env_seed(LearnerProfile profile, int config_id, std::uint64_t seed) {
    return hash64({hash_name(to_string(profile)), static_cast<std::uint64_t>(config_id), seed});
}

std::string run_file_name(LearnerProfile profile, int config_id, RunType type, std::uint64_t seed) {
    return to_string(profile) + "_" + std::to_string(config_id) + "_" + to_string(type) + "_" +
           std::to_string(seed) + ".run.json";
}

std::string RunRecord::file_name() const { return run_file_name(profile, config_id, run_type, seed); }

std::string RunRecord::to_json() const {
    nlohmann::ordered_json j;
    j["format"] = "tbench-run";
    j["version"] = 1;
    j["profile"] = to_string(profile);
    j["config_id"] = config_id;
    j["run_type"] = to_string(run_type);
    j["seed"] = seed;
    j["env_seed"] = seed_hex(env_seed);
    j["config_hash"] = config_hash;
    j["total_timesteps"] = total_timesteps;
    j["epochs"] = curve.size();
    j["curve"] = curve;
    j["checksum"] = checksum;
    j["counters"] = counters;
    j["diagnostics"] = diagnostics;
    return j.dump(1) + "\n";
}

RunRecord RunRecord::from_json(const std::string& text) {
    RunRecord r;
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.value("format", "") != "tbench-run") throw InterfaceError("not a run record");
        r.profile = parse_learner_profile(j.at("profile").get<std::string>());
        r.config_id = j.at("config_id").get<int>();
        r.run_type = parse_run_type(j.at("run_type").get<std::string>());
        r.seed = j.at("seed").get<std::uint64_t>();
        r.env_seed = std::stoull(j.at("env_seed").get<std::string>(), nullptr, 16);
        r.config_hash = j.at("config_hash").get<std::string>();
        r.total_timesteps = j.at("total_timesteps").get<long>();
        r.curve = j.at("curve").get<std::vector<double>>();
        r.checksum = j.at("checksum").get<std::string>();
        r.counters = j.at("counters").get<std::map<std::string, double>>();
        r.diagnostics = j.at("diagnostics").get<std::map<std::string, std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
        throw InterfaceError(std::string("malformed run record: ") + e.what());
    }
    for (double v : r.curve) {
        if (!(v >= 0.0 && v <= 1.0)) throw InterfaceError("run record curve value outside [0, 1]");
    }
    return r;
}

std::filesystem::path RunRecord::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    const auto path = dir / file_name();
    const auto tmp = dir / (file_name() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write " + tmp.string());
        out << to_json();
        if (!out) throw Error("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
    return path;
}

RunRecord RunRecord::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LookupError("cannot open run record " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

}  // namespace tbench
