#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tbench/grasp_sim.hpp"

namespace tbench {

/// Hand profile paired with its learner.
enum class LearnerProfile : std::uint8_t { MPL_PPO, SHADOW_DDPGHER };

std::string to_string(LearnerProfile p);
LearnerProfile parse_learner_profile(const std::string& s);
HandProfileId hand_of(LearnerProfile p);

/// Environment seed shared by MAIN and CONTROL cells of one (profile, config, seed).
std::uint64_t derive_env_seed(LearnerProfile profile, int config_id, std::uint64_t seed);

/// One training run. Wall time is kept out of this record so that reruns are
/// byte-identical; the harness manifest carries it instead.
struct RunRecord {
    LearnerProfile profile = LearnerProfile::MPL_PPO;
    int config_id = 1;
    RunType run_type = RunType::MAIN;
    std::uint64_t seed = 0;
    std::uint64_t env_seed = 0;
    std::string config_hash;
    long total_timesteps = 0;
    std::vector<double> curve;  // per-epoch success rate
    std::string checksum;       // final policy parameters
    std::map<std::string, double> counters;
    std::map<std::string, std::vector<double>> diagnostics;  // per-epoch series

    /// `{profile}_{cfg}_{type}_{seed}.run.json`
    std::string file_name() const;
    std::string to_json() const;
    static RunRecord from_json(const std::string& text);

    /// Writes atomically (temp file + rename) into `dir`; returns the path.
    std::filesystem::path save(const std::filesystem::path& dir) const;
    static RunRecord load(const std::filesystem::path& path);
};

std::string run_file_name(LearnerProfile profile, int config_id, RunType type, std::uint64_t seed);

}  // namespace tbench
