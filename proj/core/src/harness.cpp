#include "tbench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "tbench/errors.hpp"
#include "tbench/rng.hpp"
#include "tbench/sensor_layout.hpp"
#include "tbench/stats.hpp"

#ifndef TBENCH_VERSION
#define TBENCH_VERSION "0.0.0"
#endif

namespace tbench {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kDefaultSeedCount = 10;

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string fmt_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LookupError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        out << text;
        if (!out) throw Error("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

// Applies the learner block and checks it against the learner's own validator.
template <class LearnerConfig>
LearnerConfig learner_from(const std::string& overrides) {
    LearnerConfig c;
    c.merge_json(overrides);
    return c;
}

const char* learner_key(LearnerProfile p) { return p == LearnerProfile::MPL_PPO ? "ppo" : "ddpg_her"; }

template <class T>
T field_as(const json& doc, const char* key) {
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(key, e.what());
    }
}

}  // namespace

std::string code_version() { return TBENCH_VERSION; }

long scaled_epochs(long full_epochs, double scale) {
    return std::max(1L, std::lround(static_cast<double>(full_epochs) * scale));
}

PpoConfig ExperimentConfig::ppo_config() const {
    auto c = learner_from<PpoConfig>(learner_json);
    c.total_timesteps = scaled_epochs(c.epochs(), scale) * c.timesteps_per_epoch;
    return c;
}

DdpgHerConfig ExperimentConfig::ddpg_config() const {
    auto c = learner_from<DdpgHerConfig>(learner_json);
    c.epochs = scaled_epochs(c.epochs, scale);
    return c;
}

SimParams ExperimentConfig::sim_params() const {
    SimParams p = SimParams::for_profile(hand_of(profile));
    p.merge_json(sim_json);
    return p;
}

long ExperimentConfig::epochs() const {
    return profile == LearnerProfile::MPL_PPO ? ppo_config().epochs() : ddpg_config().epochs;
}

long ExperimentConfig::total_timesteps() const {
    if (profile == LearnerProfile::MPL_PPO) return ppo_config().total_timesteps;
    const auto c = ddpg_config();
    return c.epochs * c.cycles_per_epoch * c.workers * c.rollouts_per_worker * c.episode_steps;
}

namespace {

ordered_json result_document(const ExperimentConfig& c) {
    ordered_json j;
    j["profile"] = to_string(c.profile);
    j["config_ids"] = c.config_ids;
    std::vector<std::string> types;
    for (auto t : c.run_types) types.push_back(to_string(t));
    j["run_types"] = types;
    j["seeds"] = c.seeds;
    j["scale"] = c.scale;
    j[learner_key(c.profile)] = json::parse(c.learner_json);
    j["sim"] = json::parse(c.sim_json);
    j["stats"] = {{"bins", c.stats.bins},
                  {"reps_converged", c.stats.reps_converged},
                  {"reps_curve", c.stats.reps_curve},
                  {"seed", c.stats.seed}};
    return j;
}

}  // namespace

std::string ExperimentConfig::to_json() const {
    auto j = result_document(*this);
    j["output_dir"] = output_dir.string();
    j["workers"] = workers;
    return j.dump(2) + "\n";
}

std::string ExperimentConfig::hash() const {
    const auto text = result_document(*this).dump();
    return hex16(hash64({hash_name(text), hash_name(code_version())}));
}

ExperimentConfig validate_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError("document", e.what());
    }
    if (!doc.is_object()) throw ValidationError("document", "must be a JSON object");

    static const std::set<std::string> known = {"profile", "config_ids", "run_types", "seeds", "scale", "ppo",
                                                "ddpg_her", "sim", "stats", "output_dir", "workers"};
    for (const auto& [key, _] : doc.items()) {
        if (!known.contains(key)) throw ValidationError(key, "unknown field");
    }

    ExperimentConfig c;
    if (!doc.contains("profile")) throw ValidationError("profile", "required");
    try {
        c.profile = parse_learner_profile(field_as<std::string>(doc, "profile"));
    } catch (const LookupError& e) {
        throw ValidationError("profile", e.what());
    }

    if (doc.contains("config_ids")) {
        c.config_ids = field_as<std::vector<int>>(doc, "config_ids");
    } else {
        c.config_ids = {1, 2, 3, 4, 5, 6};
    }
    if (c.config_ids.empty()) throw ValidationError("config_ids", "must not be empty");
    for (int id : c.config_ids) {
        if (id < 1 || id > kConfigCount) throw ValidationError("config_ids", "unknown config id " + std::to_string(id));
    }
    if (std::set<int>(c.config_ids.begin(), c.config_ids.end()).size() != c.config_ids.size()) {
        throw ValidationError("config_ids", "duplicate config id");
    }

    if (doc.contains("run_types")) {
        c.run_types.clear();
        for (const auto& s : field_as<std::vector<std::string>>(doc, "run_types")) {
            try {
                c.run_types.push_back(parse_run_type(s));
            } catch (const Error& e) {
                throw ValidationError("run_types", e.what());
            }
        }
        if (c.run_types.empty()) throw ValidationError("run_types", "must not be empty");
        if (std::set<RunType>(c.run_types.begin(), c.run_types.end()).size() != c.run_types.size()) {
            throw ValidationError("run_types", "duplicate run type");
        }
    }

    if (doc.contains("seeds")) {
        c.seeds = field_as<std::vector<std::uint64_t>>(doc, "seeds");
        if (c.seeds.empty()) throw ValidationError("seeds", "must not be empty");
        if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
            throw ValidationError("seeds", "seeds must be distinct");
        }
    } else {
        for (int s = 0; s < kDefaultSeedCount; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
    }

    if (doc.contains("scale")) c.scale = field_as<double>(doc, "scale");
    if (!(c.scale > 0.0 && c.scale <= 1.0)) throw ValidationError("scale", "must lie in (0, 1]");

    const char* own = learner_key(c.profile);
    const char* other = c.profile == LearnerProfile::MPL_PPO ? "ddpg_her" : "ppo";
    if (doc.contains(other)) {
        throw ValidationError(other, "does not apply to profile " + to_string(c.profile));
    }
    if (doc.contains(own)) {
        if (!doc.at(own).is_object()) throw ValidationError(own, "must be an object");
        c.learner_json = doc.at(own).dump();
    }
    try {
        if (c.profile == LearnerProfile::MPL_PPO) {
            c.ppo_config().validate();
        } else {
            c.ddpg_config().validate();
        }
    } catch (const ValidationError&) {
        throw;
    } catch (const std::exception& e) {
        throw ValidationError(own, e.what());
    }

    if (doc.contains("sim")) {
        const auto& sim = doc.at("sim");
        if (!sim.is_object()) throw ValidationError("sim", "must be an object");
        const auto defaults = json::parse(SimParams::for_profile(hand_of(c.profile)).to_json());
        for (const auto& [key, value] : sim.items()) {
            if (!defaults.contains(key)) throw ValidationError("sim." + key, "unknown simulator parameter");
        }
        if (sim.contains("hand") && sim.at("hand") != defaults.at("hand")) {
            throw ValidationError("sim.hand", "must match profile " + to_string(c.profile));
        }
        c.sim_json = sim.dump();
        try {
            (void)c.sim_params();
        } catch (const std::exception& e) {
            throw ValidationError("sim", e.what());
        }
    }

    if (doc.contains("stats")) {
        const auto& st = doc.at("stats");
        if (!st.is_object()) throw ValidationError("stats", "must be an object");
        for (const auto& [key, value] : st.items()) {
            try {
                if (key == "bins") c.stats.bins = value.get<int>();
                else if (key == "reps_converged") c.stats.reps_converged = value.get<long>();
                else if (key == "reps_curve") c.stats.reps_curve = value.get<long>();
                else if (key == "seed") c.stats.seed = value.get<std::uint64_t>();
                else throw ValidationError("stats." + key, "unknown field");
            } catch (const json::exception& e) {
                throw ValidationError("stats." + key, e.what());
            }
        }
        if (c.stats.bins < 2) throw ValidationError("stats.bins", "must be at least 2");
        if (c.stats.reps_converged < 1) throw ValidationError("stats.reps_converged", "must be positive");
        if (c.stats.reps_curve < 1) throw ValidationError("stats.reps_curve", "must be positive");
    }

    if (doc.contains("output_dir")) c.output_dir = field_as<std::string>(doc, "output_dir");
    if (doc.contains("workers")) c.workers = field_as<int>(doc, "workers");
    if (c.workers < 1) throw ValidationError("workers", "must be positive");
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const LookupError& e) {
        throw ValidationError("document", e.what());
    }
    return validate_config(text);
}

std::vector<Cell> enumerate_cells(const ExperimentConfig& cfg) {
    std::vector<Cell> cells;
    for (int id : cfg.config_ids) {
        for (RunType t : cfg.run_types) {
            for (std::uint64_t s : cfg.seeds) cells.push_back({id, t, s});
        }
    }
    return cells;
}

std::string to_string(CellStatus s) {
    switch (s) {
        case CellStatus::COMPLETED: return "completed";
        case CellStatus::SKIPPED: return "skipped";
        case CellStatus::FAILED: return "failed";
    }
    return "?";
}

std::size_t RunSummary::count(CellStatus s) const {
    return static_cast<std::size_t>(
        std::count_if(cells.begin(), cells.end(), [s](const CellOutcome& c) { return c.status == s; }));
}

int effective_workers(const ExperimentConfig& cfg, std::size_t cells) {
    long n = cfg.workers;
    if (const char* env = std::getenv("BENCH_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && cap > 0) n = std::min(n, cap);
    }
    n = std::min<long>(n, static_cast<long>(std::max<std::size_t>(cells, 1)));
    return static_cast<int>(std::max(1L, n));
}

RunRecord run_cell(const ExperimentConfig& cfg, const Cell& cell, std::ostream* trace) {
    const auto hand = HandProfile::for_id(hand_of(cfg.profile));
    const auto layout = build_layout(cell.config_id, hand);
    TrainOptions opts;
    opts.config_hash = cfg.hash();
    opts.trace = trace;
    if (cfg.profile == LearnerProfile::MPL_PPO) {
        return train_ppo(cfg.sim_params(), layout, cell.run_type, cell.seed, cfg.ppo_config(), opts);
    }
    return train_ddpg_her(cfg.sim_params(), layout, cell.run_type, cell.seed, cfg.ddpg_config(), opts);
}

namespace {

bool has_valid_record(const std::filesystem::path& path, const std::string& config_hash) {
    if (!std::filesystem::exists(path)) return false;
    try {
        return RunRecord::load(path).config_hash == config_hash;
    } catch (const Error&) {
        return false;
    }
}

std::string manifest_text(const ExperimentConfig& cfg, const std::vector<CellOutcome>& cells) {
    ordered_json j;
    j["format"] = "tbench-manifest";
    j["code_version"] = code_version();
    j["config_hash"] = cfg.hash();
    j["config"] = ordered_json::parse(cfg.to_json());
    j["epochs"] = cfg.epochs();
    j["total_timesteps"] = cfg.total_timesteps();
    auto& arr = j["cells"] = ordered_json::array();
    for (const auto& c : cells) {
        ordered_json e;
        e["config_id"] = c.cell.config_id;
        e["run_type"] = to_string(c.cell.run_type);
        e["seed"] = c.cell.seed;
        e["status"] = to_string(c.status);
        e["file"] = c.file;
        e["wall_seconds"] = c.wall_seconds;
        if (!c.error.empty()) e["error"] = c.error;
        arr.push_back(e);
    }
    std::vector<ordered_json> failures;
    for (const auto& c : cells) {
        if (c.status == CellStatus::FAILED) failures.push_back({{"file", c.file}, {"error", c.error}});
    }
    j["failures"] = failures;
    return j.dump(1) + "\n";
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
    const auto cells = enumerate_cells(cfg);
    const std::string config_hash = cfg.hash();
    std::filesystem::create_directories(cfg.output_dir);
    if (!opts.trace_dir.empty()) std::filesystem::create_directories(opts.trace_dir);

    RunSummary summary;
    summary.cells.resize(cells.size());
    summary.manifest = cfg.output_dir / "manifest.json";
    std::mutex mu;
    std::size_t done = 0;
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            const Cell& cell = cells[i];
            CellOutcome out;
            out.cell = cell;
            out.file = run_file_name(cfg.profile, cell.config_id, cell.run_type, cell.seed);
            const auto path = cfg.output_dir / out.file;
            const auto t0 = std::chrono::steady_clock::now();
            if (has_valid_record(path, config_hash)) {
                out.status = CellStatus::SKIPPED;
            } else {
                try {
                    std::ofstream trace_file;
                    if (!opts.trace_dir.empty()) {
                        trace_file.open(opts.trace_dir / (out.file.substr(0, out.file.size() - 9) + ".trace.jsonl"),
                                        std::ios::binary);
                    }
                    const auto rec = run_cell(cfg, cell, trace_file.is_open() ? &trace_file : nullptr);
                    rec.save(cfg.output_dir);
                    out.status = CellStatus::COMPLETED;
                } catch (const std::exception& e) {
                    out.status = CellStatus::FAILED;
                    out.error = e.what();
                }
            }
            out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

            std::lock_guard lock(mu);
            summary.cells[i] = out;
            ++done;
            write_atomic(summary.manifest, manifest_text(cfg, summary.cells));
            if (opts.on_cell) opts.on_cell(out, done, cells.size());
        }
    };

    const int width = effective_workers(cfg, cells.size());
    if (width == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < width; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (cells.empty()) write_atomic(summary.manifest, manifest_text(cfg, summary.cells));
    return summary;
}

// ---------------------------------------------------------------------------
// Report

namespace {

struct GroupKey {
    int config_id;
    RunType type;
    auto operator<=>(const GroupKey&) const = default;
};

std::string group_name(const GroupKey& k) { return std::to_string(k.config_id) + "/" + to_string(k.type); }

std::uint64_t group_seed(const StatsSettings& st, const GroupKey& k, std::uint64_t salt) {
    return hash64({st.seed, static_cast<std::uint64_t>(k.config_id), static_cast<std::uint64_t>(k.type), salt});
}

}  // namespace

ReportBundle make_report(const std::filesystem::path& runs_dir, const std::filesystem::path& out_dir,
                         const StatsSettings& stats) {
    if (!std::filesystem::is_directory(runs_dir)) throw LookupError("no run directory " + runs_dir.string());

    std::vector<GroupKey> requested;
    std::string expected_hash;
    const auto manifest_path = runs_dir / "manifest.json";
    if (std::filesystem::exists(manifest_path)) {
        const auto m = json::parse(read_file(manifest_path));
        expected_hash = m.value("config_hash", "");
        const auto& c = m.at("config");
        for (int id : c.at("config_ids").get<std::vector<int>>()) {
            for (const auto& t : c.at("run_types").get<std::vector<std::string>>()) {
                requested.push_back({id, parse_run_type(t)});
            }
        }
    } else {
        for (int id = 1; id <= kConfigCount; ++id) {
            requested.push_back({id, RunType::MAIN});
            requested.push_back({id, RunType::CONTROL});
        }
    }

    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(runs_dir)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.ends_with(".run.json")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::map<GroupKey, std::vector<RunRecord>> groups;
    std::set<std::string> hashes;
    for (const auto& f : files) {
        auto rec = RunRecord::load(f);
        hashes.insert(rec.config_hash);
        groups[{rec.config_id, rec.run_type}].push_back(std::move(rec));
    }
    for (auto& [key, recs] : groups) {
        std::sort(recs.begin(), recs.end(), [](const RunRecord& a, const RunRecord& b) { return a.seed < b.seed; });
    }

    std::filesystem::create_directories(out_dir);
    ReportBundle bundle;
    bundle.converged_csv = out_dir / "converged.csv";
    bundle.overlap_csv = out_dir / "overlap.csv";
    bundle.manifest = out_dir / "report_manifest.json";

    std::map<GroupKey, AggregateEstimate> iqm_estimates;
    std::ostringstream conv;
    conv << "config,type,median,iqm,mean,median_ci_lo,median_ci_hi,iqm_ci_lo,iqm_ci_hi,mean_ci_lo,mean_ci_hi\n";
    for (const auto& key : requested) {
        conv << key.config_id << ',' << to_string(key.type);
        const auto it = groups.find(key);
        if (it == groups.end()) {
            bundle.absent_groups.push_back(group_name(key));
            for (int i = 0; i < 9; ++i) conv << ",NA";
            conv << '\n';
            continue;
        }
        std::vector<double> converged;
        for (const auto& r : it->second) converged.push_back(converged_rate(r.curve, stats.bins));
        std::array<AggregateEstimate, 3> est;
        const std::array<Metric, 3> metrics = {Metric::MEDIAN, Metric::IQM, Metric::MEAN};
        for (std::size_t m = 0; m < 3; ++m) {
            est[m] = stratified_bootstrap(converged, metrics[m], stats.reps_converged, 0.95,
                                          group_seed(stats, key, static_cast<std::uint64_t>(metrics[m])));
        }
        iqm_estimates[key] = est[1];
        for (const auto& e : est) conv << ',' << fmt_number(e.point);
        for (const auto& e : est) conv << ',' << fmt_number(e.ci_low) << ',' << fmt_number(e.ci_high);
        conv << '\n';
    }
    write_atomic(bundle.converged_csv, conv.str());

    std::vector<int> config_ids;
    for (const auto& k : requested) {
        if (std::find(config_ids.begin(), config_ids.end(), k.config_id) == config_ids.end()) {
            config_ids.push_back(k.config_id);
        }
    }
    std::ostringstream ov;
    ov << "config,overlap_fraction\n";
    for (int id : config_ids) {
        const auto main_it = iqm_estimates.find({id, RunType::MAIN});
        const auto ctrl_it = iqm_estimates.find({id, RunType::CONTROL});
        ov << id << ',';
        if (main_it == iqm_estimates.end() || ctrl_it == iqm_estimates.end()) {
            ov << "NA\n";
            continue;
        }
        ov << fmt_number(ci_overlap({main_it->second.ci_low, main_it->second.ci_high},
                                    {ctrl_it->second.ci_low, ctrl_it->second.ci_high}))
           << '\n';
    }
    write_atomic(bundle.overlap_csv, ov.str());

    for (const auto& key : requested) {
        const auto it = groups.find(key);
        if (it == groups.end()) continue;
        std::size_t len = it->second.front().curve.size();
        for (const auto& r : it->second) len = std::min(len, r.curve.size());
        std::vector<std::vector<double>> curves;
        for (const auto& r : it->second) curves.emplace_back(r.curve.begin(), r.curve.begin() + static_cast<long>(len));
        const auto curve = efficiency_curve(curves, stats.reps_curve, group_seed(stats, key, hash_name("curve")));
        std::ostringstream cs;
        cs << "epoch,iqm,ci_lo,ci_hi\n";
        for (std::size_t e = 0; e < curve.size(); ++e) {
            cs << e << ',' << fmt_number(curve.iqm[e]) << ',' << fmt_number(curve.ci_low[e]) << ','
               << fmt_number(curve.ci_high[e]) << '\n';
        }
        const auto path = out_dir / ("curve_" + std::to_string(key.config_id) + "_" + to_string(key.type) + ".csv");
        write_atomic(path, cs.str());
        bundle.curve_csvs.push_back(path);
    }

    ordered_json m;
    m["format"] = "tbench-report";
    m["code_version"] = code_version();
    m["config_hash"] = expected_hash.empty() && hashes.size() == 1 ? *hashes.begin() : expected_hash;
    m["run_config_hashes"] = std::vector<std::string>(hashes.begin(), hashes.end());
    m["hash_consistent"] = hashes.size() <= 1 && (expected_hash.empty() || hashes.empty() ||
                                                   *hashes.begin() == expected_hash);
    m["runs"] = files.size();
    m["stats"] = {{"bins", stats.bins},
                  {"reps_converged", stats.reps_converged},
                  {"reps_curve", stats.reps_curve},
                  {"seed", stats.seed}};
    m["absent_groups"] = bundle.absent_groups;
    std::vector<std::string> outputs = {bundle.converged_csv.filename().string(),
                                        bundle.overlap_csv.filename().string()};
    for (const auto& p : bundle.curve_csvs) outputs.push_back(p.filename().string());
    m["files"] = outputs;
    write_atomic(bundle.manifest, m.dump(1) + "\n");
    return bundle;
}

}  // namespace tbench
