#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/version.h>

#include "gexse/error.hpp"

namespace cli {

using nlohmann::json;

// Registers flags that may also come from a JSON config file. A key in the
// file is the flag name without dashes ("batch-size": 64). Flags given on
// the command line win over the file, the file wins over defaults.
class Options {
public:
    explicit Options(CLI::App* app) : app_(app) {
        app_->add_option("--config", config_path_, "JSON file with defaults for any flag of this command")
            ->check(CLI::ExistingFile);
    }

    template <typename T>
    CLI::Option* add(const std::string& name, T& var, const std::string& help) {
        CLI::Option* opt = app_->add_option("--" + name, var, help)->capture_default_str();
        keys_.insert(name);
        apply_.push_back([opt, &var, name](const json& j) {
            if (opt->count() > 0 || !j.contains(name)) return;
            try {
                var = j.at(name).get<T>();
            } catch (const json::exception& e) {
                gexse::throw_usage("config key '" + name + "': " + e.what());
            }
        });
        echo_.push_back([&var, name](json& out) { out[name] = var; });
        return opt;
    }

    CLI::App* app() const { return app_; }

    // Call after parsing.
    void resolve() {
        if (config_path_.empty()) return;
        std::ifstream in(config_path_);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            gexse::throw_usage("cannot parse config " + config_path_ + ": " + e.what());
        }
        if (!j.is_object()) gexse::throw_usage("config " + config_path_ + " must hold a JSON object");
        for (const auto& [k, _] : j.items())
            if (!keys_.count(k)) gexse::throw_usage("config " + config_path_ + ": unknown key '" + k + "' for '" + app_->get_name() + "'");
        for (auto& f : apply_) f(j);
    }

    json effective() const {
        json out = json::object();
        for (const auto& f : echo_) f(out);
        if (!config_path_.empty()) out["config"] = config_path_;
        return out;
    }

private:
    CLI::App* app_;
    std::string config_path_;
    std::set<std::string> keys_;
    std::vector<std::function<void(const json&)>> apply_;
    std::vector<std::function<void(json&)>> echo_;
};

// run_manifest.json written next to a command's outputs.
class RunManifest {
public:
    RunManifest(std::string command, json config, std::uint64_t seed)
        : command_(std::move(command)), config_(std::move(config)), seed_(seed), start_(clock::now()) {}

    template <typename F>
    auto timed(const std::string& phase, F&& f) {
        const auto t0 = clock::now();
        struct Record {
            RunManifest* m;
            std::string phase;
            clock::time_point t0;
            ~Record() { m->timings_[phase] = std::chrono::duration<double>(clock::now() - t0).count(); }
        } rec{this, phase, t0};
        return f();
    }

    json& results() { return results_; }
    void output(const std::filesystem::path& p) { outputs_.push_back(p.filename().string()); }

    void write(const std::filesystem::path& dir) const {
        json j;
        j["schema"] = "gexse.run_manifest";
        j["version"] = 1;
        j["command"] = command_;
        j["seed"] = seed_;
        j["config"] = config_;
        j["versions"] = versions();
        j["timings_s"] = timings_;
        j["timings_s"]["total"] = std::chrono::duration<double>(clock::now() - start_).count();
        j["outputs"] = outputs_;
        j["results"] = results_;
        std::filesystem::create_directories(dir);
        std::ofstream os(dir / "run_manifest.json");
        if (!os) gexse::throw_data("cannot write " + (dir / "run_manifest.json").string());
        os << j.dump(2) << '\n';
    }

    static json versions() {
        return {{"gexse", GEXSE_VERSION},
                {"compiler", __VERSION__},
                {"cxx_standard", __cplusplus},
                {"cli11", CLI11_VERSION},
                {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                {"spdlog", std::to_string(SPDLOG_VER_MAJOR) + "." + std::to_string(SPDLOG_VER_MINOR) + "." +
                               std::to_string(SPDLOG_VER_PATCH)}};
    }

private:
    using clock = std::chrono::steady_clock;
    std::string command_;
    json config_;
    std::uint64_t seed_;
    clock::time_point start_;
    json timings_ = json::object();
    std::vector<std::string> outputs_;
    json results_ = json::object();
};

}  // namespace cli
