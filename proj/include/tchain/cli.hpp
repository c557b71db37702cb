#pragma once

#include "config.hpp"

#include <string>
#include <vector>

namespace tchain::cli {

struct StageStatus {
    std::string name;
    std::string status; // ok, failed, skipped
    std::string message;
    double seconds = 0; // wall clock; kept out of the written report
};

struct RunReport {
    std::string command;
    std::string scenario;
    std::vector<StageStatus> stages;
    std::vector<std::string> artifacts;
    std::vector<std::string> warnings;
    io::json summary = io::json::object();
    int exit_code = 0;
};

struct Options {
    std::string out_dir; // empty: the config's out field
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

io::json to_json(const RunReport& r);

RunReport cmd_analyze(const ScenarioConfig& cfg, const Options& opt);
RunReport cmd_chain(const ScenarioConfig& cfg, const Options& opt);
RunReport cmd_horseshoe(const ScenarioConfig& cfg, const Options& opt);
RunReport cmd_plotdata(const std::string& artifact, const Options& opt);

// Full command line front end; returns the process exit code.
int run(int argc, char** argv);

} // namespace tchain::cli
