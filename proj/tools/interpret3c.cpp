#include "interpret3c/config.hpp"
#include "interpret3c/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace {

struct Options {
    std::string config_path;
    std::string output_override;
    int threads_flag = 0; // 0 = not given
    std::vector<std::string> sets;
};

std::vector<std::pair<std::string, std::string>> collect_overrides(const Options& opt) {
    std::vector<std::pair<std::string, std::string>> overrides;
    if (const char* env = std::getenv("INTERPRET3C_THREADS"); env && *env)
        overrides.emplace_back("runtime.threads", env);
    for (const auto& kv : opt.sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw i3c::ConfigError("--set expects section.key=value, got '" + kv + "'");
        overrides.emplace_back(i3c::trim(kv.substr(0, eq)), i3c::trim(kv.substr(eq + 1)));
    }
    if (!opt.output_override.empty()) overrides.emplace_back("paths.output", opt.output_override);
    if (opt.threads_flag > 0)
        overrides.emplace_back("runtime.threads", std::to_string(opt.threads_flag));
    return overrides;
}

void add_common(CLI::App* cmd, Options& opt) {
    cmd->add_option("--config", opt.config_path, "pipeline configuration file")->required();
    cmd->add_option("--output", opt.output_override, "override the output directory");
    cmd->add_option("--threads", opt.threads_flag, "worker thread cap (also INTERPRET3C_THREADS)");
    cmd->add_option("--set", opt.sets, "override any config key, e.g. --set train.epochs=10")
        ->take_all();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"interpret3c: interpretable student clustering pipeline"};
    app.require_subcommand(1);

    Options opt;
    std::string stage;
    for (const char* name : {"simulate", "extract", "train", "cluster", "report", "pipeline"}) {
        CLI::App* cmd = app.add_subcommand(
            name, std::string("run the ") + name + (std::string(name) == "pipeline"
                                                        ? " (extract, train, cluster, report)"
                                                        : " stage"));
        add_common(cmd, opt);
        cmd->callback([&stage, name] { stage = name; });
    }

    std::string init_path;
    CLI::App* init = app.add_subcommand("init-config", "write a default configuration file");
    init->add_option("path", init_path, "destination file")->required();
    init->callback([&stage] { stage = "init-config"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (stage == "init-config") {
            std::ofstream out(init_path);
            if (!out) {
                std::cerr << "config error: cannot write " << init_path << "\n";
                return 2;
            }
            out << i3c::config::default_config_text();
            return 0;
        }
        i3c::config::PipelineConfig config =
            i3c::config::load_config(opt.config_path, collect_overrides(opt));
        i3c::pipeline::run_stage(stage, config);
        return 0;
    } catch (const i3c::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const i3c::pipeline::StageFailure& e) {
        std::cerr << "error stage=" << e.stage << " cause=" << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error stage=" << stage << " cause=" << e.what() << "\n";
        return 1;
    }
}
