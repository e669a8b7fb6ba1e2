#include "eflow/commands.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"Simulate and certify elapsed-time neuron population models"};
    std::string command;
    std::string config;
    std::optional<long long> threads;
    std::optional<std::string> out_dir;

    app.add_option("command", command, "simulate | equilibrium | certify | sweep")
        ->required()
        ->check(CLI::IsMember({"simulate", "equilibrium", "certify", "sweep"}));
    app.add_option("--config", config, "JSON run configuration")->required();
    app.add_option("--threads", threads, "worker cap (fallback: ELAPSED_FLOW_THREADS, else 1)");
    app.add_option("--out", out_dir, "output directory (default: out_dir from the config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : eflow::kExitConfig;
    }

    unsigned n_threads = 1;
    try {
        n_threads = eflow::resolve_threads(threads, std::getenv("ELAPSED_FLOW_THREADS"));
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return eflow::kExitConfig;
    }
    return eflow::run_command(command, config, out_dir, n_threads, std::cout, std::cerr);
}
