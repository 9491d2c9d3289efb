#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "proxyrec/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"proxy-based item representation recommender"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    bool has_seed = false;
    std::uint64_t seed = 0;

    for (const auto& name : {"prepare", "train", "eval", "analyze", "export"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("config", config_path, "experiment config file")->required();
        sub->add_option("--override", overrides, "section.key=value, wins over the file");
        sub->add_option("--seed", seed, "run seed (sets train.seed and eval.seed)")
            ->each([&](const std::string&) { has_seed = true; });
    }

    CLI11_PARSE(app, argc, argv);

    if (has_seed) {
        overrides.push_back("train.seed=" + std::to_string(seed));
        overrides.push_back("eval.seed=" + std::to_string(seed));
    }
    const std::string subcommand = app.get_subcommands().front()->get_name();
    return proxyrec::cli::run_command(subcommand, config_path, overrides, std::cout, std::cerr);
}
