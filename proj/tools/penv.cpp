#include <CLI11.hpp>
#include <iostream>

#include "penv/penv.hpp"

namespace {

int report(const penv::Error& e) {
    std::cerr << "penv: " << e.what() << "\n";
    return penv::exit_code_for(e.code());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"penv: Poisson envelopes by analytic disc search"};
    app.require_subcommand(1);

    std::string config, out_dir = ".";
    std::size_t threads = 1;
    bool quiet = false;
    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", config, "INI config file");
        if (config_required) opt->required();
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        sub->add_option("--threads", threads, "worker threads (0 = all cores)")->capture_default_str();
        sub->add_flag("--quiet", quiet, "no progress output");
    };

    std::vector<std::pair<CLI::App*, penv::Mode>> runs;
    for (auto [name, mode, help] : {std::tuple{"envelope", penv::Mode::Envelope, "envelope values on a point grid"},
                                    std::tuple{"hull", penv::Mode::Hull, "psh-hull membership certificate"},
                                    std::tuple{"oracle", penv::Mode::Oracle, "grid obstacle oracle and comparison table"},
                                    std::tuple{"verify", penv::Mode::Verify, "re-check a stored hull certificate"}}) {
        auto* sub = app.add_subcommand(name, help);
        add_common(sub, true);
        runs.push_back({sub, mode});
    }
    auto* cex = app.add_subcommand("counterexample", "built-in zw = 0 example with the submean report");
    add_common(cex, false);
    std::uint64_t cex_seed = 0;
    cex->add_option("--seed", cex_seed, "seed when no config is given")->capture_default_str();

    auto* diff = app.add_subcommand("diff", "compare two runs (results.json or manifest.json)");
    std::string da, db;
    double tol = 0.0;
    bool strict = false;
    diff->add_option("a", da, "first run")->required();
    diff->add_option("b", db, "second run")->required();
    diff->add_option("--tol", tol, "tolerance on value differences")->capture_default_str();
    diff->add_flag("--strict", strict, "exit 1 when any value differs beyond the tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (diff->parsed()) {
            const auto rep = penv::diff_runs(da, db, tol);
            std::cout << (rep.byte_identical ? "identical" : "different") << ": " << rep.compared << " values compared, "
                      << rep.entries.size() << " beyond tol, max |diff| " << penv::io::format_double(rep.max_abs_diff)
                      << "\n";
            for (const auto& e : rep.entries)
                std::cout << "  point " << e.index << " " << e.field << ": " << penv::io::format_double(e.a) << " vs "
                          << penv::io::format_double(e.b) << "\n";
            return strict && !rep.empty() ? 1 : 0;
        }
        penv::RunConfig cfg;
        if (cex->parsed()) {
            cfg = config.empty() ? penv::counterexample_config(cex_seed) : penv::load_counterexample(config);
        } else {
            for (auto& [sub, mode] : runs)
                if (sub->parsed()) cfg = penv::load_config(config, mode);
        }
        penv::RunOptions o{out_dir, threads, quiet};
        const auto out = penv::run(cfg, o);
        if (out.exit_code != 0) std::cerr << "penv: " << out.message << "\n";
        return out.exit_code;
    } catch (const penv::Error& e) {
        return report(e);
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "penv: " << e.what() << "\n";
        return 2;
    }
}
