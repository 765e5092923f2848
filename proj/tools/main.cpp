#include "runner.hpp"

#include <CLI11.hpp>
#include <cnslab/runtime.hpp>

using namespace cnslab::cli;

int main(int argc, char** argv)
{
    cnslab::pin_blas_environment(argv);

    CLI::App app{"cnslab scenario runner"};
    app.require_subcommand(1);
    std::string out_dir, golden_dir;
    app.add_option("--out", out_dir, "output directory, overrides [output] dir");
    app.add_option("--goldens", golden_dir, "golden directory, default <config dir>/goldens");

    std::string config;
    auto* run = app.add_subcommand("run", "run one scenario config");
    run->add_option("config", config, "scenario file")->required();

    std::string batch_dir;
    auto* batch = app.add_subcommand("batch", "run every *.toml of a directory (workers from CNSLAB_WORKERS)");
    batch->add_option("dir", batch_dir, "config directory")->required();

    std::string golden_configs = "configs";
    bool update = false;
    double rel_tol = 1e-6;
    auto* goldens = app.add_subcommand("goldens", "check or refreeze golden values");
    goldens->add_option("dir", golden_configs, "config directory")->capture_default_str();
    goldens->add_flag("--update", update, "rewrite the golden files from fresh runs");
    goldens->add_option("--rel-tol", rel_tol, "relative tolerance stored with new goldens")->capture_default_str();

    app.add_subcommand("list-kinds", "print the scenario kinds");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_validation;
    }

    RunOptions o;
    if (!out_dir.empty())
        o.output_dir = out_dir;
    if (!golden_dir.empty())
        o.golden_dir = golden_dir;

    auto print = [](const RunOutcome& r) {
        (r.code == exit_ok ? std::cout : std::cerr) << (r.code == exit_ok ? "ok   " : "error ") << r.message << "\n";
        if (r.report)
            for (const auto& c : r.report->checks)
                std::cout << "  " << (c.pass ? "PASS " : "FAIL ") << c.name << " " << format_number(c.value) << " "
                          << c.relation << " " << format_number(c.threshold) << "\n";
    };

    if (app.got_subcommand("list-kinds")) {
        for (const auto& k : kinds())
            std::cout << k << "\n";
        return exit_ok;
    }
    if (run->parsed()) {
        RunOutcome r = run_config(config, o);
        print(r);
        return r.code;
    }
    if (batch->parsed()) {
        try {
            auto results = run_batch(batch_dir, worker_count(), o);
            for (const auto& r : results)
                print(r);
            return batch_code(results);
        } catch (...) {
            auto e = std::current_exception();
            std::cerr << describe(e) << "\n";
            return exit_code_of(e);
        }
    }
    if (goldens->parsed()) {
        try {
            if (update)
                return update_goldens(golden_configs, rel_tol, o, std::cout);
            int code = exit_ok;
            for (const auto& r : run_batch(golden_configs, worker_count(), o)) {
                print(r);
                code = std::max(code, r.code);
                if (r.report)
                    for (const auto& [k, g] : r.report->goldens) {
                        std::cout << "  " << (g.pass ? "PASS " : "FAIL ") << "golden " << k << " "
                                  << format_number(g.measured) << " vs " << format_number(g.value) << "\n";
                        if (!g.pass)
                            code = std::max(code, static_cast<int>(exit_failure));
                    }
            }
            return code;
        } catch (...) {
            auto e = std::current_exception();
            std::cerr << describe(e) << "\n";
            return exit_code_of(e);
        }
    }
    return exit_ok;
}
