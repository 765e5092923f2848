#pragma once

#include "scenarios.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <thread>

namespace cnslab::cli {

enum ExitCode { exit_ok = 0, exit_failure = 1, exit_validation = 2, exit_divergence = 3, exit_degeneracy = 4, exit_io = 5 };

inline int exit_code_of(const std::exception_ptr& e)
{
    try {
        std::rethrow_exception(e);
    } catch (const DegeneracyError&) {
        return exit_degeneracy;
    } catch (const NumericalError&) {
        return exit_divergence;
    } catch (const IoError&) {
        return exit_io;
    } catch (const std::ios_base::failure&) {
        return exit_io;
    } catch (const std::filesystem::filesystem_error&) {
        return exit_io;
    } catch (const std::invalid_argument&) {
        return exit_validation;
    } catch (const DataError&) {
        return exit_validation;
    } catch (...) {
        return exit_failure;
    }
}

inline std::string describe(const std::exception_ptr& e)
{
    try {
        std::rethrow_exception(e);
    } catch (const std::exception& x) {
        return x.what();
    } catch (...) {
        return "unknown error";
    }
}

struct RunOptions {
    std::optional<std::filesystem::path> output_dir; // overrides [output] dir
    std::optional<std::filesystem::path> golden_dir; // default: <config dir>/goldens
};

struct RunOutcome {
    int code = exit_ok;
    std::string message;
    std::optional<RunReport> report;
    std::vector<std::filesystem::path> written;
};

inline std::filesystem::path golden_dir_for(const std::filesystem::path& config, const RunOptions& o)
{
    return o.golden_dir.value_or(config.parent_path() / "goldens");
}

inline RunOutcome run_config(const std::filesystem::path& config, const RunOptions& o = {})
{
    RunOutcome out;
    std::string context = config.string();
    try {
        const Scenario sc = load_scenario(config.string());
        context = sc.name + " (" + sc.kind + ", " + config.string() + ")";
        RunReport r = run_scenario(sc);
        const auto gpath = golden_dir_for(config, o) / (sc.name + ".json");
        if (std::filesystem::exists(gpath))
            apply_goldens(r, nlohmann::ordered_json::parse(read_text(gpath)));
        out.written = emit_report(r, o.output_dir.value_or(sc.output_dir), sc.formats);
        out.message = context + ": " + (r.passed() ? "all checks passed" : "some checks failed");
        out.report = std::move(r);
    } catch (...) {
        auto e = std::current_exception();
        out.code = exit_code_of(e);
        out.message = context + ": " + describe(e);
    }
    return out;
}

inline int worker_count()
{
    if (const char* w = std::getenv("CNSLAB_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(w, &end, 10);
        if (end != w && *end == '\0' && v >= 1 && v <= 256)
            return static_cast<int>(v);
    }
    return 1;
}

inline std::vector<std::filesystem::path> configs_in(const std::filesystem::path& dir)
{
    std::vector<std::filesystem::path> out;
    std::error_code ec;
    for (std::filesystem::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec))
        if (it->is_regular_file() && it->path().extension() == ".toml")
            out.push_back(it->path());
    if (ec)
        throw IoError("cannot list " + dir.string() + ": " + ec.message());
    std::sort(out.begin(), out.end());
    return out;
}

// results in file-name order whatever the worker count
inline std::vector<RunOutcome> run_batch(const std::filesystem::path& dir, int workers, const RunOptions& o = {})
{
    const auto files = configs_in(dir);
    std::vector<RunOutcome> results(files.size());
    std::atomic<size_t> next{0};
    auto work = [&] {
        for (size_t i = next++; i < files.size(); i = next++)
            results[i] = run_config(files[i], o);
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < std::min<int>(workers, static_cast<int>(files.size())); ++w)
        pool.emplace_back(work);
    work();
    for (auto& t : pool)
        t.join();
    return results;
}

inline int batch_code(const std::vector<RunOutcome>& results)
{
    int code = exit_ok;
    for (const auto& r : results)
        code = std::max(code, r.code);
    return code;
}

// reruns every config of the directory and freezes its golden summary values
inline int update_goldens(const std::filesystem::path& dir, double rel_tol, const RunOptions& o, std::ostream& log)
{
    int code = exit_ok;
    for (const auto& file : configs_in(dir)) {
        try {
            const Scenario sc = load_scenario(file.string());
            const RunReport r = run_scenario(sc);
            const auto path = golden_dir_for(file, o) / (sc.name + ".json");
            write_atomic(path, make_golden(r, golden_keys(sc.kind), rel_tol).dump(2) + "\n");
            log << "golden " << path.string() << "\n";
        } catch (...) {
            auto e = std::current_exception();
            code = std::max(code, exit_code_of(e));
            log << file.string() << ": " << describe(e) << "\n";
        }
    }
    return code;
}

} // namespace cnslab::cli
