#pragma once

#include <json.hpp>

#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <system_error>
#include <vector>

#include <unistd.h>

namespace cnslab::cli {

inline constexpr const char* kSchema = "cnslab.report/1";

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Check {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string relation; // how value is compared to threshold, e.g. "<=", ">="

    bool operator==(const Check&) const = default;
};

struct Golden {
    double value = 0.0;
    double rel_tol = 0.0;
    double measured = 0.0;
    bool pass = false;

    bool operator==(const Golden&) const = default;
};

struct RunReport {
    std::string schema = kSchema;
    std::string scenario;
    std::string kind;
    std::uint64_t seed = 0;
    std::vector<std::string> columns{"time"};
    std::vector<std::vector<double>> rows;          // one per time sample, columns[0] is time
    std::map<std::string, double> summary;
    std::vector<Check> checks;
    std::map<std::string, Golden> goldens;

    void check(const std::string& name, double value, const std::string& relation, double threshold)
    {
        bool ok = false;
        if (relation == "<=")
            ok = value <= threshold;
        else if (relation == ">=")
            ok = value >= threshold;
        else if (relation == "<")
            ok = value < threshold;
        else if (relation == ">")
            ok = value > threshold;
        else if (relation == "==")
            ok = value == threshold;
        else
            throw std::logic_error("report: unknown relation " + relation);
        checks.push_back({name, ok, value, threshold, relation});
    }

    bool passed() const
    {
        for (const auto& c : checks)
            if (!c.pass)
                return false;
        for (const auto& [k, g] : goldens)
            if (!g.pass)
                return false;
        return true;
    }

    std::vector<double> times() const
    {
        std::vector<double> t;
        for (const auto& r : rows)
            t.push_back(r.front());
        return t;
    }

    bool operator==(const RunReport&) const = default;
};

// shortest representation that reads back to the same double
inline std::string format_number(double x)
{
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

namespace detail {

inline nlohmann::ordered_json number_json(double x)
{
    if (std::isfinite(x))
        return x;
    return format_number(x);
}

inline double json_number(const nlohmann::ordered_json& j)
{
    if (j.is_number())
        return j.get<double>();
    const std::string s = j.get<std::string>();
    if (s == "nan")
        return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf")
        return std::numeric_limits<double>::infinity();
    if (s == "-inf")
        return -std::numeric_limits<double>::infinity();
    throw std::invalid_argument("report: bad number " + s);
}

} // namespace detail

inline nlohmann::ordered_json to_json(const RunReport& r)
{
    using nlohmann::ordered_json;
    ordered_json j;
    j["schema"] = r.schema;
    j["scenario"] = r.scenario;
    j["kind"] = r.kind;
    j["seed"] = r.seed;
    j["columns"] = r.columns;
    ordered_json rows = ordered_json::array();
    for (const auto& row : r.rows) {
        ordered_json a = ordered_json::array();
        for (double x : row)
            a.push_back(detail::number_json(x));
        rows.push_back(std::move(a));
    }
    j["rows"] = std::move(rows);
    ordered_json s = ordered_json::object();
    for (const auto& [k, v] : r.summary)
        s[k] = detail::number_json(v);
    j["summary"] = std::move(s);
    ordered_json checks = ordered_json::array();
    for (const auto& c : r.checks)
        checks.push_back({{"name", c.name},
                          {"pass", c.pass},
                          {"value", detail::number_json(c.value)},
                          {"relation", c.relation},
                          {"threshold", detail::number_json(c.threshold)}});
    j["checks"] = std::move(checks);
    ordered_json g = ordered_json::object();
    for (const auto& [k, v] : r.goldens)
        g[k] = {{"value", detail::number_json(v.value)},
                {"rel_tol", detail::number_json(v.rel_tol)},
                {"measured", detail::number_json(v.measured)},
                {"pass", v.pass}};
    j["goldens"] = std::move(g);
    j["passed"] = r.passed();
    return j;
}

inline RunReport from_json(const nlohmann::ordered_json& j)
{
    RunReport r;
    r.schema = j.at("schema").get<std::string>();
    if (r.schema != kSchema)
        throw std::invalid_argument("report: schema " + r.schema + " does not match " + kSchema);
    r.scenario = j.at("scenario").get<std::string>();
    r.kind = j.at("kind").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.columns = j.at("columns").get<std::vector<std::string>>();
    for (const auto& row : j.at("rows")) {
        std::vector<double> v;
        for (const auto& x : row)
            v.push_back(detail::json_number(x));
        r.rows.push_back(std::move(v));
    }
    for (const auto& [k, v] : j.at("summary").items())
        r.summary[k] = detail::json_number(v);
    for (const auto& c : j.at("checks"))
        r.checks.push_back({c.at("name").get<std::string>(), c.at("pass").get<bool>(), detail::json_number(c.at("value")),
                            detail::json_number(c.at("threshold")), c.at("relation").get<std::string>()});
    for (const auto& [k, v] : j.at("goldens").items())
        r.goldens[k] = {detail::json_number(v.at("value")), detail::json_number(v.at("rel_tol")),
                        detail::json_number(v.at("measured")), v.at("pass").get<bool>()};
    return r;
}

inline std::string to_csv(const RunReport& r)
{
    std::string out;
    for (size_t i = 0; i < r.columns.size(); ++i)
        out += (i ? "," : "") + r.columns[i];
    out += '\n';
    for (const auto& row : r.rows) {
        if (row.size() != r.columns.size())
            throw std::logic_error("report: row width differs from the header");
        for (size_t i = 0; i < row.size(); ++i)
            out += (i ? "," : "") + format_number(row[i]);
        out += '\n';
    }
    return out;
}

inline std::string to_json_text(const RunReport& r) { return to_json(r).dump(2) + "\n"; }

// temp file in the target directory, then rename over the destination
inline void write_atomic(const std::filesystem::path& path, const std::string& text)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec)
            throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    fs::path tmp = path;
    static std::atomic<unsigned> serial{0};
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(serial++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot open " + tmp.string() + " for writing");
        out << text;
        out.flush();
        if (!out)
            throw IoError("write failed on " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

inline std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

enum class Format { csv, json };

inline std::vector<std::filesystem::path> emit_report(const RunReport& r, const std::filesystem::path& dir,
                                                      const std::vector<Format>& formats)
{
    std::vector<std::filesystem::path> written;
    for (Format f : formats) {
        const auto path = dir / (r.scenario + (f == Format::csv ? ".csv" : ".json"));
        write_atomic(path, f == Format::csv ? to_csv(r) : to_json_text(r));
        written.push_back(path);
    }
    return written;
}

} // namespace cnslab::cli
