#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace cnslab::cli {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Key-value tree with [section] headers, "key = value" lines and # comments. Values are
// numbers, true/false, quoted strings or [a, b, ...] lists of numbers or strings.
class Config {
public:
    static Config parse(std::istream& in, const std::string& origin)
    {
        Config c;
        c.origin_ = origin;
        try {
            boost::property_tree::ini_parser::read_ini(in, c.tree_);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
        }
        return c;
    }

    static Config load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in)
            throw std::ios_base::failure("cannot open config " + path);
        return parse(in, path);
    }

    const std::string& origin() const { return origin_; }

    bool has(const std::string& key) const { return raw(key).has_value(); }

    double number(const std::string& key) const
    {
        const std::string v = require(key);
        double x = 0.0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc() || p != v.data() + v.size())
            fail(key, "expected a number, got '" + v + "'");
        if (!std::isfinite(x))
            fail(key, "must be finite");
        return x;
    }

    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    int integer(const std::string& key) const
    {
        const double x = number(key);
        if (x != std::floor(x) || std::abs(x) > 1e9)
            fail(key, "expected an integer");
        return static_cast<int>(x);
    }

    int integer(const std::string& key, int fallback) const { return has(key) ? integer(key) : fallback; }

    bool boolean(const std::string& key, bool fallback) const
    {
        if (!has(key))
            return fallback;
        const std::string v = require(key);
        if (v == "true")
            return true;
        if (v == "false")
            return false;
        fail(key, "expected true or false, got '" + v + "'");
    }

    std::string string(const std::string& key) const { return unquote(key, require(key)); }
    std::string string(const std::string& key, const std::string& fallback) const
    {
        return has(key) ? string(key) : fallback;
    }

    std::vector<std::string> list(const std::string& key) const
    {
        std::string v = require(key);
        if (v.size() < 2 || v.front() != '[' || v.back() != ']')
            fail(key, "expected a [..] list");
        std::vector<std::string> out;
        std::string item;
        bool quoted = false;
        for (size_t i = 1; i + 1 < v.size(); ++i) {
            const char ch = v[i];
            if (ch == '"')
                quoted = !quoted;
            if (ch == ',' && !quoted) {
                out.push_back(trim(item));
                item.clear();
            } else {
                item += ch;
            }
        }
        if (!trim(item).empty())
            out.push_back(trim(item));
        for (auto& s : out)
            if (!s.empty() && s.front() == '"')
                s = unquote(key, s);
        return out;
    }

    std::vector<double> numbers(const std::string& key) const
    {
        std::vector<double> out;
        for (const auto& s : list(key)) {
            double x = 0.0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
            if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(x))
                fail(key, "list entry '" + s + "' is not a finite number");
            out.push_back(x);
        }
        return out;
    }

    // keys present in the file that no reader asked for
    std::vector<std::string> unused() const
    {
        std::vector<std::string> out;
        for (const auto& [k, v] : tree_) {
            if (v.empty()) {
                if (!seen_.count(k))
                    out.push_back(k);
                continue;
            }
            for (const auto& [k2, v2] : v)
                if (!seen_.count(k + "." + k2))
                    out.push_back(k + "." + k2);
        }
        return out;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const
    {
        throw ConfigError(origin_ + ": field " + key + ": " + what);
    }

private:
    boost::property_tree::ptree tree_;
    std::string origin_;
    mutable std::set<std::string> seen_;

    static std::string trim(const std::string& s)
    {
        const auto b = s.find_first_not_of(" \t");
        if (b == std::string::npos)
            return {};
        return s.substr(b, s.find_last_not_of(" \t") - b + 1);
    }

    std::optional<std::string> raw(const std::string& key) const
    {
        auto v = tree_.get_optional<std::string>(key);
        if (!v)
            return std::nullopt;
        seen_.insert(key);
        std::string s = *v;
        bool quoted = false;
        for (size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"')
                quoted = !quoted;
            if (s[i] == '#' && !quoted) {
                s.resize(i);
                break;
            }
        }
        return trim(s);
    }

    std::string require(const std::string& key) const
    {
        auto v = raw(key);
        if (!v || v->empty())
            fail(key, "missing");
        return *v;
    }

    std::string unquote(const std::string& key, const std::string& v) const
    {
        if (v.size() < 2 || v.front() != '"' || v.back() != '"')
            fail(key, "expected a quoted string, got '" + v + "'");
        return v.substr(1, v.size() - 2);
    }
};

} // namespace cnslab::cli
