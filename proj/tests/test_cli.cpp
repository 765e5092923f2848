#include <runner.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace cnslab;
using namespace cnslab::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    fs::path p = fs::temp_directory_path() / ("cnslab_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& file, const std::string& text)
{
    write_atomic(dir / file, text);
    return dir / file;
}

RunOptions options(const fs::path& out)
{
    RunOptions o;
    o.output_dir = out;
    return o;
}

Config parse(const std::string& text)
{
    std::istringstream in(text);
    return Config::parse(in, "inline");
}

const char* kBesov = R"(name = "b"
kind = "besov_check"
seed = 4
[grid]
n = 16
[besov]
p = 2.0
s = 0.5
)";

} // namespace

TEST(Config, TypedValues)
{
    Config c = parse("name = \"x\" # trailing\n[grid]\nn = 16\nlength = 2.5\n[out]\nlist = [\"a\", \"b,c\"]\nnums = [1, 2.5]\nflag = true\n");
    EXPECT_EQ(c.string("name"), "x");
    EXPECT_EQ(c.integer("grid.n"), 16);
    EXPECT_DOUBLE_EQ(c.number("grid.length"), 2.5);
    EXPECT_EQ(c.list("out.list"), (std::vector<std::string>{"a", "b,c"}));
    EXPECT_EQ(c.numbers("out.nums"), (std::vector<double>{1.0, 2.5}));
    EXPECT_TRUE(c.boolean("out.flag", false));
    EXPECT_EQ(c.number("grid.missing", 3.0), 3.0);
    EXPECT_TRUE(c.unused().empty());
}

TEST(Config, Diagnostics)
{
    try {
        parse("[grid\nn = 1\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("inline:1"), std::string::npos) << e.what();
    }
    Config c = parse("[grid]\nn = 1.5\nm = abc\n");
    EXPECT_THROW(c.integer("grid.n"), ConfigError);
    try {
        c.number("grid.m");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("field grid.m"), std::string::npos) << e.what();
    }
}

TEST(Scenario, RejectsInadmissibleP)
{
    std::string text = kBesov;
    text.replace(text.find("p = 2.0"), 7, "p = 0.5");
    try {
        parse_scenario(parse(text));
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("p must be in (1, inf)"), std::string::npos) << e.what();
    }
    const fs::path dir = scratch("badp");
    RunOutcome r = run_config(write_config(dir, "bad.toml", text), options(dir / "out"));
    EXPECT_EQ(r.code, exit_validation);
    EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Scenario, KindSpecificFieldsRequired)
{
    EXPECT_THROW(parse_scenario(parse("name = \"g\"\nkind = \"global_small\"\n[grid]\nn = 8\n[coefficients]\nmu = 1\nlambda = 0\n")),
                 ConfigError);
    EXPECT_THROW(parse_scenario(parse("name = \"g\"\nkind = \"nope\"\n[grid]\nn = 8\n")), ConfigError);
    EXPECT_THROW(parse_scenario(parse(std::string(kBesov) + "typo = 1\n")), ConfigError);
    EXPECT_NO_THROW(parse_scenario(parse(kBesov)));
}

TEST(Report, EmptySeriesIsHeaderOnly)
{
    RunReport r;
    r.columns = {"time", "norm", "contraction"};
    EXPECT_EQ(to_csv(r), "time,norm,contraction\n");
}

TEST(Report, JsonRoundTrip)
{
    RunReport r;
    r.scenario = "rt";
    r.kind = "linear_decay";
    r.seed = 123456789012345ull;
    r.columns = {"time", "x"};
    r.rows = {{0.0, 0.1}, {0.1, 1.0 / 3.0}, {0.2, 1e-300}};
    r.summary = {{"a", M_PI}, {"b", -2.5e17}, {"inf", std::numeric_limits<double>::infinity()}};
    r.check("c1", 0.3, "<=", 0.5);
    r.check("c2", 2.0, ">", 3.0);
    r.goldens["a"] = {3.14159, 1e-3, M_PI, true};
    const std::string text = to_json_text(r);
    RunReport back = from_json(nlohmann::ordered_json::parse(text));
    EXPECT_EQ(back, r);
    EXPECT_EQ(to_json_text(back), text);
    EXPECT_FALSE(r.passed());
}

TEST(Report, SchemaMismatchRejected)
{
    RunReport r;
    auto j = to_json(r);
    j["schema"] = "cnslab.report/0";
    EXPECT_THROW(from_json(j), std::invalid_argument);
}

TEST(Report, AtomicWriteLeavesNoTemporaries)
{
    const fs::path dir = scratch("atomic");
    write_atomic(dir / "a.txt", "one");
    write_atomic(dir / "a.txt", "two");
    EXPECT_EQ(read_text(dir / "a.txt"), "two");
    int files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir))
        ++files;
    EXPECT_EQ(files, 1);
    write_atomic(dir / "blocker", "x");
    EXPECT_THROW(write_atomic(dir / "blocker" / "b.txt", "y"), IoError);
}

TEST(Runner, ExitCodes)
{
    auto code = [](auto thrower) {
        try {
            thrower();
        } catch (...) {
            return exit_code_of(std::current_exception());
        }
        return -1;
    };
    EXPECT_EQ(code([] { throw ConfigError("x"); }), exit_validation);
    EXPECT_EQ(code([] { throw DivergenceError("x"); }), exit_divergence);
    EXPECT_EQ(code([] { throw DegeneracyError("x"); }), exit_degeneracy);
    EXPECT_EQ(code([] { throw IoError("x"); }), exit_io);
    EXPECT_EQ(code([] { throw std::runtime_error("x"); }), exit_failure);
}

TEST(Runner, OutputFailureIsIoError)
{
    const fs::path dir = scratch("io");
    write_atomic(dir / "blocker", "x");
    RunOutcome r = run_config(write_config(dir, "b.toml", kBesov), options(dir / "blocker"));
    EXPECT_EQ(r.code, exit_io);
}

TEST(Runner, DeterministicBytes)
{
    const fs::path dir = scratch("det");
    const fs::path cfg = write_config(dir, "b.toml", kBesov);
    RunOutcome a = run_config(cfg, options(dir / "a")), b = run_config(cfg, options(dir / "b"));
    ASSERT_EQ(a.code, exit_ok) << a.message;
    ASSERT_EQ(b.code, exit_ok) << b.message;
    for (const char* f : {"b.csv", "b.json"})
        EXPECT_EQ(read_text(dir / "a" / f), read_text(dir / "b" / f)) << f;
    EXPECT_EQ(a.report->seed, 4u);
    auto j = nlohmann::ordered_json::parse(read_text(dir / "a" / "b.json"));
    EXPECT_EQ(j.at("seed").get<std::uint64_t>(), 4u);
    EXPECT_EQ(from_json(j), *a.report);
}

TEST(Runner, BatchOrderIndependentOfWorkers)
{
    const fs::path dir = scratch("batch");
    write_config(dir, "z.toml", kBesov);
    std::string other = kBesov;
    other.replace(other.find("name = \"b\""), 10, "name = \"c\"");
    write_config(dir, "a.toml", other);
    write_config(dir, "m.toml", "name = broken\n");
    auto one = run_batch(dir, 1, options(dir / "o1")), two = run_batch(dir, 3, options(dir / "o2"));
    ASSERT_EQ(one.size(), 3u);
    EXPECT_EQ(one[0].report->scenario, "c");
    EXPECT_EQ(one[1].code, exit_validation);
    EXPECT_EQ(one[2].report->scenario, "b");
    EXPECT_EQ(batch_code(one), exit_validation);
    for (const char* f : {"b.json", "c.json", "c.csv"})
        EXPECT_EQ(read_text(dir / "o1" / f), read_text(dir / "o2" / f));
}

TEST(Runner, AdversarialGlobalDiverges)
{
    RunOutcome r = run_config(fs::path(CNSLAB_SOURCE_DIR) / "configs/adversarial/global_large.toml",
                              options(scratch("adv")));
    EXPECT_EQ(r.code, exit_divergence) << r.message;
}

TEST(Runner, LameSpectrumMatchesGolden)
{
    const fs::path dir = scratch("golden");
    RunOutcome r = run_config(fs::path(CNSLAB_SOURCE_DIR) / "configs/lame16.toml", options(dir));
    ASSERT_EQ(r.code, exit_ok) << r.message;
    EXPECT_FALSE(r.report->goldens.empty());
    EXPECT_TRUE(r.report->passed());
    EXPECT_GT(r.report->summary.at("spectral_abscissa"), 0.0);
    EXPECT_EQ(r.report->rows.size(), 33u);
}

TEST(Goldens, UpdateRoundTrip)
{
    const fs::path dir = scratch("gup");
    write_config(dir, "b.toml", kBesov);
    std::ostringstream log;
    RunOptions o = options(dir / "out");
    EXPECT_EQ(update_goldens(dir, 1e-9, o, log), exit_ok);
    ASSERT_TRUE(fs::exists(dir / "goldens" / "b.json"));
    RunOutcome r = run_config(dir / "b.toml", o);
    ASSERT_EQ(r.code, exit_ok);
    EXPECT_EQ(r.report->goldens.size(), golden_keys("besov_check").size());
    EXPECT_TRUE(r.report->passed());
    auto g = nlohmann::ordered_json::parse(read_text(dir / "goldens" / "b.json"));
    g["values"]["norm"]["value"] = 2.0 * r.report->summary.at("norm");
    write_atomic(dir / "goldens" / "b.json", g.dump(2));
    RunOutcome bad = run_config(dir / "b.toml", o);
    EXPECT_FALSE(bad.report->passed());
}
