#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "rmv/config.hpp"
#include "rmv/recorder.hpp"

using namespace rmv;
using nlohmann::json;

TEST(Config, CatalogModelWithOverrides) {
    const auto c = parse_config(json::parse(R"({"command": "exit", "seed": 5, "model": "ou-cubic-1d",
        "domain": {"kind": "box", "params": {"lo": [-3], "hi": [5]}}, "params": {"paths": 10}})"));
    EXPECT_EQ(c.command, Command::exit);
    EXPECT_EQ(c.seed, 5u);
    EXPECT_EQ(c.model->model.id, "ou-cubic-1d");
    EXPECT_TRUE(c.model->domain.contains(Vector{4.5}));
    EXPECT_EQ(c.params["paths"], 10);
}

TEST(Config, UnknownKeysAreErrors) {
    EXPECT_THROW(parse_config(json::parse(R"({"seed": 1, "model": "ou-1d", "sed": 2})"), Command::simulate),
                 ConfigError);
    EXPECT_THROW(parse_config(json::parse(R"({"seed": 1, "model": {"dim": 1, "drift": ["0"], "drfit": []},
        "domain": {"kind": "box", "params": {"lo": [0], "hi": [1]}}})"), Command::simulate),
                 ConfigError);
    const json p = json::parse(R"({"dt": 0.1, "dtt": 0.2})");
    EXPECT_THROW(Params(p, "params").allow({"dt"}), ConfigError);
}

TEST(Config, SeedIsMandatoryAndOverridable) {
    const json doc = json::parse(R"({"model": "ou-1d"})");
    EXPECT_THROW(parse_config(doc, Command::simulate), ConfigError);
    EXPECT_EQ(parse_config(doc, Command::simulate, 9u).seed, 9u);
    EXPECT_EQ(parse_config(json::parse(R"({"seed": "0xff", "model": "ou-1d"})"), Command::poc).seed, 255u);
    EXPECT_EQ(parse_config(json::parse(R"({"seed": 18446744073709551615, "model": "ou-1d"})"), Command::poc).seed,
              18446744073709551615ull);
    EXPECT_THROW(parse_config(json::parse(R"({"seed": -1, "model": "ou-1d"})"), Command::poc), ConfigError);
    EXPECT_THROW(parse_config(json::parse(R"({"seed": 1.5, "model": "ou-1d"})"), Command::poc), ConfigError);
}

TEST(Config, CommandMustMatchSubcommand) {
    const json doc = json::parse(R"({"command": "poc", "seed": 1, "model": "ou-1d"})");
    EXPECT_THROW(parse_config(doc, Command::exit), ConfigError);
    EXPECT_EQ(parse_config(doc, Command::poc).command, Command::poc);
    EXPECT_THROW(parse_config(json::parse(R"({"command": "fly", "seed": 1, "model": "ou-1d"})")), ConfigError);
}

TEST(Config, InlineModelNeedsMatchingDomain) {
    const json no_domain = json::parse(R"({"seed": 1, "model": {"dim": 1, "drift": ["-x"]}})");
    EXPECT_THROW(parse_config(no_domain, Command::simulate), ConfigError);
    const json wrong_dim = json::parse(R"({"seed": 1, "model": {"dim": 2, "drift": ["-x1", "-x2"]},
        "domain": {"kind": "box", "params": {"lo": [0], "hi": [1]}}})");
    EXPECT_THROW(parse_config(wrong_dim, Command::simulate), Error);
}

TEST(Params, RangesAndTypes) {
    const json p = json::parse(R"({"dt": -0.1, "N": 3.5, "eps": [0.1, "x"], "flag": 1, "n_list": [4, 16]})");
    const Params P(p, "params");
    EXPECT_THROW(P.positive("dt"), ConfigError);
    EXPECT_THROW(P.count("N"), ConfigError);
    EXPECT_THROW(P.numbers("eps"), ConfigError);
    EXPECT_THROW(P.flag("flag", false), ConfigError);
    EXPECT_THROW(P.number("missing"), ConfigError);
    EXPECT_EQ(P.number("missing", 2.0), 2.0);
    EXPECT_EQ(P.counts("n_list", std::nullopt), (std::vector<std::size_t>{4, 16}));
    EXPECT_THROW(P.number("dt", std::nullopt, 0.0, 1.0), ConfigError);
}

TEST(Config, LoadRejectsMalformedJson) {
    const auto path = std::filesystem::temp_directory_path() / "rmv_bad_config.json";
    std::ofstream(path) << "{\"seed\": 1, \"model\": ";
    EXPECT_THROW(load_config(path.string(), Command::simulate), ConfigError);
    std::ofstream(path) << "// comment\n{\"seed\": 1, \"model\": \"ou-1d\"}";
    EXPECT_EQ(load_config(path.string(), Command::simulate).seed, 1u);
    std::filesystem::remove(path);
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Recorder, CsvHeaderCarriesUnits) {
    EXPECT_EQ(csv_header_positions(2), "t[time],particle_id[index],x1[length],x2[length],k_abs[length]");
    EXPECT_EQ(fmt_double(0.1), "0.10000000000000001");
}

TEST(Recorder, AtomicFileCommitsOrLeavesNothing) {
    const auto dir = std::filesystem::temp_directory_path() / "rmv_atomic_test";
    std::filesystem::create_directories(dir);
    {
        AtomicFile f(dir / "a.txt");
        f.stream() << "partial";
        EXPECT_FALSE(std::filesystem::exists(dir / "a.txt"));
    }
    EXPECT_FALSE(std::filesystem::exists(dir / "a.txt"));
    EXPECT_FALSE(std::filesystem::exists(dir / "a.txt.tmp"));
    {
        AtomicFile f(dir / "b.txt");
        f.stream() << "done";
        f.commit();
    }
    std::ifstream in(dir / "b.txt");
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), "done");
    std::filesystem::remove_all(dir);
}
