#include "hfgn/checkpoint.hpp"
#include "hfgn/cli.hpp"
#include "hfgn/config.hpp"
#include "hfgn/log.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

using namespace hfgn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("hfgn_test_cli_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.push_back("--quiet");
    std::ostringstream out, err;
    const int code = cli_main(args, out, err);
    set_quiet(true);
    return {code, out.str(), err.str()};
}

Run run_plain(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli_main(args, out, err);
    set_quiet(true);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// A small synthetic dataset keeps every command fast.
std::vector<std::string> small(const fs::path& data) {
    return {"--data",          data.string(), "--synth-users", "30",   "--synth-outfits", "40", "--synth-items", "80",
            "--synth-categories", "5",        "--synth-heldout-outfits", "8", "--synth-interactions-per-user", "10",
            "--d",             "8",           "--views",       "2",    "--attention-hidden", "4", "--encoder-hidden",
            "8"};
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

} // namespace

TEST_CASE("usage errors exit with 1") {
    CHECK(run_plain({}).code == 1);
    CHECK(run({"no-such-command"}).code == 1);
    const Run bad_flag = run({"graph-stats", "--no-such-flag", "3"});
    CHECK(bad_flag.code == 1);
    CHECK(bad_flag.err.find("error") != std::string::npos);
    CHECK(run({"eval"}).code == 1); // --checkpoint is required
    CHECK(run({"graph-stats", "--epochs", "many"}).code == 1);
    CHECK(run({"eval", "--checkpoint", "x", "--part", "train"}).code == 1);
    CHECK(run_plain({"--help"}).code == 0);
}

TEST_CASE("missing data and checkpoints exit with 2 and name the path") {
    TempDir dir("missing");
    const Run stats = run({"graph-stats", "--data", (dir.path / "nowhere").string()});
    CHECK(stats.code == 2);
    CHECK(stats.err.find("nowhere") != std::string::npos);
    const std::string ckpt = (dir.path / "absent.ckpt").string();
    const Run ev = run({"eval", "--checkpoint", ckpt, "--data", dir.path.string()});
    CHECK(ev.code == 2);
    CHECK(ev.err.find(ckpt) != std::string::npos);
    const Run insp = run({"inspect-checkpoint", "--checkpoint", ckpt});
    CHECK(insp.code == 2);
}

TEST_CASE("gen-synth is reproducible byte for byte") {
    TempDir a("gen_a"), b("gen_b");
    REQUIRE(run(cat({"gen-synth", "--seed", "5"}, small(a.path))).code == 0);
    REQUIRE(run(cat({"gen-synth", "--seed", "5"}, small(b.path))).code == 0);
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(a.path)) {
        const auto other = b.path / entry.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(slurp(entry.path()) == slurp(other));
        ++files;
    }
    CHECK(files >= 4);
    TempDir c("gen_c");
    REQUIRE(run(cat({"gen-synth", "--seed", "6"}, small(c.path))).code == 0);
    CHECK(slurp(a.path / "interactions.tsv") != slurp(c.path / "interactions.tsv"));
}

TEST_CASE("end-to-end pipeline through every subcommand") {
    TempDir dir("pipeline");
    const auto data = dir.path / "data";
    REQUIRE(run(cat({"gen-synth"}, small(data))).code == 0);

    const Run stats = run(cat({"graph-stats"}, small(data)));
    REQUIRE(stats.code == 0);
    CHECK(stats.out.find("users\t30\n") != std::string::npos);
    CHECK(stats.out.find("violations\t0\n") != std::string::npos);

    const auto filtered = dir.path / "filtered";
    const Run filt = run(cat({"filter", "--out", filtered.string(), "--min-user", "2", "--min-outfit", "2"},
                             small(data)));
    REQUIRE(filt.code == 0);
    CHECK(fs::exists(filtered / "interactions.tsv"));

    const Run sp = run(cat({"split"}, small(data)));
    REQUIRE(sp.code == 0);
    CHECK(fs::exists(data / "train.tsv"));
    CHECK(fs::exists(data / "val.tsv"));
    CHECK(fs::exists(data / "test.tsv"));

    const auto ckpt = dir.path / "m.ckpt";
    const auto hist = dir.path / "history.tsv";
    const Run tr = run(cat({"train", "--epochs", "2", "--out", ckpt.string(), "--history", hist.string()},
                           small(data)));
    REQUIRE(tr.code == 0);
    CHECK(fs::exists(ckpt));
    CHECK(slurp(hist).rfind("epoch\tL_mf\tL_com\tval_hr@10\tval_ndcg@10\tseconds\n", 0) == 0);
    CHECK(tr.out.find("best epoch") != std::string::npos);

    const auto report = dir.path / "report.txt";
    const Run ev = run(cat({"eval", "--checkpoint", ckpt.string(), "--report", report.string()}, small(data)));
    REQUIRE(ev.code == 0);
    CHECK(ev.out.find("NDCG") != std::string::npos);
    const std::string kv = slurp(report);
    CHECK(kv.rfind("hr@10=", 0) == 0);
    CHECK(kv.find("\nndcg@10=0.") != std::string::npos);

    const auto queries = dir.path / "fitb.tsv";
    const auto fitb_report = dir.path / "fitb.txt";
    const Run fb = run(cat({"fitb", "--checkpoint", ckpt.string(), "--export", queries.string(), "--fitb-count", "40",
                            "--report", fitb_report.string()},
                           small(data)));
    REQUIRE(fb.code == 0);
    CHECK(fb.out.find("queries=40\n") != std::string::npos);
    CHECK(slurp(fitb_report) == fb.out);
    const Run fb2 = run(cat({"fitb", "--checkpoint", ckpt.string(), "--import", queries.string()}, small(data)));
    REQUIRE(fb2.code == 0);
    CHECK(fb2.out == fb.out);

    const Run insp = run({"inspect-checkpoint", "--checkpoint", ckpt.string()});
    REQUIRE(insp.code == 0);
    CHECK(insp.out.find("HFGN-CHECKPOINT") != std::string::npos);
    CHECK(insp.out.find("embedding") != std::string::npos);

    // A checkpoint for a different dataset is a data error.
    const auto other = dir.path / "other";
    REQUIRE(run(cat(cat({"gen-synth"}, small(other)), {"--synth-users", "31"})).code == 0);
    CHECK(run(cat(cat({"eval", "--checkpoint", ckpt.string()}, small(other)), {"--synth-users", "31"})).code == 2);
}

TEST_CASE("train with zero epochs writes the initial model") {
    TempDir dir("zero");
    const auto data = dir.path / "data";
    REQUIRE(run(cat({"gen-synth"}, small(data))).code == 0);
    const auto ckpt = dir.path / "m.ckpt";
    REQUIRE(run(cat({"train", "--epochs", "0", "--out", ckpt.string()}, small(data))).code == 0);
    const Checkpoint ck = read_checkpoint(ckpt);
    CHECK(ck.header.epoch == 0);
    CHECK(ck.header.config.d == 8);
    CHECK(ck.header.seed == 2020);
}

TEST_CASE("identical runs write identical checkpoints and reports") {
    TempDir dir("repeat");
    const auto data = dir.path / "data";
    REQUIRE(run(cat({"gen-synth"}, small(data))).code == 0);
    for (int k = 0; k < 2; ++k) {
        const auto ck = dir.path / ("m" + std::to_string(k) + ".ckpt");
        REQUIRE(run(cat({"train", "--epochs", "2", "--out", ck.string()}, small(data))).code == 0);
        const auto rep = dir.path / ("r" + std::to_string(k) + ".txt");
        REQUIRE(run(cat({"eval", "--checkpoint", ck.string(), "--report", rep.string()}, small(data))).code == 0);
    }
    CHECK(slurp(dir.path / "m0.ckpt") == slurp(dir.path / "m1.ckpt"));
    CHECK(slurp(dir.path / "r0.txt") == slurp(dir.path / "r1.txt"));
}

TEST_CASE("configuration precedence: defaults, file, environment, flags") {
    TempDir dir("config");
    const auto cfg_path = dir.path / "run.cfg";
    {
        std::ofstream out(cfg_path);
        out << "# comment\nseed = 11\nd = 16  # trailing comment\ndata_dir = " << (dir.path / "from_file").string()
            << "\nlr_rec = 0.5\n";
    }
    const auto kv = read_config_file(cfg_path);
    CHECK(kv.at("d") == "16");

    // The data directory comes from the file, then the environment, then the flag.
    REQUIRE(run({"gen-synth", "--config", cfg_path.string(), "--synth-users", "5", "--synth-outfits", "10",
                 "--synth-items", "20", "--synth-categories", "5", "--synth-heldout-outfits", "2"})
                .code == 0);
    CHECK(fs::exists(dir.path / "from_file" / "interactions.tsv"));

    const auto env_dir = dir.path / "from_env";
    ::setenv("HFGN_DATA_DIR", env_dir.string().c_str(), 1);
    REQUIRE(run({"gen-synth", "--config", cfg_path.string(), "--synth-users", "5", "--synth-outfits", "10",
                 "--synth-items", "20", "--synth-categories", "5", "--synth-heldout-outfits", "2"})
                .code == 0);
    CHECK(fs::exists(env_dir / "interactions.tsv"));

    const auto flag_dir = dir.path / "from_flag";
    REQUIRE(run({"gen-synth", "--config", cfg_path.string(), "--data", flag_dir.string(), "--synth-users", "5",
                 "--synth-outfits", "10", "--synth-items", "20", "--synth-categories", "5",
                 "--synth-heldout-outfits", "2"})
                .code == 0);
    ::unsetenv("HFGN_DATA_DIR");
    CHECK(fs::exists(flag_dir / "interactions.tsv"));
    // The seed in the file drives generation: same file, same data.
    CHECK(slurp(env_dir / "interactions.tsv") == slurp(flag_dir / "interactions.tsv"));

    // Flags and files use the same key names; both variants of a flag work.
    RunConfig c;
    set_config_value(c, "lr_rec", "0.25");
    CHECK(c.train.lr_rec == 0.25);
    CHECK(get_config_value(c, "lr_rec") == "0.25");
    CHECK_THROWS_AS(set_config_value(c, "bogus", "1"), ConfigError);
    CHECK_THROWS_AS(set_config_value(c, "epochs", "-3"), ConfigError);
    CHECK_THROWS_AS(set_config_value(c, "enable_item_prop", "maybe"), ConfigError);
    CHECK(run({"graph-stats", "--data", (dir.path / "from_file").string(), "--enable_item_prop", "off"}).code == 0);
}

TEST_CASE("bad configuration files exit with 1") {
    TempDir dir("badcfg");
    const auto unknown = dir.path / "unknown.cfg";
    {
        std::ofstream out(unknown);
        out << "seed = 1\nflux_capacitor = 88\n";
    }
    const Run r = run({"graph-stats", "--config", unknown.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("flux_capacitor") != std::string::npos);

    const auto malformed = dir.path / "malformed.cfg";
    {
        std::ofstream out(malformed);
        out << "seed 1\n";
    }
    const Run m = run({"graph-stats", "--config", malformed.string()});
    CHECK(m.code == 1);
    CHECK(m.err.find("malformed.cfg:1") != std::string::npos);
}

TEST_CASE("master seed derives distinct component seeds") {
    RunConfig a;
    a.seed = 42;
    a.derive_seeds();
    RunConfig b = a;
    b.derive_seeds();
    CHECK(a.synth.seed == b.synth.seed);
    std::set<std::uint64_t> seeds{a.synth.seed, a.split.seed, a.model.init_seed, a.train.rng_seed};
    CHECK(seeds.size() == 4);
    RunConfig c;
    c.seed = 43;
    c.derive_seeds();
    CHECK(c.model.init_seed != a.model.init_seed);
    // Every key survives a text round trip.
    RunConfig d;
    for (const auto& key : config_keys()) set_config_value(d, key, get_config_value(a, key));
    CHECK(config_text(d) == config_text(a));
}
