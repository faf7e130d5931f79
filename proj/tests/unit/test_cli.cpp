#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "safsar/cli/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = safsar::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("safsar_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

json read_json(const std::string& p) { return json::parse(std::ifstream(p)); }

}  // namespace

TEST_CASE("usage errors exit 2") {
    auto r = run({"bogus"});
    CHECK(r.code == safsar::cli::kExitUsage);
    CHECK_FALSE(r.err.empty());
    CHECK(run({"eval", "--no-such-flag"}).code == 2);
    CHECK(run({}).code == 2);
    CHECK(run({"eval", "--heads", "3"}).code == 2);  // 64 is not a multiple of 3
}

TEST_CASE("gradcheck passes and writes a manifest") {
    TempDir dir("gc");
    auto r = run({"gradcheck", "--dim", "16", "--seed", "7", "--coords", "4", "--manifest", dir / "m.json"});
    CHECK(r.code == 0);
    CHECK(r.out.find("max_rel_error=") != std::string::npos);
    CHECK(r.out.find("PASS") != std::string::npos);
    auto m = read_json(dir / "m.json");
    CHECK(m["command"] == "gradcheck");
    CHECK(m["seed"] == 7);
    CHECK(m["exit_code"] == 0);
    CHECK(m.contains("started_at"));

    auto strict = run({"gradcheck", "--dim", "16", "--coords", "2", "--tol", "0", "--manifest", dir / "s.json"});
    CHECK(strict.code == 1);
    CHECK(strict.out.find("FAIL") != std::string::npos);
}

TEST_CASE("eval lines are deterministic and well formed") {
    TempDir dir("eval");
    std::vector<std::string> args{"eval", "--ways", "5", "--shots", "1", "--episodes", "300", "--seed", "3",
                                  "--dim", "16", "--video-depth", "1", "--manifest", dir / "m.json",
                                  "--report", dir / "r.json"};
    auto a = run(args);
    auto b = run(args);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    const std::regex line(R"(acc=\d\.\d{6} ci95=\d\.\d{6} ways=5 shots=1 episodes=300 seed=3\n)");
    CHECK(std::regex_match(a.out, line));
    auto report = read_json(dir / "r.json");
    CHECK(report["correct"].get<std::string>().size() == 300);
    CHECK(report["config"]["model"]["lambda"] == 1.0);

    args[2] = "7";
    CHECK(run(args).code == 1);  // 7-way cannot fit the 5-class test split
}

TEST_CASE("generate, train, evaluate and dump") {
    TempDir dir("flow");
    auto g = run({"gen-synthetic", "--out", dir / "data.json", "--classes", "10", "--items", "4", "--train-classes",
                  "4", "--val-classes", "2", "--raw-frames", "8", "--height", "8", "--width", "8"});
    REQUIRE(g.code == 0);
    CHECK(fs::exists(dir / "data.json.manifest.json"));
    auto v = run({"validate-cache", dir / "data.json", "--manifest", dir / "vm.json"});
    CHECK(v.code == 0);
    CHECK(json::parse(v.out)["valid"] == true);

    const std::vector<std::string> model{"--dim", "16", "--video-depth", "1", "--text-depth", "1", "--frames", "4",
                                         "--fusion-layers", "1"};
    auto train_args = std::vector<std::string>{"train", "--data", dir / "data.json", "--out", dir / "p.bin", "--ways",
                                               "3", "--episodes", "6", "--val-every", "0", "--trace", dir / "t.jsonl"};
    train_args.insert(train_args.end(), model.begin(), model.end());
    auto t = run(train_args);
    REQUIRE(t.code == 0);
    CHECK(t.out.find("episodes=6") != std::string::npos);
    std::ifstream trace(dir / "t.jsonl");
    std::string first;
    std::getline(trace, first);
    CHECK(json::parse(first).contains("l2"));
    auto tm = read_json(dir / "p.bin.manifest.json");
    CHECK(tm["artifacts"].contains("params"));

    auto again = train_args;
    again[4] = dir / "p2.bin";
    REQUIRE(run(again).code == 0);
    std::ifstream a(dir / "p.bin", std::ios::binary), b(dir / "p2.bin", std::ios::binary);
    CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));

    auto e = run({"eval", "--data", dir / "data.json", "--params", dir / "p.bin", "--ways", "3", "--episodes", "50",
                  "--manifest", dir / "em.json"});
    CHECK(e.code == 0);
    CHECK(e.out.starts_with("acc="));

    auto d = run({"dump-embeddings", "--data", dir / "data.json", "--params", dir / "p.bin", "--ways", "3",
                  "--episodes", "4", "--out", dir / "emb.jsonl"});
    REQUIRE(d.code == 0);
    std::ifstream emb(dir / "emb.jsonl");
    std::size_t lines = 0;
    for (std::string l; std::getline(emb, l); ++lines) {
        auto rec = json::parse(l);
        CHECK(rec["prototype"].size() == 3);
        CHECK(rec["fused_prototype"].size() == 3);
        CHECK(rec["adapted_support"].size() == 3);
        CHECK(rec["adapted_query"].size() == 16);
    }
    CHECK(lines == 4);
}

TEST_CASE("param-count total is the sum of its rows") {
    TempDir dir("pc");
    auto r = run({"param-count", "--manifest", dir / "m.json"});
    REQUIRE(r.code == 0);
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);  // header
    std::size_t sum = 0, total = 0;
    while (std::getline(in, line)) {
        std::istringstream row(line);
        std::string module;
        std::size_t tensors, scalars;
        row >> module >> tensors >> scalars;
        if (module == "total") total = scalars;
        else sum += scalars;
    }
    CHECK(total > 0);
    CHECK(total == sum);
}

TEST_CASE("validate-cache reports problems with exit 1") {
    TempDir dir("vc");
    std::ofstream(dir / "bad.json") << "{\"format\": \"something else\"}";
    auto r = run({"validate-cache", dir / "bad.json", "--manifest", dir / "m.json"});
    CHECK(r.code == 1);
    CHECK(json::parse(r.out)["valid"] == false);
}
