#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "biqc/cli.hpp"
#include "biqc/data.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = biqc::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("biqc_cli_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const std::vector<std::string> kSmall = {"--dataset", "synthetic", "--resolution", "64", "--n-per-class", "4",
                                         "--resize", "16", "--qubits", "2", "--blocks", "1", "--layers", "1",
                                         "--batch", "4", "--quiet"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
}

}  // namespace

TEST(Cli, HelpListsFlagsWithDefaults) {
    const auto r = run({"train", "--help"});
    EXPECT_EQ(r.code, 0);
    for (const char* flag : {"--qubits", "--blocks", "--layers", "--patch", "--cutoff", "--noise", "--ablation",
                             "--lr", "--weight-decay", "--batch", "--max-epochs", "--patience", "--seed",
                             "--out-dir", "--threads", "--dataset"})
        EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
    EXPECT_NE(r.out.find("0.001"), std::string::npos);
    EXPECT_NE(r.out.find("0.0005"), std::string::npos);
    EXPECT_NE(r.out.find("10000"), std::string::npos);
    const auto top = run({"--help"});
    EXPECT_EQ(top.code, 0);
    for (const char* cmd : {"train", "eval", "select-patch", "spectrum", "gen-data", "ablate"})
        EXPECT_NE(top.out.find(cmd), std::string::npos) << cmd;
}

TEST(Cli, RejectsUnknownFlagAndBadValues) {
    auto r = run({"train", "--no-such-flag"});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("error"), std::string::npos);
    r = run({"train", "--dataset", "csv"});
    EXPECT_NE(r.code, 0);
    r = run(with({"train"}, with(kSmall, {"--qubits", "0", "--out-dir", scratch("badq").string()})));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("error"), std::string::npos);
    r = run({"eval", "--checkpoint", "/nonexistent/model.biqc"});
    EXPECT_NE(r.code, 0);
}

TEST(Cli, TrainIsReproducibleAcrossThreadCountsAndEvalReadsCheckpoint) {
    const auto a = scratch("train_a"), b = scratch("train_b");
    const auto ra = run(with({"train"}, with(kSmall, {"--seed", "3", "--max-epochs", "2", "--threads", "1", "--out-dir", a.string()})));
    ASSERT_EQ(ra.code, 0) << ra.err;
    const auto rb = run(with({"train"}, with(kSmall, {"--seed", "3", "--max-epochs", "2", "--threads", "2", "--out-dir", b.string()})));
    ASSERT_EQ(rb.code, 0) << rb.err;
    EXPECT_NE(ra.out.find("# resolved configuration"), std::string::npos);
    EXPECT_NE(ra.out.find("model.ansatz.num_qubits=2"), std::string::npos);
    // Only train.threads differs between the two headers.
    EXPECT_EQ(biqc::data::load_checkpoint(a / "model.biqc").tensors,
              biqc::data::load_checkpoint(b / "model.biqc").tensors);
    EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
    EXPECT_EQ(slurp(a / "metrics.csv").rfind("epoch,loss,train_acc,test_acc,test_auc\n", 0), 0u);

    const auto ev = run(with({"eval", "--checkpoint", (a / "model.biqc").string(), "--features-csv",
                              (a / "f.csv").string(), "--spectrum-csv", (a / "s.csv").string()},
                             {"--dataset", "synthetic", "--resolution", "64", "--n-per-class", "4", "--resize", "16",
                              "--seed", "3"}));
    ASSERT_EQ(ev.code, 0) << ev.err;
    EXPECT_NE(ev.out.find("accuracy "), std::string::npos);
    EXPECT_NE(ev.out.find("circuit_evaluations "), std::string::npos);
    EXPECT_TRUE(fs::exists(a / "f.csv"));
    EXPECT_TRUE(fs::exists(a / "s.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Cli, GenDataThenSelectPatch) {
    const auto dir = scratch("gen");
    const auto g = run({"gen-data", "--out-dir", dir.string(), "--resolution", "64", "--n-per-class", "2",
                        "--seed", "1"});
    ASSERT_EQ(g.code, 0) << g.err;
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ".pgm";
    EXPECT_EQ(n, 4u);
    const auto ds = biqc::data::load_pgm_dir(dir, "disc", "square");
    EXPECT_EQ(ds.size(), 4u);
    EXPECT_EQ(ds.height, 64u);

    const auto s = run({"select-patch", "--image", (dir / "disc_00000.pgm").string(), "--patch", "16"});
    ASSERT_EQ(s.code, 0) << s.err;
    EXPECT_NE(s.out.find("r-map 4x4"), std::string::npos);
    EXPECT_NE(s.out.find("metric patch (row, col) = ("), std::string::npos);
    fs::remove_all(dir);
}

TEST(Cli, AblateReportsEveryVariant) {
    const auto dir = scratch("ablate");
    const auto r = run(with({"ablate"}, with(kSmall, {"--max-epochs", "1", "--out-dir", dir.string()})));
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* v : {"none", "Ab-EVC", "Ab-OFC", "Ab-HSF", "Ab-Quantum"})
        EXPECT_NE(r.out.find(std::string("\n") + v), std::string::npos) << v;
    const auto csv = slurp(dir / "ablation.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
    fs::remove_all(dir);
}
