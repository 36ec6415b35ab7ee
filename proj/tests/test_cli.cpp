#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "hstf/flow_io.hpp"

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "hstf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = hstf::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

const std::vector<std::string> kSmallModel = {"--conv", "2x3x7,3x3x5", "--cnn-dense", "8", "--lstm-hidden",
                                              "8",      "--head",      "4",           "--quiet"};

std::vector<std::string> with_model(std::vector<std::string> args) {
  args.insert(args.end(), kSmallModel.begin(), kSmallModel.end());
  return args;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("hstf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  /** A small labeled corpus written by the gen subcommand. */
  std::string corpus(std::size_t benign = 300, std::size_t malicious = 60) {
    const auto p = path("flows.ndjson");
    const auto r = invoke({"gen", "--benign", std::to_string(benign), "--malicious", std::to_string(malicious), "-o", p});
    EXPECT_EQ(r.code, 0) << r.err;
    return p;
  }

  fs::path dir_;
};

TEST_F(CliTest, HelpExitsZero) {
  const auto r = invoke({"--help"});
  EXPECT_EQ(r.code, hstf::cli::kOk);
  EXPECT_NE(r.out.find("SUBCOMMAND"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(invoke({}).code, hstf::cli::kUsage);
  EXPECT_EQ(invoke({"ingest", "x.pcap", "--no-such-flag"}).code, hstf::cli::kUsage);
  EXPECT_EQ(invoke({"sweep", "f.ndjson", "--axis", "depth", "--values", "1"}).code, hstf::cli::kUsage);
  EXPECT_EQ(invoke({"train", corpus(), "-o", path("m.bin"), "--proportion", "3-10"}).code, hstf::cli::kUsage);
  EXPECT_EQ(invoke({"train", corpus()}).code, hstf::cli::kUsage);
}

TEST_F(CliTest, UnreadableInputExitsTwo) {
  std::ofstream(path("junk.pcap"), std::ios::binary) << "definitely not a capture";
  EXPECT_EQ(invoke({"ingest", path("junk.pcap")}).code, hstf::cli::kBadInput);
  EXPECT_EQ(invoke({"ingest", path("missing.pcap")}).code, hstf::cli::kBadInput);
  std::ofstream(path("bad.ndjson")) << "{\"flow_id\": 3}\n";
  EXPECT_EQ(invoke({"extract", path("bad.ndjson"), "-o", path("e.bin")}).code, hstf::cli::kBadInput);
}

TEST_F(CliTest, BadProfileExitsTwo) {
  std::ofstream(path("profiles.json")) << "{\"benign\": []}";
  const auto r = invoke({"gen", "--benign", "1", "--profiles", path("profiles.json"), "-o", path("f.ndjson")});
  EXPECT_EQ(r.code, hstf::cli::kBadInput);
}

TEST_F(CliTest, WriteFailureExitsThree) {
  const auto r = invoke({"gen", "--benign", "2", "-o", path("no/such/dir/f.ndjson")});
  EXPECT_EQ(r.code, hstf::cli::kWriteFailure);
}

TEST_F(CliTest, GeneratedCaptureIngestsToOneFlowPerConnection) {
  const auto r = invoke({"gen", "--benign", "3", "--malicious", "2", "--pcap", path("c.pcap"), "--big-endian", "-o",
                         path("f.ndjson")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto i = invoke({"ingest", path("c.pcap"), "-o", path("in.ndjson")});
  ASSERT_EQ(i.code, 0) << i.err;
  const auto flows = hstf::http::read_ndjson_file(path("in.ndjson"));
  EXPECT_EQ(flows.size(), 5u);
  EXPECT_NE(i.err.find("http flows 5"), std::string::npos);
}

TEST_F(CliTest, EmptyCaptureGivesNoFlows) {
  ASSERT_EQ(invoke({"gen", "--pcap", path("c.pcap"), "-o", path("f.ndjson")}).code, 0);
  const auto i = invoke({"ingest", path("c.pcap")});
  EXPECT_EQ(i.code, 0);
  EXPECT_TRUE(i.out.empty());
}

TEST_F(CliTest, GenIsDeterministicAndWritesManifest) {
  ASSERT_EQ(invoke({"gen", "--benign", "20", "--malicious", "5", "--seed", "9", "-o", path("a.ndjson")}).code, 0);
  ASSERT_EQ(invoke({"gen", "--benign", "20", "--malicious", "5", "--seed", "9", "-o", path("b.ndjson")}).code, 0);
  EXPECT_EQ(slurp(path("a.ndjson")), slurp(path("b.ndjson")));
  EXPECT_EQ(slurp(path("a.ndjson.manifest.csv")), slurp(path("b.ndjson.manifest.csv")));
  const auto manifest = slurp(path("a.ndjson.manifest.csv"));
  EXPECT_EQ(manifest.rfind("# seed=9\n", 0), 0u);
  EXPECT_EQ(count_lines(manifest), 3u + 1u + 25u);
  ASSERT_EQ(invoke({"gen", "--benign", "20", "--malicious", "5", "--seed", "10", "-o", path("c.ndjson")}).code, 0);
  EXPECT_NE(slurp(path("a.ndjson")), slurp(path("c.ndjson")));
}

TEST_F(CliTest, ZeroCountsGiveHeaderOnlyManifest) {
  ASSERT_EQ(invoke({"gen", "-o", path("z.ndjson")}).code, 0);
  EXPECT_TRUE(slurp(path("z.ndjson")).empty());
  const auto manifest = slurp(path("z.ndjson.manifest.csv"));
  EXPECT_EQ(count_lines(manifest), 4u);
  EXPECT_NE(manifest.find("flow_id,label,messages,wire_bytes\n"), std::string::npos);
}

TEST_F(CliTest, TrainWithZeroEpochsSavesInitialWeights) {
  const auto flows = corpus();
  const auto r = invoke(with_model({"train", flows, "--epochs", "0", "-o", path("m.bin")}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("m.bin")));
  EXPECT_NE(r.out.find("epochs 0"), std::string::npos);
  const auto e = invoke({"eval", path("m.bin"), flows});
  EXPECT_EQ(e.code, 0) << e.err;
}

TEST_F(CliTest, TrainingIsBitReproducible) {
  const auto flows = corpus();
  ASSERT_EQ(invoke(with_model({"train", flows, "--epochs", "2", "-o", path("a.bin")})).code, 0);
  ASSERT_EQ(invoke(with_model({"train", flows, "--epochs", "2", "-o", path("b.bin")})).code, 0);
  EXPECT_EQ(slurp(path("a.bin")), slurp(path("b.bin")));
  ASSERT_EQ(invoke(with_model({"train", flows, "--epochs", "2", "--seed", "2", "-o", path("c.bin")})).code, 0);
  EXPECT_NE(slurp(path("a.bin")), slurp(path("c.bin")));
}

TEST_F(CliTest, ConfigFileIsOverriddenByFlags) {
  const auto flows = corpus();
  std::ofstream(path("cfg.json")) << R"({"conv": [{"kernels": 2, "kernel_h": 3, "kernel_w": 7, "pool_h": 2, "pool_w": 2}],
    "cnn_dense": 8, "lstm_hidden": 8, "head_layers": [4], "epochs": 5, "proportion": "1:4"})";
  const auto r = invoke({"train", flows, "--config", path("cfg.json"), "--epochs", "1", "-q", "-o", path("m.bin")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epochs 1"), std::string::npos);
  // 1:4 over 60 malicious gives 42 training trojans and 168 benign.
  EXPECT_NE(r.out.find("train flows 210"), std::string::npos);
}

TEST_F(CliTest, SingleClassDatasetExitsFour) {
  ASSERT_EQ(invoke({"gen", "--benign", "50", "-o", path("benign.ndjson")}).code, 0);
  const auto r = invoke(with_model({"train", path("benign.ndjson"), "-o", path("m.bin")}));
  EXPECT_EQ(r.code, hstf::cli::kSingleClass);
}

TEST_F(CliTest, ModelConfigMismatchExitsFive) {
  const auto flows = corpus();
  ASSERT_EQ(invoke(with_model({"train", flows, "--epochs", "0", "-o", path("m.bin")})).code, 0);
  EXPECT_EQ(invoke({"eval", path("m.bin"), flows, "--packet-size", "100"}).code, hstf::cli::kMismatch);
  EXPECT_EQ(invoke({"predict", path("m.bin"), flows, "--flow-size", "3"}).code, hstf::cli::kMismatch);
  ASSERT_EQ(invoke({"extract", flows, "--flow-size", "2", "-o", path("e.bin")}).code, 0);
  EXPECT_EQ(invoke({"eval", path("m.bin"), path("e.bin")}).code, hstf::cli::kMismatch);
}

TEST_F(CliTest, EvalAcceptsExtractedDatasets) {
  const auto flows = corpus();
  ASSERT_EQ(invoke(with_model({"train", flows, "--epochs", "1", "-o", path("m.bin")})).code, 0);
  ASSERT_EQ(invoke({"extract", flows, "-o", path("e.bin")}).code, 0);
  const auto a = invoke({"eval", path("m.bin"), flows});
  const auto b = invoke({"eval", path("m.bin"), path("e.bin")});
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  // Same P/R/F1 columns; the dataset name and timing differ.
  auto metrics = [](const std::string& csv) {
    std::istringstream row(csv.substr(csv.find('\n') + 1));
    std::vector<std::string> cells(4);
    for (auto& c : cells) std::getline(row, c, ',');
    return std::vector<std::string>(cells.begin() + 1, cells.end());
  };
  EXPECT_EQ(metrics(a.out), metrics(b.out));
}

TEST_F(CliTest, PredictScoresRespectThreshold) {
  const auto flows = corpus(40, 10);
  ASSERT_EQ(invoke(with_model({"train", flows, "--epochs", "0", "--proportion", "1:1", "-o", path("m.bin")})).code, 0);
  const auto all = invoke({"predict", path("m.bin"), flows, "--threshold", "0"});
  const auto none = invoke({"predict", path("m.bin"), flows, "--threshold", "1.01"});
  ASSERT_EQ(all.code, 0);
  ASSERT_EQ(none.code, 0);
  EXPECT_EQ(count_lines(all.out), 51u);
  EXPECT_EQ(all.out.rfind("flow_id,label,score\n", 0), 0u);
  EXPECT_EQ(all.out.find(",benign,"), std::string::npos);
  EXPECT_EQ(none.out.find(",malicious,"), std::string::npos);
}

TEST_F(CliTest, SweepWritesOneRowPerValue) {
  const auto flows = corpus();
  const auto r = invoke(with_model({"sweep", flows, "--axis", "flow_size", "--values", "1,3", "--repeats", "1",
                                    "--epochs", "1", "-o", path("s.csv")}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(path("s.csv"));
  EXPECT_EQ(csv.rfind("flow_size,P,R,F1,train_time_s,test_time_s\n", 0), 0u);
  EXPECT_EQ(count_lines(csv), 3u);
}

TEST_F(CliTest, ImbalanceWritesRowsAndCurves) {
  const auto flows = corpus();
  const auto r = invoke(with_model({"imbalance", flows, "--proportions", "1:2,3:10", "--repeats", "1", "--epochs",
                                    "2", "-o", path("i.csv"), "--curves", path("c.csv")}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(slurp(path("i.csv"))), 3u);
  EXPECT_TRUE(fs::file_size(path("c.csv")) > 0);
}

}  // namespace
