#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hstf/error.hpp"
#include "hstf/experiments.hpp"
#include "hstf/flow_io.hpp"
#include "hstf/generator.hpp"
#include "hstf/metrics.hpp"

namespace {

using namespace hstf;
using namespace hstf::experiments;
using http::Label;

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no hstf::Error thrown";
  return Errc::Io;
}

std::vector<Label> pool(std::size_t malicious, std::size_t benign) {
  std::vector<Label> labels(malicious, Label::Malicious);
  labels.insert(labels.end(), benign, Label::Benign);
  std::mt19937_64 rng(3);
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

/** Small geometry that trains in well under a second per epoch on a few hundred flows. */
model::HstfConfig quick_config() {
  model::HstfConfig c;
  c.conv = model::parse_conv_stages("2x3x7,3x3x5");
  c.cnn_dense = 16;
  c.lstm_hidden = 16;
  c.head_layers = {8};
  c.epochs = 2;
  c.seed = 5;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(FBeta, TableValues) {
  EXPECT_NEAR(f_beta(0.9935, 0.9940).value, 0.9937, 1e-4);
  EXPECT_NEAR(f_beta(0.9999, 0.7896).value, 0.8824, 1e-4);
}

TEST(FBeta, EqualPrecisionAndRecall) {
  for (double x : {0.1, 0.5, 0.73, 1.0}) EXPECT_NEAR(f_beta(x, x).value, x, 1e-15);
}

TEST(FBeta, MatchesCountsFormulaForRandomConfusions) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double tp = 1 + static_cast<double>(rng() % 500);
    const double fp = static_cast<double>(rng() % 500);
    const double fn = static_cast<double>(rng() % 500);
    const double beta = 0.25 + static_cast<double>(rng() % 16) / 4.0;
    const double b2 = beta * beta;
    // F_beta in confusion counts: (1+b^2) tp / ((1+b^2) tp + b^2 fn + fp).
    const double oracle = (1 + b2) * tp / ((1 + b2) * tp + b2 * fn + fp);
    const double p = tp / (tp + fp), r = tp / (tp + fn);
    const auto f = f_beta(p, r, beta);
    EXPECT_FALSE(f.undefined);
    EXPECT_NEAR(f.value, oracle, 1e-12);
    EXPECT_GE(f_beta(p, r).value, std::min(p, r) - 1e-15);
    EXPECT_LE(f_beta(p, r).value, std::max(p, r) + 1e-15);
  }
}

TEST(FBeta, UndefinedAndInvalidInputs) {
  const auto f = f_beta(0.0, 0.0);
  EXPECT_TRUE(f.undefined);
  EXPECT_EQ(f.value, 0.0);
  EXPECT_EQ(code_of([] { f_beta(1.1, 0.5); }), Errc::InvalidArgument);
  EXPECT_EQ(code_of([] { f_beta(0.5, -0.1); }), Errc::InvalidArgument);
  EXPECT_EQ(code_of([] { f_beta(0.5, 0.5, 0.0); }), Errc::InvalidArgument);
}

TEST(Metrics, AllCorrect) {
  const std::vector<Label> y = {Label::Malicious, Label::Benign, Label::Malicious};
  const auto m = compute_metrics(y, y);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.f1, 1.0);
}

TEST(Metrics, AllPredictedBenignFlagsUndefinedPrecision) {
  const std::vector<Label> y = {Label::Malicious, Label::Benign};
  const std::vector<Label> p = {Label::Benign, Label::Benign};
  const auto m = compute_metrics(p, y);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_TRUE(m.precision_undefined);
  EXPECT_TRUE(m.f1_undefined);
  EXPECT_EQ(m.f1, 0.0);
}

TEST(Metrics, TwentySampleHandCount) {
  const std::string truth = "MMMMMMMMBBBBBBBBBBBB";
  const std::string pred = "MMMMMMBBMMMBBBBBBBBB";
  // tp 6, fn 2, fp 3, tn 9
  std::vector<Label> y, p;
  for (char c : truth) y.push_back(c == 'M' ? Label::Malicious : Label::Benign);
  for (char c : pred) p.push_back(c == 'M' ? Label::Malicious : Label::Benign);
  const auto m = compute_metrics(p, y);
  EXPECT_EQ(m.tp, 6u);
  EXPECT_EQ(m.fn, 2u);
  EXPECT_EQ(m.fp, 3u);
  EXPECT_EQ(m.tn, 9u);
  EXPECT_DOUBLE_EQ(m.precision, 6.0 / 9.0);
  EXPECT_DOUBLE_EQ(m.recall, 6.0 / 8.0);
  EXPECT_DOUBLE_EQ(m.f1, 12.0 / 17.0);
}

TEST(Metrics, LengthMismatch) {
  const std::vector<Label> a = {Label::Benign};
  const std::vector<Label> b = {Label::Benign, Label::Malicious};
  EXPECT_EQ(code_of([&] { compute_metrics(a, b); }), Errc::LengthMismatch);
  EXPECT_EQ(code_of([&] { compute_metrics({}, {}); }), Errc::LengthMismatch);
}

TEST(Proportion, ParseAndFormat) {
  EXPECT_EQ(ProportionSpec::parse("3:10"), (ProportionSpec{3, 10}));
  EXPECT_EQ(ProportionSpec::parse("1:24").to_string(), "1:24");
  for (const char* bad : {"", "3", "3:", ":3", "0:5", "5:0", "a:b", "3:10:1", "-1:4"}) {
    EXPECT_EQ(code_of([&] { ProportionSpec::parse(bad); }), Errc::InvalidArgument) << bad;
  }
}

TEST(Split, HundredMaliciousAtOneToFour) {
  const auto labels = pool(100, 500);
  const auto split = make_split(labels, {1, 4}, 7);
  std::size_t mal = 0, ben = 0;
  for (auto i : split.train) (labels[i] == Label::Malicious ? mal : ben)++;
  EXPECT_EQ(mal, 70u);
  EXPECT_EQ(ben, 280u);
  std::size_t test_mal = 0, test_ben = 0;
  for (auto i : split.test) (labels[i] == Label::Malicious ? test_mal : test_ben)++;
  EXPECT_EQ(test_mal, 30u);
  EXPECT_EQ(test_ben, 200u);  // 0.4 of the benign pool
}

TEST(Split, DisjointSortedAndDeterministic) {
  const auto labels = pool(300, 2000);
  const auto a = make_split(labels, {3, 10}, 11);
  EXPECT_TRUE(std::is_sorted(a.train.begin(), a.train.end()));
  EXPECT_TRUE(std::is_sorted(a.test.begin(), a.test.end()));
  std::vector<std::size_t> both;
  std::set_intersection(a.train.begin(), a.train.end(), a.test.begin(), a.test.end(), std::back_inserter(both));
  EXPECT_TRUE(both.empty());
  const auto b = make_split(labels, {3, 10}, 11);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  const auto c = make_split(labels, {3, 10}, 12);
  EXPECT_NE(a.train, c.train);
}

TEST(Split, MaxTestBenignCapsTheTestSet) {
  const auto labels = pool(10, 1000);
  SplitOptions opts;
  opts.max_test_benign = 50;
  const auto split = make_split(labels, {1, 1}, 1, opts);
  EXPECT_EQ(split.test.size(), 3u + 50u);
}

TEST(Split, InsufficientData) {
  EXPECT_EQ(code_of([] { make_split(pool(100, 300), {1, 4}, 1); }), Errc::InsufficientData);
  EXPECT_EQ(code_of([] { make_split(pool(1, 300), {1, 4}, 1); }), Errc::InsufficientData);
  EXPECT_EQ(code_of([] { make_split(pool(0, 300), {1, 4}, 1); }), Errc::SingleClassDataset);
  EXPECT_EQ(code_of([] { make_split(pool(50, 0), {1, 4}, 1); }), Errc::SingleClassDataset);
}

TEST(Generator, EmptyCorpus) {
  EXPECT_TRUE(generator::generate_corpus(generator::default_profiles(), 0, 0, 1).empty());
}

TEST(Generator, ReproducibleAndLabelFaithful) {
  const auto profiles = generator::default_profiles();
  const auto a = generator::generate_corpus(profiles, 40, 15, 42);
  const auto b = generator::generate_corpus(profiles, 40, 15, 42);
  std::ostringstream sa, sb;
  http::write_ndjson(sa, a);
  http::write_ndjson(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(std::count_if(a.begin(), a.end(), [](const auto& f) { return f.label == Label::Malicious; }), 15);
  std::set<std::string> ids;
  for (const auto& f : a) ids.insert(f.flow_id);
  EXPECT_EQ(ids.size(), a.size());
  EXPECT_NE(generator::generate_corpus(profiles, 40, 15, 43), a);
}

TEST(Generator, MessagesAreConsistent) {
  const auto flows = generator::generate_corpus(generator::default_profiles(), 50, 50, 8);
  for (const auto& f : flows) {
    ASSERT_FALSE(f.messages.empty());
    EXPECT_TRUE(f.messages.front().is_request());
    EXPECT_EQ(f.payload_segments, generator::payload_segment_count(f, 1460));
    for (std::size_t i = 0; i < f.messages.size(); ++i) {
      const auto& m = f.messages[i];
      EXPECT_EQ(m.wire_length, http::serialize(m).size());
      EXPECT_EQ(m.body_length, m.body.size());
      if (i > 0) {
        EXPECT_LT(f.messages[i - 1].timestamp, m.timestamp);
      }
    }
  }
}

TEST(Generator, TenThousandFlowMeansNearTargets) {
  const auto flows = generator::generate_corpus(generator::default_profiles(), 7700, 2300, 2024);
  const auto s = generator::summarize(flows);
  EXPECT_EQ(s.flows, 10000u);
  EXPECT_NEAR(s.mean_message_bytes, generator::kTargetMeanMessageBytes, 0.2 * generator::kTargetMeanMessageBytes);
  EXPECT_NEAR(s.mean_flow_messages, generator::kTargetMeanFlowMessages, 0.2 * generator::kTargetMeanFlowMessages);
}

TEST(Generator, TrojanUrlsAreLongerOnAverage) {
  const auto flows = generator::generate_corpus(generator::default_profiles(), 500, 500, 6);
  double len[2] = {0, 0};
  double n[2] = {0, 0};
  for (const auto& f : flows) {
    const int k = f.label == Label::Malicious ? 1 : 0;
    for (const auto& m : f.messages) {
      if (!m.is_request()) continue;
      len[k] += static_cast<double>(m.url.size());
      n[k] += 1;
    }
  }
  EXPECT_GT(len[1] / n[1], len[0] / n[0]);
}

TEST(Generator, RejectsBadProfiles) {
  auto doc = nlohmann::json::parse(generator::default_profiles_json());
  auto with = [&](auto edit) {
    auto d = doc;
    edit(d["profiles"][0]);
    return code_of([&] { generator::parse_profiles(d.dump()); });
  };
  EXPECT_EQ(with([](auto& p) { p["surprise"] = 1; }), Errc::InvalidArgument);
  EXPECT_EQ(with([](auto& p) { p["interval_seconds"] = {{"kind", "normal"}, {"a", 1}, {"b", -1}}; }),
            Errc::InvalidArgument);
  EXPECT_EQ(with([](auto& p) { p["transactions"] = {{"kind", "uniform_int"}, {"a", 5}, {"b", 2}}; }),
            Errc::InvalidArgument);
  EXPECT_EQ(with([](auto& p) { p["methods"]["weights"] = {0, 0, 0}; }), Errc::InvalidArgument);
  EXPECT_EQ(with([](auto& p) { p["class"] = "grey"; }), Errc::InvalidArgument);
  EXPECT_EQ(with([](auto& p) { p.erase("hosts"); }), Errc::InvalidArgument);
  EXPECT_EQ(code_of([] { generator::parse_profiles("{not json"); }), Errc::InvalidArgument);
  EXPECT_EQ(code_of([] { generator::parse_profiles(R"({"profiles": []})"); }), Errc::InvalidArgument);

  auto only_benign = doc;
  auto& list = only_benign["profiles"];
  list.erase(std::remove_if(list.begin(), list.end(), [](const auto& p) { return p["class"] == "trojan"; }),
             list.end());
  const auto set = generator::parse_profiles(only_benign.dump());
  EXPECT_EQ(code_of([&] { generator::generate_corpus(set, 1, 1, 1); }), Errc::InvalidArgument);
}

TEST(Generator, ShippedConfigMatchesEmbeddedProfiles) {
  const auto file = generator::load_profiles(HSTF_SOURCE_DIR "/config/default_profiles.json");
  EXPECT_EQ(file.hash, generator::default_profiles().hash);
  EXPECT_EQ(slurp(HSTF_SOURCE_DIR "/config/default_profiles.json"), std::string(generator::default_profiles_json()));
  EXPECT_TRUE(std::regex_match(file.hash, std::regex("[0-9a-f]{64}")));
}

TEST(Csv, FourDecimalFormatting) {
  EXPECT_EQ(format_decimal(0.99374), "0.9937");
  EXPECT_EQ(format_decimal(1.0), "1.0000");
  EXPECT_EQ(format_decimal(12.3456789), "12.3457");

  std::ostringstream out;
  const std::vector<MetricsRow> rows = {{"3:10", 0.99, 0.98, 0.985, 12.5, 1.25}, {"1:24", 1, 0.9, 0.95, 10, 1}};
  write_metrics_csv(out, "proportion", rows);
  EXPECT_EQ(out.str(),
            "proportion,P,R,F1,train_time_s,test_time_s\n"
            "3:10,0.9900,0.9800,0.9850,12.5000,1.2500\n"
            "1:24,1.0000,0.9000,0.9500,10.0000,1.0000\n");
}

TEST(Csv, HistoryLeavesValidationColumnsEmptyWhenUnmeasured) {
  model::TrainHistory h;
  model::EpochRecord e;
  e.epoch = 1;
  e.train_loss = 0.5;
  e.seconds = 2;
  h.epochs.push_back(e);
  e.epoch = 2;
  e.validated = true;
  e.validation = metrics_from_counts(1, 0, 1, 1);
  h.epochs.push_back(e);
  std::ostringstream out;
  write_history_csv(out, h);
  EXPECT_EQ(out.str(),
            "epoch,train_loss,P,R,F1,seconds\n"
            "1,0.5000,,,,2.0000\n"
            "2,0.5000,1.0000,0.5000,0.6667,2.0000\n");
}

TEST(Protocol, SweepHasOneRowPerValueAndSingleValueEqualsPlainRun) {
  const auto flows = generator::generate_corpus(generator::default_profiles(), 300, 60, 3);
  RunSettings s;
  s.config = quick_config();
  s.config.epochs = 1;
  s.repeats = 1;
  const std::vector<std::size_t> values = {100, 400};
  const auto points = run_sweep(flows, SweepAxis::PacketSize, values, s);
  ASSERT_EQ(points.size(), 2u);
  EXPECT_EQ(points[0].value, 100u);
  EXPECT_EQ(points[1].value, 400u);

  const std::vector<std::size_t> single = {400};
  const auto one = run_sweep(flows, SweepAxis::PacketSize, single, s);
  const auto plain = run_repeated(flows, s);
  EXPECT_EQ(one[0].summary.runs[0].metrics, plain.runs[0].metrics);
  EXPECT_EQ(points[1].summary.runs[0].metrics, plain.runs[0].metrics);
  EXPECT_EQ(code_of([&] { run_sweep(flows, SweepAxis::FlowSize, {}, s); }), Errc::InvalidArgument);
  EXPECT_EQ(parse_axis("flow-size"), SweepAxis::FlowSize);
  EXPECT_EQ(code_of([] { parse_axis("depth"); }), Errc::InvalidArgument);
}

TEST(Protocol, AblationArmsShareSplitsAndGateDisablesStatistics) {
  const auto flows = generator::generate_corpus(generator::default_profiles(), 300, 60, 4);
  RunSettings s;
  s.config = quick_config();
  s.config.epochs = 1;
  s.repeats = 2;
  const auto r = run_ablation(flows, s);
  ASSERT_EQ(r.with_statistics.runs.size(), 2u);
  ASSERT_EQ(r.without_statistics.runs.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(r.with_statistics.runs[i].seed, r.without_statistics.runs[i].seed);
    EXPECT_EQ(r.with_statistics.runs[i].train_size, r.without_statistics.runs[i].train_size);
    EXPECT_EQ(r.with_statistics.runs[i].test_size, r.without_statistics.runs[i].test_size);
  }
  const auto again = run_ablation(flows, s);
  EXPECT_EQ(again.without_statistics.runs[1].metrics, r.without_statistics.runs[1].metrics);
  EXPECT_EQ(again.with_statistics.runs[0].history.epochs[0].train_loss,
            r.with_statistics.runs[0].history.epochs[0].train_loss);
}

TEST(Protocol, ImbalanceCurvesHaveEpochRowsPerProportion) {
  const auto flows = generator::generate_corpus(generator::default_profiles(), 500, 40, 9);
  RunSettings s;
  s.config = quick_config();
  s.repeats = 1;
  const std::vector<ProportionSpec> specs = {{3, 10}, {1, 5}};
  const auto points = run_imbalance(flows, specs, s);
  ASSERT_EQ(points.size(), 2u);
  std::ostringstream out;
  write_curves_csv(out, points);
  std::size_t rows = 0;
  for (const auto& p : points) {
    EXPECT_EQ(p.recall_curve.size(), s.config.epochs);
    rows += p.recall_curve.size();
  }
  const std::string text = out.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), rows + 1);
  EXPECT_EQ(text.rfind("proportion,epoch,recall\n3:10,1,", 0), 0u);

  const std::vector<ProportionSpec> impossible = {{3, 10}, {1, 1000}};
  EXPECT_EQ(code_of([&] { run_imbalance(flows, impossible, s); }), Errc::InsufficientData);
}
