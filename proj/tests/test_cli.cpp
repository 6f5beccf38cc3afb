#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "json_util.hpp"
#include "ldiag/cli.hpp"
#include "ldiag/dataio.hpp"
#include "test_support.hpp"

using namespace ldiag;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ldiag");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "ldiag_cli_test";
    fs::remove_all(root_);
    const auto r = cli({"synth", "--generator", "dina", "--learners", "150", "--exercises", "12", "--knowledge", "3",
                        "--seed", "7", "--out", (root_ / "data").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string path(const std::string& rel) { return (root_ / rel).string(); }

  static std::vector<std::string> small_model(std::vector<std::string> args) {
    for (const char* a : {"--epochs", "2", "--sae-epochs", "3", "--d4", "8", "--attn-channels", "2", "--batch", "32"})
      args.push_back(a);
    return args;
  }

  static fs::path root_;
};

fs::path CliTest::root_;

}  // namespace

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Manifest, JsonRoundTrip) {
  RunManifest m;
  m.command = "evaluate";
  m.argv = {"ldiag", "evaluate", "--seed", "3"};
  m.flags = {{"seed", "3"}, {"lr", "0.001"}};
  m.config_json = R"({"d4":64})";
  m.seed = 3;
  m.inputs = {{"r.csv", std::string(64, 'a')}};
  m.outputs = {"out/report.csv"};
  m.started_at = "2026-01-01T00:00:00Z";
  m.finished_at = "2026-01-01T00:00:01Z";
  const auto text = run_manifest_json(m);
  EXPECT_EQ(run_manifest_json(parse_run_manifest_json(text)), text);
}

TEST_F(CliTest, SynthWritesDataAndManifest) {
  for (const char* f : {"responses.csv", "q.csv", "truth.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(root_ / "data" / f)) << f;
  const auto m = parse_run_manifest_json(read_text_file(root_ / "data" / "manifest.json"));
  EXPECT_EQ(m.command, "synth");
  EXPECT_EQ(m.seed, 7u);
  EXPECT_EQ(m.flags.at("learners"), "150");
  EXPECT_EQ(m.flags.at("generator"), "dina");
  EXPECT_EQ(m.outputs.size(), 4u);
  const auto r = load_response_matrix(root_ / "data" / "responses.csv", ResponseFormat::kLongCsv);
  EXPECT_EQ(r.num_learners(), 150);
  EXPECT_EQ(r.num_exercises(), 12);
}

TEST_F(CliTest, EvaluateIsByteReproducibleAndDigestsInputs) {
  auto args = small_model({"evaluate", "--variant", "ldm-id", "--responses", path("data/responses.csv"), "--q",
                           path("data/q.csv"), "--folds", "3", "--seed", "1", "--truth", path("data/truth.json")});
  auto a = args, b = args;
  a.insert(a.end(), {"--out", path("eval_a")});
  b.insert(b.end(), {"--out", path("eval_b"), "--jobs", "2"});
  const auto ra = cli(a), rb = cli(b);
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  const auto csv = read_text_file(root_ / "eval_a" / "report.csv");
  EXPECT_EQ(csv, read_text_file(root_ / "eval_b" / "report.csv"));
  EXPECT_NE(csv.find("mean,ldm-id,"), std::string::npos);
  EXPECT_NE(csv.find("mean,irt,"), std::string::npos);
  EXPECT_NE(csv.find("mean,dina,"), std::string::npos);
  EXPECT_NE(csv.find("mean,oracle,"), std::string::npos);

  const auto m = parse_run_manifest_json(read_text_file(root_ / "eval_a" / "manifest.json"));
  ASSERT_EQ(m.inputs.size(), 3u);
  for (const auto& in : m.inputs) EXPECT_EQ(in.sha256, sha256_file(in.path)) << in.path;
  EXPECT_EQ(m.flags.at("lr"), "0.001");
  EXPECT_EQ(m.flags.at("dropout"), "0.2");
  EXPECT_EQ(m.flags.at("mirt-dims"), "3");
  EXPECT_EQ(m.flags.at("d4"), "8");
  EXPECT_EQ(m.flags.at("folds"), "3");
  EXPECT_FALSE(m.config_json.empty());
  for (const auto& o : m.outputs) EXPECT_TRUE(fs::exists(o)) << o;
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
  write_text_file(root_ / "config.json", R"({"d4": 4, "attn_channels": 3, "folds": 2, "epochs": 1, "sae_epochs": 2})");
  const auto r = cli({"evaluate", "--responses", path("data/responses.csv"), "--q", path("data/q.csv"), "--config",
                      path("config.json"), "--d4", "6", "--out", path("eval_cfg")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = parse_run_manifest_json(read_text_file(root_ / "eval_cfg" / "manifest.json"));
  EXPECT_EQ(m.flags.at("d4"), "6");
  EXPECT_EQ(m.flags.at("attn-channels"), "3");
  EXPECT_EQ(m.flags.at("folds"), "2");
  const auto cfg = detail::parse_json(m.config_json, "config");
  EXPECT_EQ(cfg.at("d4").get<int>(), 6);
  EXPECT_EQ(cfg.at("attn_channels").get<int>(), 3);
}

TEST_F(CliTest, TrainPredictDiagnosePipeline) {
  const auto t = cli(small_model({"train", "--responses", path("data/responses.csv"), "--q", path("data/q.csv"),
                                  "--seed", "4", "--out", path("train")}));
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(root_ / "train" / "model" / "network.ckpt"));
  EXPECT_TRUE(fs::exists(root_ / "train" / "metrics.csv"));

  const auto p = cli({"predict", "--model", path("train/model"), "--learner", "s3", "--exercise", "e2", "--out",
                      path("pred")});
  ASSERT_EQ(p.code, 0) << p.err;
  const double prob = parse_double(p.out.substr(0, p.out.find('\n')));
  EXPECT_GT(prob, 0.0);
  EXPECT_LT(prob, 1.0);
  const auto again = cli({"predict", "--model", path("train/model"), "--learner", "s3", "--exercise", "e2", "--out",
                          path("pred2")});
  EXPECT_EQ(again.out, p.out);

  const auto d = cli({"diagnose", "--model", path("train/model"), "--learners", "s1,s2,s3,s4", "--responses",
                      path("data/responses.csv"), "--out", path("diag")});
  ASSERT_EQ(d.code, 0) << d.err;
  for (const char* f : {"learners.csv", "exercises.csv", "latent_corr.csv", "attention.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(root_ / "diag" / f)) << f;
  const auto learners = read_text_file(root_ / "diag" / "learners.csv");
  EXPECT_EQ(std::count(learners.begin(), learners.end(), '\n'), 5);
}

TEST_F(CliTest, UsageAndValidationErrorsExitOne) {
  auto r = cli({"evaluate", "--bogus"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_NE(r.err.find("--attn-channels"), std::string::npos);
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"evaluate", "--responses", path("data/responses.csv"), "--q", path("data/q.csv"), "--variant", "foo",
                 "--out", path("x")})
                .code,
            1);
  EXPECT_EQ(cli({"train", "--responses", path("data/responses.csv"), "--q", path("data/q.csv"), "--dropout", "1.5",
                 "--out", path("x")})
                .code,
            1);
  write_text_file(root_ / "bad.csv", "learner_id,exercise_id,score\ns1,e1,2\n");
  EXPECT_EQ(cli({"fit-psych", "--responses", path("bad.csv"), "--q", path("data/q.csv"), "--out", path("x")}).code, 1);
  EXPECT_EQ(cli({"synth", "--help"}).code, 0);
}

TEST_F(CliTest, UnknownIdsExitOneAndCorruptBundleExitsTwo) {
  const auto t = cli(small_model({"train", "--responses", path("data/responses.csv"), "--q", path("data/q.csv"),
                                  "--out", path("train2")}));
  ASSERT_EQ(t.code, 0) << t.err;
  const auto u = cli({"predict", "--model", path("train2/model"), "--learner", "nobody", "--exercise", "e1", "--out",
                      path("p")});
  EXPECT_EQ(u.code, 1);
  EXPECT_NE(u.err.find("UnknownLearner"), std::string::npos);

  // Parameter sets from other data than the network: a runtime failure.
  auto config = detail::parse_json(read_text_file(root_ / "train2" / "model" / "config.json"), "config");
  config["data_digest"] = detail::hex64(12345);
  write_text_file(root_ / "train2" / "model" / "config.json", config.dump());
  const auto c = cli({"predict", "--model", path("train2/model"), "--learner", "s1", "--exercise", "e1", "--out",
                      path("p")});
  EXPECT_EQ(c.code, 2) << c.err;
}
