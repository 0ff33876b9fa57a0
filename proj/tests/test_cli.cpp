#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

#include "ddtcdr/cli.hpp"
#include "ddtcdr/config.hpp"
#include "ddtcdr/error.hpp"
#include "support.hpp"

namespace ddtcdr {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ddtcdr");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is, "test.cfg");
}

// Small problem sizes shared by the pipeline tests.
const std::vector<std::string> kSmall = {"--n-users", "60",        "--n-items", "40",
                                         "--density", "0.15",      "--ae-epochs", "10",
                                         "--epochs",  "3",         "--folds",   "3"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

TEST(Config, EmptyFileGivesDefaults) {
  const ExperimentConfig cfg = parse("");
  EXPECT_EQ(cfg, ExperimentConfig{});
  EXPECT_DOUBLE_EQ(cfg.alpha, 0.03);
  EXPECT_EQ(cfg.embed_dim, 8u);
  EXPECT_EQ(cfg.epochs, 100u);
  EXPECT_DOUBLE_EQ(cfg.tol, 1e-5);
  EXPECT_DOUBLE_EQ(cfg.lr_a, 0.01);
  EXPECT_DOUBLE_EQ(cfg.lr_b, 0.01);
  EXPECT_EQ(cfg.folds, 5u);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, AlphaBoundCited) {
  const ExperimentConfig cfg = parse("alpha = 0.6\n");
  try {
    cfg.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("[0, 0.5)"), std::string::npos) << e.what();
  }
}

TEST(Config, WrittenConfigReloadsIdentically) {
  ExperimentConfig cfg = parse(
      "# comment\nmode = eval\nalpha = 0.1\nhidden = 32,4\nseeds = 1,2,3\nrho = 0.25\n"
      "data_dir = some/dir\nnmf_perturb = false\nalphas = 0,0.05\n");
  std::ostringstream os;
  cfg.write(os);
  EXPECT_EQ(parse(os.str()), cfg);
  EXPECT_EQ(cfg.hidden, (std::vector<std::size_t>{32, 4}));
  EXPECT_EQ(cfg.cv_seeds(), (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(Config, UnknownKeyIsAnErrorWithLine) {
  try {
    parse("alpha = 0.1\nalpah = 0.2\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("test.cfg:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("alpah"), std::string::npos) << msg;
  }
}

TEST(Config, MalformedLinesRejected) {
  EXPECT_THROW(parse("alpha 0.1\n"), ConfigError);
  EXPECT_THROW(parse("alpha = 0.1\nalpha = 0.2\n"), ConfigError);
  EXPECT_THROW(parse("epochs = ten\n"), ConfigError);
  EXPECT_THROW(parse("nmf_perturb = maybe\n"), ConfigError);
}

TEST(Config, OutOfRangeValuesNameTheirBound) {
  EXPECT_THROW(parse("rho = 1.5\n").validate(), ConfigError);
  EXPECT_THROW(parse("density = 0\n").validate(), ConfigError);
  EXPECT_THROW(parse("folds = 1\n").validate(), ConfigError);
  EXPECT_THROW(parse("tau = 1\n").validate(), ConfigError);
  EXPECT_THROW(parse("alphas = 0,0.5\n").validate(), ConfigError);
}

TEST(Config, SettingsCarryValues) {
  const ExperimentConfig cfg = parse("alpha = 0.2\nepochs = 7\nlr_map = 0.5\nembed_dim = 6\n");
  const eval::ExperimentSettings s = cfg.settings();
  EXPECT_DOUBLE_EQ(s.model.alpha, 0.2);
  EXPECT_EQ(s.fit.epochs, 7u);
  EXPECT_DOUBLE_EQ(s.fit.train.lr_map, 0.5);
  EXPECT_EQ(s.autoencoder.embed_dim, 6u);
}

TEST(Cli, SynthWritesDomainFilesAndGroundTruth) {
  const fs::path dir = test::temp_dir("cli_synth");
  const CliRun r = cli(with_small({"synth", "--rho", "0.8", "--seed", "7", "--out", dir.string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* d : {"A", "B"}) {
    for (const char* f : {"_interactions.csv", "_user_features.csv", "_item_features.csv",
                          "_user_schema.txt", "_item_schema.txt"}) {
      EXPECT_TRUE(fs::exists(dir / (std::string(d) + f))) << d << f;
    }
  }
  EXPECT_TRUE(fs::exists(dir / "ground_truth.csv"));
  const ExperimentConfig echo = load_config(dir / "effective_config.txt");
  EXPECT_DOUBLE_EQ(echo.rho, 0.8);
  EXPECT_EQ(echo.seed, 7u);
  EXPECT_EQ(echo.mode, "synth");
}

TEST(Cli, TrainThenEvalProducesParsableReport) {
  const fs::path data = test::temp_dir("cli_data");
  ASSERT_EQ(cli(with_small({"synth", "--out", data.string()})).code, 0);
  const fs::path out = test::temp_dir("cli_train");
  const fs::path cfg = out / "run.cfg";
  {
    std::ofstream os(cfg);
    os << "data_dir = " << data.string() << "\nout_dir = " << out.string()
       << "\nn_users = 60\nae_epochs = 10\nepochs = 3\n";
  }
  const CliRun train = cli({"train", "--config", cfg.string()});
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_TRUE(fs::exists(out / "model.ddtc"));
  EXPECT_TRUE(fs::exists(out / "trace.csv"));

  const CliRun ev = cli({"eval", "-c", cfg.string(), "--model", (out / "model.ddtc").string()});
  ASSERT_EQ(ev.code, 0) << ev.err;
  std::istringstream csv(slurp(out / "report.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "domain,fold,rmse,mae,precision_at_5,recall_at_5");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    const auto parts = split_csv_line(line);
    ASSERT_EQ(parts.size(), 6u) << line;
    EXPECT_GE(std::stod(parts[2]), std::stod(parts[3]));
    ++rows;
  }
  EXPECT_EQ(rows, 4u);
  const auto j = nlohmann::json::parse(slurp(out / "report.json"));
  EXPECT_EQ(j["domains"].size(), 2u);
}

TEST(Cli, NmfLabTraceIsMonotone) {
  const fs::path out = test::temp_dir("cli_nmf");
  const CliRun r = cli({"nmf-lab", "--alpha", "0.1", "--seed", "1", "--nmf-max-iters", "800",
                     "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream csv(slurp(out / "nmf_trace.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "iter,loss");
  double previous = INFINITY;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    const double loss = std::stod(split_csv_line(line).at(1));
    EXPECT_LE(loss, previous + 1e-10) << "row " << rows;
    previous = loss;
    ++rows;
  }
  EXPECT_EQ(rows, 801u);
  const auto j = nlohmann::json::parse(slurp(out / "nmf_summary.json"));
  EXPECT_TRUE(j["conditions"]["b"].get<bool>());
  EXPECT_DOUBLE_EQ(j["perturbation"].get<double>(), 20.0);
}

TEST(Cli, ErrorsAreSingleLineWithKind) {
  const fs::path out = test::temp_dir("cli_err");
  CliRun r = cli({"nmf-lab", "--alpha", "0.6", "--out", out.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: config: ", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);

  r = cli({"eval", "--data", (out / "missing").string(), "--out", out.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: data: ", 0), 0u) << r.err;
}

TEST(Cli, UsageErrorsPrintHelp) {
  CliRun r = cli({"train", "--no-such-flag", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: usage: ", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("Usage: ddtcdr train"), std::string::npos);
  r = cli({});
  EXPECT_EQ(r.code, 2);
  r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("alpha-sweep"), std::string::npos);
}

TEST(Cli, ModeMismatchRejected) {
  const fs::path out = test::temp_dir("cli_mode");
  {
    std::ofstream os(out / "c.cfg");
    os << "mode = train\n";
  }
  const CliRun r = cli({"nmf-lab", "-c", (out / "c.cfg").string(), "-o", out.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("mode"), std::string::npos);
}

TEST(Cli, RerunsAreByteIdentical) {
  std::vector<std::string> files;
  std::vector<std::string> first;
  for (int run = 0; run < 2; ++run) {
    const fs::path root = test::temp_dir("cli_rerun" + std::to_string(run));
    const std::string data = (root / "data").string(), out = (root / "out").string();
    ASSERT_EQ(cli(with_small({"synth", "--seed", "3", "--out", data})).code, 0);
    ASSERT_EQ(cli(with_small({"train", "--seed", "3", "-d", data, "-o", out})).code, 0);
    ASSERT_EQ(cli(with_small({"eval", "--seed", "3", "-d", data, "-o", out})).code, 0);
    ASSERT_EQ(cli(with_small({"alpha-sweep", "--seed", "3", "--alphas", "0,0.1", "-d", data,
                              "-o", out})).code, 0);
    ASSERT_EQ(cli({"nmf-lab", "--seed", "3", "--nmf-max-iters", "200", "-o", out}).code, 0);
    files = {"data/A_interactions.csv", "data/B_item_features.csv", "data/ground_truth.csv",
             "out/trace.csv", "out/report.csv", "out/report.json", "out/sweep.csv",
             "out/nmf_trace.csv", "out/model.ddtc"};
    std::vector<std::string> contents;
    for (const std::string& f : files) contents.push_back(slurp(root / f));
    if (run == 0) {
      first = contents;
    } else {
      for (std::size_t i = 0; i < files.size(); ++i) {
        EXPECT_FALSE(first[i].empty()) << files[i];
        EXPECT_EQ(first[i], contents[i]) << files[i];
      }
    }
  }
}

}  // namespace
}  // namespace ddtcdr
