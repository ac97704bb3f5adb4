#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "nrt/cli.hpp"
#include "support/toy.hpp"

using namespace nrt;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / fs::path("nrt_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct CaptureStdout {
  std::ostringstream captured;
  std::streambuf* saved;
  CaptureStdout() : saved(std::cout.rdbuf(captured.rdbuf())) {}
  ~CaptureStdout() { std::cout.rdbuf(saved); }
};

void write_generic_fixture(const std::string& path, int lines) {
  std::ofstream out(path, std::ios::binary);
  const char* sentiments[3] = {"bad", "decent", "great"};
  for (int i = 0; i < lines; ++i) {
    const int rating = i % 6;
    out << R"({"user":"u)" << i % 4 << R"(","item":"i)" << i % 3 << R"(","rating":)" << rating
        << R"(,"review":"A )" << sentiments[rating / 2] << R"( widget number )" << i
        << R"(. More text follows.","tips":")" << sentiments[rating / 2] << R"( widget"})"
        << "\n";
  }
}

std::string small_config() {
  return "user_dim=8\nitem_dim=8\nword_dim=8\nhidden_dim=12\nrating_layers=2\n"
         "batch_size=4\nmax_epochs=3\npatience=0\nseed=11\nadadelta_eps=1e-4\n"
         "beam_width=2\nmax_tip_len=6\n";
}

}  // namespace

TEST_CASE("cli: prepare reports an 8/1/1 split on a 10-line fixture") {
  TempDir dir;
  write_generic_fixture(dir.file("data.jsonl"), 10);
  CaptureStdout cap;
  const int code = cli::run({"nrt", "prepare", "--input", dir.file("data.jsonl"), "--schema",
                             "generic", "--min-tf", "1", "--seed", "3", "--out",
                             dir.file("corpus.box")});
  REQUIRE(code == 0);
  const std::string log = cap.captured.str();
  CHECK(log.find("train=8") != std::string::npos);
  CHECK(log.find("valid=1") != std::string::npos);
  CHECK(log.find("test=1") != std::string::npos);
  PreparedCorpus corpus = load_corpus(dir.file("corpus.box"));
  CHECK(corpus.splits.train.size() == 8);
}

TEST_CASE("cli: bad schema or missing input exit with usage code 2") {
  TempDir dir;
  write_generic_fixture(dir.file("data.jsonl"), 10);
  CHECK(cli::run({"nrt", "prepare", "--input", dir.file("data.jsonl"), "--schema", "nope",
                  "--out", dir.file("c.box")}) == 2);
  CHECK(cli::run({"nrt", "prepare", "--input", dir.file("absent.jsonl"), "--out",
                  dir.file("c.box")}) == 2);
  CHECK(cli::run({"nrt", "train", "--corpus", dir.file("absent.box"), "--out",
                  dir.file("run")}) == 2);
  CHECK(cli::run({"nrt", "definitely-not-a-command"}) == 2);
}

TEST_CASE("cli: prepare is deterministic for a fixed seed") {
  TempDir dir;
  write_generic_fixture(dir.file("data.jsonl"), 30);
  CaptureStdout cap;
  REQUIRE(cli::run({"nrt", "prepare", "--input", dir.file("data.jsonl"), "--seed", "5",
                    "--min-tf", "1", "--out", dir.file("a.box")}) == 0);
  REQUIRE(cli::run({"nrt", "prepare", "--input", dir.file("data.jsonl"), "--seed", "5",
                    "--min-tf", "1", "--out", dir.file("b.box")}) == 0);
  CHECK(slurp(dir.file("a.box")) == slurp(dir.file("b.box")));
}

TEST_CASE("cli: train writes checkpoint, report and config echo; generate and evaluate run") {
  TempDir dir;
  write_generic_fixture(dir.file("data.jsonl"), 40);
  CaptureStdout cap;
  REQUIRE(cli::run({"nrt", "prepare", "--input", dir.file("data.jsonl"), "--min-tf", "1",
                    "--seed", "3", "--out", dir.file("corpus.box")}) == 0);
  std::ofstream(dir.file("run.cfg")) << small_config();
  REQUIRE(cli::run({"nrt", "train", "--corpus", dir.file("corpus.box"), "--config",
                    dir.file("run.cfg"), "--out", dir.file("run"), "--quiet"}) == 0);
  CHECK(fs::exists(dir.file("run/checkpoint.nrt")));
  CHECK(fs::exists(dir.file("run/config.echo")));
  const std::string report = slurp(dir.file("run/report.csv"));
  CHECK(report.find("epoch,joint,") == 0);
  // header plus three epochs
  CHECK(std::count(report.begin(), report.end(), '\n') == 4);
  const std::string echo = slurp(dir.file("run/config.echo"));
  CHECK(echo.find("hidden_dim=12\n") != std::string::npos);
  CHECK(echo.find("seed=11\n") != std::string::npos);

  REQUIRE(cli::run({"nrt", "generate", "--checkpoint", dir.file("run/checkpoint.nrt"),
                    "--corpus", dir.file("corpus.box"), "--split", "test", "--out",
                    dir.file("pred.tsv")}) == 0);
  const std::string pred = slurp(dir.file("pred.tsv"));
  CHECK(pred.rfind("user\titem\trating\ttips\tnorm_score\traw_score\n", 0) == 0);

  REQUIRE(cli::run({"nrt", "generate", "--checkpoint", dir.file("run/checkpoint.nrt"),
                    "--corpus", dir.file("corpus.box"), "--split", "test", "--out",
                    dir.file("pred2.tsv")}) == 0);
  CHECK(pred == slurp(dir.file("pred2.tsv")));

  REQUIRE(cli::run({"nrt", "evaluate", "--predictions", dir.file("pred.tsv"), "--corpus",
                    dir.file("corpus.box"), "--split", "test", "--out",
                    dir.file("metrics.txt")}) == 0);
  const std::string metrics = slurp(dir.file("metrics.txt"));
  CHECK(metrics.find("mae=") != std::string::npos);
  CHECK(metrics.find("rouge_su4_f1=") != std::string::npos);

  // inspect both containers
  CHECK(cli::run({"nrt", "inspect", "--path", dir.file("corpus.box")}) == 0);
  CHECK(cli::run({"nrt", "inspect", "--path", dir.file("run/checkpoint.nrt")}) == 0);
}

TEST_CASE("cli: beam 1 predictions equal greedy decoding") {
  TempDir dir;
  write_generic_fixture(dir.file("data.jsonl"), 40);
  CaptureStdout cap;
  REQUIRE(cli::run({"nrt", "prepare", "--input", dir.file("data.jsonl"), "--min-tf", "1",
                    "--seed", "3", "--out", dir.file("corpus.box")}) == 0);
  std::ofstream(dir.file("run.cfg")) << small_config();
  REQUIRE(cli::run({"nrt", "train", "--corpus", dir.file("corpus.box"), "--config",
                    dir.file("run.cfg"), "--out", dir.file("run"), "--quiet"}) == 0);
  REQUIRE(cli::run({"nrt", "generate", "--checkpoint", dir.file("run/checkpoint.nrt"),
                    "--corpus", dir.file("corpus.box"), "--split", "test", "--beam", "1",
                    "--max-len", "6", "--out", dir.file("pred.tsv")}) == 0);

  PreparedCorpus corpus = load_corpus(dir.file("corpus.box"));
  LoadedCheckpoint loaded = load_checkpoint(dir.file("run/checkpoint.nrt"));
  std::istringstream pred(slurp(dir.file("pred.tsv")));
  std::string line;
  std::getline(pred, line);  // header
  for (const Interaction& it : corpus.splits.test) {
    REQUIRE(std::getline(pred, line));
    const std::size_t a = line.find('\t');
    const std::size_t b = line.find('\t', a + 1);
    const std::size_t c = line.find('\t', b + 1);
    const std::size_t d = line.find('\t', c + 1);
    const std::string tips = line.substr(c + 1, d - c - 1);
    CHECK(tips == cli::render_tokens(corpus.vocab,
                                     greedy_decode(loaded.params, it.user, it.item, 6)));
  }
}

TEST_CASE("cli: vocabulary hash mismatch fails generation") {
  TempDir dir;
  write_generic_fixture(dir.file("data.jsonl"), 40);
  CaptureStdout cap;
  REQUIRE(cli::run({"nrt", "prepare", "--input", dir.file("data.jsonl"), "--min-tf", "1",
                    "--seed", "3", "--out", dir.file("a.box")}) == 0);
  REQUIRE(cli::run({"nrt", "prepare", "--input", dir.file("data.jsonl"), "--min-tf", "3",
                    "--seed", "3", "--out", dir.file("b.box")}) == 0);
  std::ofstream(dir.file("run.cfg")) << small_config();
  REQUIRE(cli::run({"nrt", "train", "--corpus", dir.file("a.box"), "--config",
                    dir.file("run.cfg"), "--out", dir.file("run"), "--quiet"}) == 0);
  CHECK(cli::run({"nrt", "generate", "--checkpoint", dir.file("run/checkpoint.nrt"),
                  "--corpus", dir.file("b.box"), "--out", dir.file("pred.tsv")}) == 1);
}

TEST_CASE("cli: ground-truth predictions score perfectly") {
  TempDir dir;
  write_generic_fixture(dir.file("data.jsonl"), 40);
  CaptureStdout cap;
  REQUIRE(cli::run({"nrt", "prepare", "--input", dir.file("data.jsonl"), "--min-tf", "1",
                    "--seed", "3", "--out", dir.file("corpus.box")}) == 0);
  PreparedCorpus corpus = load_corpus(dir.file("corpus.box"));
  std::ofstream pred(dir.file("pred.tsv"));
  pred << "user\titem\trating\ttips\tnorm_score\traw_score\n";
  for (const Interaction& it : corpus.splits.test) {
    pred << corpus.user_names[static_cast<std::size_t>(it.user)] << '\t'
         << corpus.item_names[static_cast<std::size_t>(it.item)] << '\t' << it.rating << '\t'
         << it.tips_text << "\t0\t0\n";
  }
  pred.close();
  REQUIRE(cli::run({"nrt", "evaluate", "--predictions", dir.file("pred.tsv"), "--corpus",
                    dir.file("corpus.box"), "--split", "test", "--out",
                    dir.file("metrics.txt")}) == 0);
  const std::string metrics = slurp(dir.file("metrics.txt"));
  CHECK(metrics.find("mae=0.000000\n") != std::string::npos);
  CHECK(metrics.find("rmse=0.000000\n") != std::string::npos);
  CHECK(metrics.find("rouge_1_f1=1.000000\n") != std::string::npos);
  CHECK(metrics.find("rouge_l_f1=1.000000\n") != std::string::npos);

  SUBCASE("misaligned predictions exit nonzero") {
    std::ofstream bad(dir.file("bad.tsv"));
    bad << "user\titem\trating\ttips\tnorm_score\traw_score\n";
    bad << "u0\ti0\t3.0\twhatever\t0\t0\n";
    bad.close();
    CHECK(cli::run({"nrt", "evaluate", "--predictions", dir.file("bad.tsv"), "--corpus",
                    dir.file("corpus.box"), "--split", "test"}) == 1);
  }
}

TEST_CASE("cli: empty-tips predictions still yield rating metrics and zero rouge") {
  TempDir dir;
  write_generic_fixture(dir.file("data.jsonl"), 40);
  CaptureStdout cap;
  REQUIRE(cli::run({"nrt", "prepare", "--input", dir.file("data.jsonl"), "--min-tf", "1",
                    "--seed", "3", "--out", dir.file("corpus.box")}) == 0);
  PreparedCorpus corpus = load_corpus(dir.file("corpus.box"));
  std::ofstream pred(dir.file("pred.tsv"));
  pred << "user\titem\trating\ttips\tnorm_score\traw_score\n";
  for (const Interaction& it : corpus.splits.test) {
    pred << corpus.user_names[static_cast<std::size_t>(it.user)] << '\t'
         << corpus.item_names[static_cast<std::size_t>(it.item)] << '\t' << it.rating
         << "\t\t0\t0\n";
  }
  pred.close();
  REQUIRE(cli::run({"nrt", "evaluate", "--predictions", dir.file("pred.tsv"), "--corpus",
                    dir.file("corpus.box"), "--split", "test", "--out",
                    dir.file("metrics.txt")}) == 0);
  const std::string metrics = slurp(dir.file("metrics.txt"));
  CHECK(metrics.find("mae=0.000000\n") != std::string::npos);
  CHECK(metrics.find("rouge_1_f1=0.000000\n") != std::string::npos);
}

TEST_CASE("cli: no-length-norm and clamped-rating generation flags") {
  TempDir dir;
  write_generic_fixture(dir.file("data.jsonl"), 40);
  CaptureStdout cap;
  REQUIRE(cli::run({"nrt", "prepare", "--input", dir.file("data.jsonl"), "--min-tf", "1",
                    "--seed", "3", "--out", dir.file("corpus.box")}) == 0);
  std::ofstream(dir.file("run.cfg")) << small_config();
  REQUIRE(cli::run({"nrt", "train", "--corpus", dir.file("corpus.box"), "--config",
                    dir.file("run.cfg"), "--out", dir.file("run"), "--quiet"}) == 0);
  REQUIRE(cli::run({"nrt", "generate", "--checkpoint", dir.file("run/checkpoint.nrt"),
                    "--corpus", dir.file("corpus.box"), "--split", "test",
                    "--no-length-norm", "--clamp-ratings", "--out",
                    dir.file("pred.tsv")}) == 0);
  std::istringstream pred(slurp(dir.file("pred.tsv")));
  std::string line;
  std::getline(pred, line);  // header
  while (std::getline(pred, line)) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    REQUIRE(fields.size() == 6);
    const double rating = std::stod(fields[2]);
    CHECK((rating >= 0.0 && rating <= 5.0));
    CHECK(fields[4] == fields[5]);  // normalized score falls back to raw
  }
}

TEST_CASE("cli: a diverging run labels its artifacts and exits nonzero") {
  TempDir dir;
  write_generic_fixture(dir.file("data.jsonl"), 40);
  CaptureStdout cap;
  REQUIRE(cli::run({"nrt", "prepare", "--input", dir.file("data.jsonl"), "--min-tf", "1",
                    "--seed", "3", "--out", dir.file("corpus.box")}) == 0);
  std::ofstream(dir.file("bad.cfg")) << small_config() << "init_range=1e200\nlambda_reg=1\n";
  CHECK(cli::run({"nrt", "train", "--corpus", dir.file("corpus.box"), "--config",
                  dir.file("bad.cfg"), "--out", dir.file("run"), "--quiet"}) == 1);
  CHECK(fs::exists(dir.file("run/ABORTED")));
  CHECK(slurp(dir.file("run/ABORTED")).find("not finite") != std::string::npos);
}

TEST_CASE("cli: stemmed evaluation merges inflected forms") {
  TempDir dir;
  std::ofstream(dir.file("cand.txt")) << "amazing cables\n";
  std::ofstream(dir.file("ref.txt")) << "amazing cable\n";
  CaptureStdout cap;
  REQUIRE(cli::run({"nrt", "evaluate", "--candidates", dir.file("cand.txt"), "--references",
                    dir.file("ref.txt"), "--out", dir.file("plain.txt")}) == 0);
  REQUIRE(cli::run({"nrt", "evaluate", "--candidates", dir.file("cand.txt"), "--references",
                    dir.file("ref.txt"), "--stem", "--out", dir.file("stemmed.txt")}) == 0);
  CHECK(slurp(dir.file("plain.txt")).find("rouge_1_f1=0.500000\n") != std::string::npos);
  CHECK(slurp(dir.file("stemmed.txt")).find("rouge_1_f1=1.000000\n") != std::string::npos);
}

TEST_CASE("cli: evaluate candidate/reference text files directly") {
  TempDir dir;
  std::ofstream(dir.file("cand.txt")) << "great widget\nterrible thing\n";
  std::ofstream(dir.file("ref.txt")) << "great widget\nwonderful thing\n";
  CaptureStdout cap;
  REQUIRE(cli::run({"nrt", "evaluate", "--candidates", dir.file("cand.txt"), "--references",
                    dir.file("ref.txt"), "--out", dir.file("m.txt")}) == 0);
  const std::string metrics = slurp(dir.file("m.txt"));
  CHECK(metrics.find("count=2\n") != std::string::npos);
  CHECK(metrics.find("rouge_1_f1=0.750000\n") != std::string::npos);
  CHECK(metrics.find("mae=") == std::string::npos);  // no ratings in this mode

  CHECK(cli::run({"nrt", "evaluate", "--candidates", dir.file("cand.txt")}) == 2);
  CHECK(cli::run({"nrt", "evaluate"}) == 2);
}

TEST_CASE("run config rejects unknown keys and keeps defaults for missing ones") {
  CHECK_THROWS_AS(RunConfig::from_string("definitely_unknown=1\n"), UsageError);
  CHECK_THROWS_AS(RunConfig::from_string("hidden_dim\n"), UsageError);
  CHECK_THROWS_AS(RunConfig::from_string("hidden_dim=abc\n"), UsageError);
  RunConfig config = RunConfig::from_string("# comment only\nhidden_dim=64\n");
  CHECK(config.hypers.hidden_dim == 64);
  CHECK(config.hypers.user_dim == 300);  // untouched default
  CHECK(config.hypers.beam_width == 4);
  CHECK(config.hypers.max_tip_len == 20);
  CHECK(config.hypers.lambda_reg == 0.0001);
  CHECK(config.min_tf == 5);
  const std::string echo = config.echo();
  CHECK(echo.find("hidden_dim=64\n") != std::string::npos);
  CHECK(echo.find("user_dim=300\n") != std::string::npos);
}
