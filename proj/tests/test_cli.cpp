#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "tensorql/cli.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kData = TESTDATA_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

fs::path fresh_session() {
  static int counter = 0;
  const fs::path p = fs::temp_directory_path() / ("tensorql_cli_test_" + std::to_string(::getpid()) + "_" +
                                                  std::to_string(counter++));
  fs::remove(p);
  return p;
}

Outcome run(std::vector<std::string> args, const std::string& stdin_text = "") {
  std::vector<std::string> full = {"--session", fresh_session().string(), "--graph",
                                   "g=" + (kData / "toy.nt").string(), "--graph",
                                   "g2=" + (kData / "toy2.nt").string()};
  full.insert(full.end(), args.begin(), args.end());
  std::istringstream in(stdin_text);
  std::ostringstream out, err;
  const int code = tensorql::cli::run(full, in, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> golden_args(const fs::path& query) {
  fs::path args_file = query;
  args_file.replace_extension(".args");
  std::string line = fs::exists(args_file) ? slurp(args_file) : "query {query}";
  std::vector<std::string> out;
  std::istringstream words(line);
  std::string w;
  while (words >> w) {
    for (const auto& [key, value] : {std::pair<std::string, std::string>{"{query}", query.string()},
                                     {"{dir}", kData.string()}}) {
      if (auto pos = w.find(key); pos != std::string::npos) w.replace(pos, key.size(), value);
    }
    out.push_back(w);
  }
  return out;
}

std::vector<fs::path> golden_queries() {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(kData)) {
    if (e.path().extension() == ".query") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

class Golden : public ::testing::TestWithParam<fs::path> {};

TEST_P(Golden, MatchesExpectedOutput) {
  const fs::path q = GetParam();
  fs::path expected = q, exit_file = q;
  expected.replace_extension(".expected");
  exit_file.replace_extension(".exitcode");
  const int want_code = fs::exists(exit_file) ? std::stoi(slurp(exit_file)) : 0;
  const Outcome o = run(golden_args(q));
  if (std::getenv("TENSORQL_UPDATE_GOLDEN")) {
    std::ofstream(expected) << o.out;
  }
  EXPECT_EQ(o.code, want_code) << o.err;
  ASSERT_TRUE(fs::exists(expected)) << expected;
  EXPECT_EQ(o.out, slurp(expected));
}

INSTANTIATE_TEST_SUITE_P(Corpus, Golden, ::testing::ValuesIn(golden_queries()), [](const auto& info) {
  return info.param.stem().string();
});

TEST(Cli, QueryFromStdin) {
  const Outcome o = run({"query", "-"}, "SELECT ?y WHERE { <alice> <knows> ?y }");
  EXPECT_EQ(o.code, 0);
  EXPECT_EQ(o.out, "?y\n<bob>\n<carol>\n");
}

TEST(Cli, DeterministicAcrossRuns) {
  const auto args = golden_args(kData / "explain_distinct.query");
  EXPECT_EQ(run(args).out, run(args).out);
  const std::vector<std::string> d = {"decompose", "g", "--rank", "2"};
  EXPECT_EQ(run(d).out, run(d).out);
}

TEST(Cli, LoadRecordsAliasInSession) {
  const fs::path session = fresh_session();
  std::ostringstream out, err;
  std::istringstream in;
  ASSERT_EQ(tensorql::cli::run({"--session", session.string(), "load", "people", (kData / "toy.nt").string()}, in,
                               out, err),
            0);
  std::ostringstream out2;
  EXPECT_EQ(tensorql::cli::run({"--session", session.string(), "stats", "people"}, in, out2, err), 0);
  EXPECT_NE(out2.str().find("nnz 7"), std::string::npos);
  fs::remove(session);
}

TEST(Cli, EnvironmentSeedIsDefault) {
  ::setenv("TENSORQL_SEED", "1", 1);
  const Outcome env = run({"decompose", "g", "--rank", "3"});
  ::unsetenv("TENSORQL_SEED");
  const Outcome flag = run({"decompose", "g", "--rank", "3", "--seed", "1"});
  EXPECT_EQ(env.out, flag.out);
}

TEST(Cli, ExportWritesFactorFiles) {
  const fs::path dir = fs::temp_directory_path() / "tensorql_cli_export";
  fs::remove_all(dir);
  const Outcome o = run({"decompose", "g", "--naive", "--export", dir.string()});
  EXPECT_EQ(o.code, 0);
  for (const char* f : {"factors.header", "A.coo", "B.coo", "C.coo"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  fs::remove_all(dir);
}

TEST(Cli, BadUsageExitsOne) {
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"query"}).code, 1);
  EXPECT_EQ(run({"decompose", "g"}).code, 1);
}
