#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "iotnat/cli.hpp"
#include "iotnat/ingest.hpp"
#include "support/fixtures.hpp"

using namespace iotnat;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// One synthetic corpus shared by the end-to-end cases.
const fs::path& corpus() {
  static testsupport::TempDir dir("cli-corpus");
  static const bool made = [] {
    const auto r = invoke({"synth", "--out", dir.path().string(), "--seed", "3", "--flows-per-device", "80",
                        "--dns-per-device", "80"});
    REQUIRE(r.code == 0);
    return true;
  }();
  (void)made;
  return dir.path();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 1 with a single error line") {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {}, {"frobnicate"}, {"train"}, {"split", "--data", "x.csv", "--bogus"}}) {
    const auto r = invoke(args);
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.rfind("error code=", 0) == 0);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  }
  const auto bad_ratio = invoke({"split", "--data", (corpus() / "flows.csv").string(), "--ratios", "0.5,0.5,0.5"});
  CHECK(bad_ratio.code == cli::kExitUsage);
}

TEST_CASE("help exits 0") {
  const auto r = invoke({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("train") != std::string::npos);
  CHECK(invoke({"detect", "--help"}).code == 0);
}

TEST_CASE("data and io problems exit 2") {
  testsupport::TempDir dir("cli-err");
  // A missing input file is caught by argument validation.
  auto r = invoke({"train", "--data", (dir / "missing.csv").string(), "--model", "all", "--out", dir.path().string()});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.rfind("error code=", 0) == 0);
  std::ofstream(dir / "bad.csv") << "IN_BYTES\n1\n";
  r = invoke({"train", "--data", (dir / "bad.csv").string(), "--model", "all", "--out", dir.path().string()});
  CHECK(r.code == cli::kExitData);
  CHECK(r.err.find("error code=missing-column:") != std::string::npos);
  std::ofstream(dir / "junk.iotnat") << "junk";
  r = invoke({"evaluate", "--artifacts", dir.path().string(), "--test", (corpus() / "flows.csv").string(), "--out",
           (dir / "rep").string()});
  CHECK(r.code == cli::kExitData);
  CHECK(r.err.find("corrupt-artifact") != std::string::npos);
}

TEST_CASE("split writes 7/1/2 of ten flows") {
  testsupport::TempDir dir("cli-split");
  FlowDataset d;
  for (int i = 0; i < 10; ++i) d.flows.push_back(testsupport::labeled(testsupport::flow(i * 1000, i * 1000 + 10), "webcam.A.B", 1));
  ingest::write_flow_csv(dir / "flows.csv", d);
  const auto r = invoke({"split", "--data", (dir / "flows.csv").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("train 7, validation 1, test 2") != std::string::npos);
  CHECK(line_count(dir / "train.csv") == 8);
  CHECK(line_count(dir / "validation.csv") == 2);
  CHECK(line_count(dir / "test.csv") == 3);
}

TEST_CASE("synth -> train -> evaluate -> detect -> baseline") {
  const auto data = corpus();
  for (const char* f : {"flows.csv", "inventory.csv", "dns.jsonl", "scenario.json"}) CHECK(fs::exists(data / f));
  testsupport::TempDir work("cli-e2e");
  const auto arts = work / "artifacts";

  const std::vector<std::string> train_args{"train", "--data", (data / "flows.csv").string(), "--model", "all",
                                            "--out", arts.string(), "--trees", "20", "--seed", "5",
                                            "--percentiles", "5,10", "--trained-at", "1700000000000"};
  REQUIRE(invoke(train_args).code == 0);
  const auto index1 = nlohmann::json::parse(slurp(arts / "training.json"));
  CHECK(index1.size() == 13);
  const auto bytes1 = slurp(arts / "webcam.D_Link.DCS_933L.iotnat");
  REQUIRE(invoke(train_args).code == 0);
  const auto index2 = nlohmann::json::parse(slurp(arts / "training.json"));
  for (auto it = index1.begin(); it != index1.end(); ++it) CHECK(index2[it.key()]["digest"] == it.value()["digest"]);
  CHECK(slurp(arts / "webcam.D_Link.DCS_933L.iotnat") == bytes1);

  const auto eval = invoke({"evaluate", "--artifacts", arts.string(), "--test", (data / "flows.csv").string(), "--out",
                         (work / "report").string()});
  REQUIRE(eval.code == 0);
  CHECK(line_count(work / "report" / "report.csv") == 1 + 13 + 2);
  CHECK(fs::exists(work / "report" / "report.json"));
  CHECK(fs::exists(work / "report" / "roc_webcam.D_Link.DCS_933L.csv"));
  const auto report = nlohmann::json::parse(slurp(work / "report" / "report.json"));
  for (const auto& m : report["models"]) {
    CHECK(m["training_time_s"].is_number());
    CHECK(m["roc_auc"].get<double>() > 0.8);
  }

  CHECK(invoke({"evaluate", "--artifacts", arts.string(), "--test", (data / "flows.csv").string(), "--threshold", "p20",
             "--out", (work / "r2").string()})
            .code == cli::kExitUsage);

  const auto det = invoke({"detect", "--artifacts", (arts / "webcam.D_Link.DCS_933L.iotnat").string(), "--input",
                        "csv:" + (data / "flows.csv").string(), "--audit", (work / "audit.jsonl").string(),
                        "--policy", "log,notify_stub", "--notifications", (work / "notes.jsonl").string()});
  REQUIRE(det.code == 0);
  const auto flows = line_count(data / "flows.csv") - 1;
  CHECK(line_count(work / "audit.jsonl") == flows);
  CHECK(line_count(work / "notes.jsonl") > 0);

  for (const char* method : {"ipid", "domain"}) {
    const auto out = work / (std::string("baseline-") + method);
    const auto r = invoke({"baseline", method, "--data", (data / "dns.jsonl").string(), "--out", out.string()});
    REQUIRE(r.code == 0);
    CHECK(line_count(out / "report.csv") >= 2);
  }
}

TEST_CASE("calibrate adds a percentile to an artifact") {
  testsupport::TempDir work("cli-cal");
  const auto data = corpus();
  REQUIRE(invoke({"train", "--data", (data / "flows.csv").string(), "--model", "socket.TP_Link.HS110", "--out",
               work.path().string(), "--trees", "10", "--percentiles", "10"})
              .code == 0);
  const auto art = work / "socket.TP_Link.HS110.iotnat";
  CHECK(invoke({"split", "--data", (data / "flows.csv").string(), "--out", work.path().string()}).code == 0);
  const auto r = invoke({"calibrate", "--artifact", art.string(), "--validation", (work / "validation.csv").string(),
                      "--percentile", "20", "--out", (work / "cal.iotnat").string()});
  REQUIRE(r.code == 0);
  CHECK(invoke({"evaluate", "--artifacts", (work / "cal.iotnat").string(), "--test", (work / "test.csv").string(),
             "--threshold", "p20", "--out", (work / "rep").string()})
            .code == 0);
}

}  // TEST_SUITE
