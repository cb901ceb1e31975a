#include <doctest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "domino/cli.hpp"
#include "domino/model_io.hpp"
#include "support.hpp"

using namespace domino;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "domino");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "domino-cli-tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<nlohmann::json> lines(const std::string& text) {
  std::vector<nlohmann::json> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(nlohmann::json::parse(l));
  return out;
}

}  // namespace

TEST_CASE("analyze: spine classes of size two on the resblock fixture") {
  const fs::path dir = scratch("analyze");
  REQUIRE(cli({"fixture", "resblock-toy", "--out", dir.string()}).code == 0);
  const Run r = cli({"analyze", "--model", (dir / "resblock-toy.json").string()});
  REQUIRE(r.code == 0);
  std::size_t pairs = 0;
  for (const auto& j : lines(r.out)) {
    if (!j["prunable"].get<bool>()) continue;
    const auto members = j["coparents"].get<std::vector<std::string>>();
    if (members.front().find("conv") != std::string::npos) {
      CHECK(members.size() == 2);
      ++pairs;
    }
  }
  CHECK(pairs == 16 + 32);
}

TEST_CASE("analyze: linear net classes are singletons") {
  const Run r = cli({"analyze", "--fixture", "linear-toy"});
  REQUIRE(r.code == 0);
  for (const auto& j : lines(r.out)) CHECK(j["coparents"].size() == 1);
}

TEST_CASE("bad input exits with 2") {
  const fs::path dir = scratch("bad");
  write_file_text(dir / "m.json", "{\"format\": 3}");
  write_file_bytes(dir / "m.bin", std::vector<std::uint8_t>{});
  CHECK(cli({"analyze", "--model", (dir / "m.json").string()}).code == 2);
  CHECK(cli({"analyze", "--model", (dir / "none.json").string()}).code == 2);
  CHECK(cli({"prune", "--variant", "bogus", "--fixture", "linear-toy"}).code == 2);
  CHECK(cli({"nonsense"}).code == 2);
}

TEST_CASE("verify passes and catches an injected group-mapping fault") {
  const Run ok = cli({"verify", "--graphs", "20"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  const Run bad = cli({"verify", "--graphs", "20", "--inject-fault", "group-mapping"});
  CHECK(bad.code == 1);
  CHECK(bad.out.find("FAIL oracle") != std::string::npos);
}

TEST_CASE("saliency CSV") {
  const Run r = cli({"saliency", "--fixture", "linear-toy", "--variant", "domino-io", "--metric", "l1", "--avg"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("layer,channel,raw,count,score\n", 0) == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1 + 8);
}

TEST_CASE("prune writes one trace per run, deterministically, and report summarises them") {
  const fs::path dir = scratch("prune");
  REQUIRE(cli({"fixture", "grouped-toy", "--out", dir.string()}).code == 0);
  const std::vector<std::string> base = {"prune",  "--model",   (dir / "grouped-toy.json").string(),
                                         "--synth-preset", "grouped-toy", "--variant", "channel,domino-io",
                                         "--metric", "l1", "--seeds", "1,2,3,4", "--stop-drop", "5"};
  auto args = base;
  args.insert(args.end(), {"--out", (dir / "a").string()});
  REQUIRE(cli(args).code == 0);
  args = base;
  args.insert(args.end(), {"--out", (dir / "b").string()});
  REQUIRE(cli(args).code == 0);

  std::size_t traces = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    ++traces;
    CHECK(read_file_bytes(e.path()) == read_file_bytes(dir / "b" / e.path().filename()));
    const auto text = read_file_bytes(e.path());
    CHECK(std::string(text.begin(), text.end()).find("# stop_drop=5.000000") != std::string::npos);
    CHECK(std::string(text.begin(), text.end()).find("# blob_checksum=fnv1a64:") != std::string::npos);
  }
  CHECK(traces == 8);

  const Run rep = cli({"report", (dir / "a").string(), "--gnuplot"});
  REQUIRE(rep.code == 0);
  CHECK(fs::exists(dir / "a" / "summary.csv"));
  CHECK(fs::exists(dir / "a" / "improvements.csv"));
  CHECK(fs::exists(dir / "a" / "summary.dat"));
  CHECK(rep.out.find("channel,l1,4,") != std::string::npos);
}

TEST_CASE("report rejects malformed traces") {
  const fs::path dir = scratch("malformed");
  write_file_text(dir / "trace_x.csv", "garbage\n");
  CHECK(cli({"report", dir.string()}).code == 2);
  CHECK(cli({"report", scratch("empty").string()}).code == 2);
}
