#include <doctest.h>

#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(EBARD_CLI) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (const auto n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path dir() {
  static const fs::path d = [] {
    auto p = fs::temp_directory_path() / "ebard_cli_test";
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::string file(const std::string& name, const std::string& text) {
  const auto p = dir() / name;
  std::ofstream(p) << text;
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("check-ard") {
    const auto unit = file("unit.csv", "1,0,0,1\n0,1,0,1\n0,0,1,1\n");
    auto r = run("check-ard --input " + unit);
    CHECK(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["divergent"] == true);
    r = run("check-ard --input " + file("two.csv", "1,2\n"));
    CHECK(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["divergent"] == false);
    CHECK(run("check-ard --input " + (dir() / "missing.csv").string()).code == 2);
    CHECK(run("check-ard --input " + file("bad.csv", "1,nan\n")).code == 2);
  }

  TEST_CASE("estimate") {
    auto r = run("estimate --model ridge --input " + (dir() / "two.csv").string());
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["lambda"].get<double>() == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    r = run("estimate --model group-lasso --input " + (dir() / "unit.csv").string());
    REQUIRE(r.code == 0);
    const auto d = nlohmann::json::parse(r.out);
    CHECK(d["lambda"] == "infinity");
    CHECK(d["map_weights"] == nlohmann::json::array({0.0, 0.0, 0.0}));
    CHECK(run("estimate --model elastic --input " + (dir() / "two.csv").string()).code == 2);
  }

  TEST_CASE("estimate with groups") {
    // 6 x 6 identity design, groups of three
    std::string csv;
    const double y[6] = {2.0, 0.5, -1.0, 0.2, 0.1, 0.3};
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) csv += (i == j ? "1," : "0,");
      csv += std::to_string(y[i]) + "\n";
    }
    const auto data = file("six.csv", csv);
    const auto groups = file("g.json", R"({"groups": [[0, 1, 2], [3, 4, 5]]})");
    const auto r = run("estimate --model group-lasso --input " + data + " --groups " + groups);
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    REQUIRE(j["groups"].size() == 2);
    CHECK(j["groups"][0]["lambda"].is_number());
    CHECK(j["groups"][1]["lambda"] == "infinity");
  }

  TEST_CASE("curve shapes") {
    auto r = run("curve --model ridge --grid 0.01,100,41 --input " + (dir() / "two.csv").string());
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "lambda,log_z,branch");
    std::vector<double> v;
    while (std::getline(lines, line)) v.push_back(std::stod(line.substr(line.find(',') + 1)));
    REQUIRE(v.size() == 41);
    const auto top = std::max_element(v.begin(), v.end()) - v.begin();
    CHECK(top > 0);
    CHECK(top < 40);

    r = run("curve --model lasso --grid 0.01,100,41 --input " + (dir() / "unit.csv").string());
    REQUIRE(r.code == 0);
    std::istringstream l2(r.out);
    std::getline(l2, line);
    double prev = -1e300;
    while (std::getline(l2, line)) {
      const double x = std::stod(line.substr(line.find(',') + 1));
      CHECK(x >= prev);
      prev = x;
    }
  }

  TEST_CASE("curve engines") {
    const auto three = file("three.csv", "1,0,0,2\n0,1,0,0.5\n0,0,1,1\n0,0,0,0\n");
    const std::string mc = "mc-curve --model group-lasso --samples 20000 --seed 5 --grid 0.1,10,5 --input " + three;
    const auto a = run(mc);
    const auto b = run(mc);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out.find(",MC,") != std::string::npos);
    const auto out = dir() / "curve.csv";
    REQUIRE(run(mc + " --output " + out.string()).code == 0);
    CHECK(slurp(out) == a.out);
    const auto side = nlohmann::json::parse(slurp(out.string() + ".asymptote.json"));
    CHECK(side.contains("second_order_coeff"));

    const auto four = file("four.csv", "1,0,0,0,2\n0,1,0,0,1\n0,0,1,0,1\n0,0,0,1,1\n");
    CHECK(run("curve --model group-lasso --input " + four).code == 3);
    CHECK(run("curve --model group-lasso --engine oracle --input " + four).code == 3);
    CHECK(run("curve --model ridge --engine closed --grid 1,0.1,5 --input " + four).code == 2);
  }

  TEST_CASE("whiten") {
    const auto raw = file("raw.csv", "1,0.5,1\n0,1,2\n1,-1,0\n2,0,1\n");
    const auto r = run("whiten --input " + raw);
    REQUIRE(r.code == 0);
    const auto w = file("white.csv", r.out);
    const auto e = run("check-ard --input " + w);
    CHECK(e.code == 0);
    CHECK(run("whiten --input " + file("rank.csv", "1,2,1\n2,4,0\n3,6,1\n")).code == 2);
  }

  TEST_CASE("verify") {
    auto r = run("verify --quick");
    CHECK(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["passed"] == true);
    r = run("verify --quick --inject-fault erfcx-first-order");
    CHECK(r.code == 4);
    CHECK(nlohmann::json::parse(r.out)["passed"] == false);
  }
}
