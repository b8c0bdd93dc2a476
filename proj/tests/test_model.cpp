#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ebard/errors.hpp"
#include "ebard/model.hpp"

using namespace ebard;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / ("ebard_test_" + name);
  std::ofstream(path) << text;
  return path;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const IngestionError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("csv parse") {
    const Dataset d = parse_dataset_csv("1,0,2\n0,1,3\n0,0,0\n");
    CHECK(d.n() == 3);
    CHECK(d.m() == 2);
    CHECK(d.response() == Eigen::Vector3d(2, 3, 0));
    CHECK(d.design()(1, 1) == 1.0);
  }

  TEST_CASE("csv and json files round trip") {
    const Dataset d = parse_dataset_csv("0.5,-1,2\n3,4.25,1e-3\n");
    const auto csv = write_temp("rt.csv", format_dataset_csv(d));
    const Dataset back = load_dataset(csv);
    CHECK(back.design() == d.design());
    CHECK(back.response() == d.response());
    const auto json = write_temp("rt.json", R"({"design": [[0.5, -1], [3, 4.25]], "response": [2, 0.001]})");
    const Dataset j = load_dataset(json);
    CHECK(j.design() == d.design());
    CHECK(j.response() == d.response());
  }

  TEST_CASE("ingestion errors") {
    CHECK(message_of([] { parse_dataset_csv(""); }).find("no rows") != std::string::npos);
    const auto nan_msg = message_of([] { parse_dataset_csv("1,2\n3,nan\n"); });
    CHECK(nan_msg.find("row 2") != std::string::npos);
    CHECK(nan_msg.find("column 2") != std::string::npos);
    CHECK_THROWS_AS(parse_dataset_csv("1,2,3\n4,5\n"), IngestionError);
    CHECK_THROWS_AS(parse_dataset_csv("1,x\n"), IngestionError);
    CHECK_THROWS_AS(parse_dataset_json(R"({"design": [[1]], "response": [1, 2]})"), IngestionError);
    CHECK_THROWS_AS(parse_dataset_json("{"), IngestionError);
    CHECK_THROWS_AS(load_dataset("/nonexistent/file.csv"), IngestionError);
  }

  TEST_CASE("builtin second moments") {
    CHECK(builtin_sigma_w_sq(RegularizerKind::Ridge, 4) == 1.0);
    CHECK(builtin_sigma_w_sq(RegularizerKind::Lasso, 2) == 2.0);
    CHECK(builtin_sigma_w_sq(RegularizerKind::GroupLasso, 3) == 4.0);
    CHECK_THROWS_AS(builtin_sigma_w_sq(RegularizerKind::Custom, 3), PreconditionError);
  }

  TEST_CASE("regularizer specs") {
    CHECK(RegularizerSpec::ridge().kappa() == 2.0);
    CHECK(RegularizerSpec::lasso().kappa() == 1.0);
    const std::vector<double> w{3.0, -4.0};
    CHECK(RegularizerSpec::group_lasso().h(w) == doctest::Approx(5.0));
    CHECK(RegularizerSpec::lasso().h(w) == doctest::Approx(7.0));
    CHECK(RegularizerSpec::ridge().h(w) == doctest::Approx(12.5));
    CHECK(parse_regularizer_kind("group_lasso") == RegularizerKind::GroupLasso);
    CHECK(parse_regularizer_kind("group-lasso") == RegularizerKind::GroupLasso);
    CHECK_THROWS_AS(parse_regularizer_kind("elastic"), DomainError);
  }

  TEST_CASE("custom regularizer homogeneity is validated") {
    CustomRegularizer good;
    good.h = [](std::span<const double> w) { return std::pow(std::abs(w[0]), 1.5) + std::pow(std::abs(w[1]), 1.5); };
    const auto spec = RegularizerSpec::custom(good, 1.5, 2);
    CHECK(spec.kind() == RegularizerKind::Custom);
    CHECK_FALSE(spec.has_sigma_w_sq());
    CHECK_THROWS_AS(spec.sigma_w_sq(2), PreconditionError);
    CHECK(spec.with_sigma_w_sq(0.8).sigma_w_sq(2) == 0.8);

    CustomRegularizer bad;
    bad.h = [](std::span<const double> w) { return std::abs(w[0]) + w[0] * w[0]; };
    CHECK_THROWS_AS(RegularizerSpec::custom(bad, 1.0, 1), DomainError);
    CHECK(homogeneity_defect(bad.h, 1.0, 1, 50, 1) > 1e-3);
    CHECK(homogeneity_defect(good.h, 1.5, 2, 50, 1) < 1e-12);
  }

  TEST_CASE("group structures") {
    const GroupStructure g({{0}, {1, 2}}, 3);
    CHECK(g.size() == 2);
    CHECK_THROWS_AS(GroupStructure({{0, 1}, {1, 2}}, 3), StructureError);
    CHECK_THROWS_AS(GroupStructure({{0}, {1}}, 3), StructureError);
    CHECK_THROWS_AS(GroupStructure({{0, 3}, {1, 2}}, 3), StructureError);
    const auto path = write_temp("groups.json", R"({"groups": [[0, 1], [2]]})");
    CHECK(load_groups(path, 3).groups()[0].size() == 2);
  }

  TEST_CASE("whitened problem") {
    const WhitenedProblem p(Eigen::Vector2d(3, 4), 2.0);
    CHECK(p.m() == 2);
    CHECK(p.y_tilde_norm_sq() == 25.0);
  }
}
