#include "vtc/vtc.h"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>

namespace fs = std::filesystem;

namespace {

const char* kSmallTactile = R"({"tactile":{"raw_per_category":40,"augment_per_raw":2}})";

std::string take(char* s) {
  REQUIRE(s != nullptr);
  std::string out(s);
  vtc_string_free(s);
  return out;
}

fs::path scratch(const char* name) {
  const fs::path p = fs::temp_directory_path() / ("vtc_capi_" + std::to_string(::getpid())) / name;
  fs::create_directories(p.parent_path());
  return p;
}

struct Lqr {
  vtc_dynamics* dyn = nullptr;
  vtc_lqr* lqr = nullptr;
  Lqr() {
    REQUIRE(vtc_fit_dynamics(nullptr, 7, &dyn, nullptr) == VTC_OK);
    REQUIRE(vtc_lqr_make(dyn, nullptr, &lqr, nullptr) == VTC_OK);
  }
  ~Lqr() {
    vtc_lqr_free(lqr);
    vtc_dynamics_free(dyn);
  }
};

}  // namespace

TEST_CASE("version and error channel") {
  CHECK(std::string(vtc_version()).size() > 0);
  vtc_classifier* clf = nullptr;
  CHECK(vtc_classifier_load(nullptr, &clf) == VTC_ERR_CONTRACT);
  CHECK(std::string(vtc_last_error()).find("null") != std::string::npos);
  CHECK(vtc_classifier_load("/nonexistent/clf.json", &clf) == VTC_ERR_IO);
  CHECK(clf == nullptr);
  CHECK(std::string(vtc_version()).size() > 0);
  double k[3];
  CHECK(vtc_lqr_gain(nullptr, k) == VTC_ERR_CONTRACT);
  vtc_string_free(nullptr);
  vtc_classifier_free(nullptr);
}

TEST_CASE("malformed configuration is a contract error") {
  vtc_dynamics* dyn = nullptr;
  CHECK(vtc_fit_dynamics("{oops", 1, &dyn, nullptr) == VTC_ERR_CONTRACT);
  CHECK(vtc_fit_dynamics(R"({"rollout":{"n_runs":"many"}})", 1, &dyn, nullptr) == VTC_ERR_CONTRACT);
  CHECK(dyn == nullptr);
}

TEST_CASE("classifier train, save and load") {
  vtc_classifier* clf = nullptr;
  char* report = nullptr;
  REQUIRE(vtc_classifier_train(kSmallTactile, nullptr, 3, &clf, &report) == VTC_OK);
  const auto rep = nlohmann::json::parse(take(report));
  CHECK(rep.is_object());
  const fs::path path = scratch("clf.json");
  REQUIRE(vtc_classifier_save(clf, path.c_str()) == VTC_OK);
  vtc_classifier* back = nullptr;
  CHECK(vtc_classifier_load(path.c_str(), &back) == VTC_OK);
  CHECK(back != nullptr);
  CHECK(vtc_classifier_save(clf, "/nonexistent/dir/clf.json") == VTC_ERR_IO);
  vtc_classifier_free(back);
  vtc_classifier_free(clf);
}

TEST_CASE("dynamics, gains and persistence") {
  Lqr l;
  double k[3] = {0, 0, 0};
  REQUIRE(vtc_lqr_gain(l.lqr, k) == VTC_OK);
  CHECK((k[0] != 0.0 || k[1] != 0.0 || k[2] != 0.0));
  const fs::path dp = scratch("dyn.json"), lp = scratch("lqr.json");
  REQUIRE(vtc_dynamics_save(l.dyn, dp.c_str()) == VTC_OK);
  REQUIRE(vtc_lqr_save(l.lqr, lp.c_str()) == VTC_OK);
  vtc_dynamics* d2 = nullptr;
  vtc_lqr* l2 = nullptr;
  REQUIRE(vtc_dynamics_load(dp.c_str(), &d2) == VTC_OK);
  REQUIRE(vtc_lqr_load(lp.c_str(), &l2) == VTC_OK);
  double k2[3];
  REQUIRE(vtc_lqr_gain(l2, k2) == VTC_OK);
  for (int i = 0; i < 3; ++i) CHECK(k2[i] == k[i]);
  vtc_lqr_free(l2);
  vtc_dynamics_free(d2);
}

TEST_CASE("slides through the C interface") {
  Lqr l;
  char* report = nullptr;
  REQUIRE(vtc_slide(nullptr, "horizontal", "lqr", nullptr, l.lqr, 0.5, 2, nullptr, &report) == VTC_OK);
  const auto a = nlohmann::json::parse(take(report));
  REQUIRE(vtc_slide(nullptr, "horizontal", "lqr", nullptr, l.lqr, 0.5, 2, nullptr, &report) == VTC_OK);
  CHECK(nlohmann::json::parse(take(report)) == a);
  CHECK(vtc_slide(nullptr, "horizontal", "lqr", nullptr, nullptr, 0.5, 2, nullptr, nullptr) == VTC_ERR_CONTRACT);
  CHECK(vtc_slide(nullptr, "diagonal", "zero", nullptr, nullptr, 0.5, 2, nullptr, nullptr) == VTC_ERR_CONTRACT);
  CHECK(vtc_slide(nullptr, "vertical", nullptr, "thin", nullptr, 0.75, 2, nullptr, nullptr) == VTC_OK);
  CHECK(vtc_slide(nullptr, "vertical", nullptr, "wavy", nullptr, 0.75, 2, nullptr, nullptr) == VTC_ERR_CONTRACT);
}

TEST_CASE("episodes are reproducible through the C interface") {
  vtc_classifier* clf = nullptr;
  REQUIRE(vtc_classifier_train(kSmallTactile, nullptr, 3, &clf, nullptr) == VTC_OK);
  char* a = nullptr;
  char* b = nullptr;
  REQUIRE(vtc_run_episode(nullptr, clf, nullptr, 1, &a) == VTC_OK);
  REQUIRE(vtc_run_episode(nullptr, clf, nullptr, 1, &b) == VTC_OK);
  CHECK(take(a) == take(b));
  CHECK(vtc_run_episode(nullptr, nullptr, nullptr, 1, nullptr) == VTC_ERR_CONTRACT);
  vtc_classifier_free(clf);
}
