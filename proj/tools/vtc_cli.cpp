#include "vtc/vtc.h"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string config;
};

// Config text from --config, or empty for defaults.
std::string config_text(const Common& c) {
  if (c.config.empty()) return {};
  std::ifstream in(c.config);
  if (!in) throw std::runtime_error("cannot open config: " + c.config);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int fail(vtc_status s) {
  std::cerr << "error: " << vtc_last_error() << '\n';
  return static_cast<int>(s);
}

// Prints a returned report and optionally stores it; 2 when the file cannot be written.
int print_report(char* report, const std::string& path = {}) {
  if (!report) return 0;
  std::cout << report << '\n';
  const std::string text = report;
  vtc_string_free(report);
  if (path.empty()) return 0;
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path);
  out << text << '\n';
  if (!out) {
    std::cerr << "error: cannot write " << path << '\n';
    return VTC_ERR_IO;
  }
  return 0;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app->add_option("--config", c.config, "JSON config file");
}

struct ReportRow {
  std::string file;
  nlohmann::json doc;
};

// Aggregates episode reports, slide summaries and experiment reports under a directory.
int run_report(const std::string& input, const std::string& out_path) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(input)) {
    std::cerr << "error: not a directory: " << input << '\n';
    return VTC_ERR_IO;
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(input)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  int episodes = 0, edge_ok = 0, two = 0, edge_attempts = 0;
  std::map<std::string, std::vector<double>> slides;
  nlohmann::json transfers = nlohmann::json::array();
  nlohmann::json replays = nlohmann::json::array();
  for (const fs::path& p : files) {
    std::ifstream in(p);
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) continue;
    const std::string format = doc.value("format", "");
    if (format == "vtc.episode_report") {
      ++episodes;
      if (doc.value("edge_success", false)) {
        ++edge_ok;
        edge_attempts += doc.value("edge_attempts", 0);
      }
      if (doc.value("final_state", "") == "TwoCorners") ++two;
    } else if (format == "vtc.transfer_report") {
      const nlohmann::json pk = doc.value("precision_at_k", nlohmann::json::object());
      transfers.push_back({{"file", p.filename().string()},
                           {"seed", doc.value("seed", 0)},
                           {"source_only", pk.value("source_only", 0.0)},
                           {"target_scratch", pk.value("target_scratch", 0.0)},
                           {"source_finetuned", pk.value("source_finetuned", 0.0)}});
    } else if (format == "vtc.replay_comparison") {
      replays.push_back({{"file", p.filename().string()},
                         {"seed", doc.value("seed", 0)},
                         {"grasps_with_replay", doc.value("grasps_with_replay", -1)},
                         {"grasps_without_replay", doc.value("grasps_without_replay", -1)}});
    } else if (format == "vtc.episode_summary") {
      const std::string key = doc.value("mode", "") + "/" + doc.value("controller", "");
      slides[key].push_back(doc.value("traversal", 0.0));
    }
  }
  nlohmann::json summary;
  summary["episodes"] = {{"count", episodes},
                         {"edge_success_rate", episodes ? static_cast<double>(edge_ok) / episodes : 0.0},
                         {"mean_edge_attempts", edge_ok ? static_cast<double>(edge_attempts) / edge_ok : 0.0},
                         {"two_corners_rate", episodes ? static_cast<double>(two) / episodes : 0.0}};
  nlohmann::json st = nlohmann::json::object();
  for (const auto& [key, v] : slides) {
    double m = 0.0;
    for (double x : v) m += x;
    st[key] = {{"count", v.size()}, {"mean_traversal", m / static_cast<double>(v.size())}};
  }
  summary["slides"] = st;
  summary["transfer"] = transfers;
  summary["replay"] = replays;

  std::printf("%-28s %8s\n", "table", "value");
  std::printf("%-28s %8d\n", "episodes", episodes);
  if (episodes) {
    std::printf("%-28s %8.3f\n", "edge success rate", static_cast<double>(edge_ok) / episodes);
    std::printf("%-28s %8.3f\n", "mean edge attempts", edge_ok ? static_cast<double>(edge_attempts) / edge_ok : 0.0);
    std::printf("%-28s %8.3f\n", "two corners rate", static_cast<double>(two) / episodes);
  }
  for (const auto& [key, v] : st.items()) {
    std::printf("%-28s %8.3f  (n=%d)\n", ("slide " + key).c_str(), v["mean_traversal"].get<double>(),
                v["count"].get<int>());
  }
  for (const auto& t : transfers) {
    std::printf("transfer seed %-14d SO %.3f  TS %.3f  FT %.3f\n", t["seed"].get<int>(),
                t["source_only"].get<double>(), t["target_scratch"].get<double>(),
                t["source_finetuned"].get<double>());
  }
  for (const auto& r : replays) {
    std::printf("replay seed %-16d with %d  without %d\n", r["seed"].get<int>(), r["grasps_with_replay"].get<int>(),
                r["grasps_without_replay"].get<int>());
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << summary.dump(1) << '\n';
    if (!out) {
      std::cerr << "error: cannot write " << out_path << '\n';
      return VTC_ERR_IO;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visuotactile cloth manipulation simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", vtc_version());

  Common gad_c;
  int gad_seeds = 200;
  std::string gad_out;
  auto* gad = app.add_subcommand("gen-affordance-data", "Render and label depth/affordance pairs");
  add_common(gad, gad_c);
  gad->add_option("--n-seeds", gad_seeds, "Cloth configurations (24 rotations each)")->capture_default_str();
  gad->add_option("--out", gad_out, "Output directory")->required();

  Common gtd_c;
  std::string gtd_out;
  auto* gtd = app.add_subcommand("gen-tactile-data", "Synthesize tactile grasp features and sample frames");
  add_common(gtd, gtd_c);
  gtd->add_option("--out", gtd_out, "Output directory")->required();

  Common tc_c;
  std::string tc_data, tc_out;
  auto* tc = app.add_subcommand("train-classifier", "Train the five-way grasp classifier");
  add_common(tc, tc_c);
  tc->add_option("--data", tc_data, "features.csv from gen-tactile-data");
  tc->add_option("--out", tc_out, "Classifier JSON")->required();

  Common pa_c;
  std::string pa_manifest, pa_out, pa_report;
  int pa_epochs = 0;
  auto* pa = app.add_subcommand("pretrain-affordance", "Pretrain the affordance regressor on a dataset");
  add_common(pa, pa_c);
  pa->add_option("--manifest", pa_manifest, "Dataset manifest.json")->required();
  pa->add_option("--epochs", pa_epochs, "Epochs (0 keeps the config value)");
  pa->add_option("--out", pa_out, "Model JSON")->required();
  pa->add_option("--report", pa_report, "Write the training report here");

  Common fa_c;
  std::string fa_model, fa_out, fa_curve, fa_report;
  int fa_budget = 800;
  bool fa_no_replay = false;
  auto* fa = app.add_subcommand("finetune-affordance", "Online fine-tuning with tactile labels");
  add_common(fa, fa_c);
  fa->add_option("--model", fa_model, "Pretrained model JSON")->required();
  fa->add_option("--budget", fa_budget, "Grasp budget")->capture_default_str();
  fa->add_flag("--no-replay", fa_no_replay, "Train on each new grasp group only");
  fa->add_option("--curve", fa_curve, "Learning curve CSV");
  fa->add_option("--out", fa_out, "Fine-tuned model JSON")->required();
  fa->add_option("--report", fa_report, "Write the run report here");

  Common te_c;
  std::string te_out_dir, te_report;
  int te_budget = 800;
  bool te_replay = false;
  double te_target = 0.75;
  auto* te = app.add_subcommand("transfer-exp", "Sim-to-sim transfer comparison");
  add_common(te, te_c);
  te->add_option("--budget", te_budget, "Online grasp budget")->capture_default_str();
  te->add_option("--out-dir", te_out_dir, "Models and learning curves");
  te->add_flag("--replay-compare", te_replay, "Compare fine-tuning with and without replay instead");
  te->add_option("--target-precision", te_target, "Target for --replay-compare")->capture_default_str();
  te->add_option("--report", te_report, "Write the report here");

  Common fd_c;
  std::string fd_out;
  auto* fd = app.add_subcommand("fit-dynamics", "Collect sliding rollouts and fit linear dynamics");
  add_common(fd, fd_c);
  fd->add_option("--out", fd_out, "Dynamics JSON")->required();

  Common ml_c;
  std::string ml_dyn, ml_out;
  auto* ml = app.add_subcommand("make-lqr", "Solve the Riccati equation for the sliding controller");
  add_common(ml, ml_c);
  ml->add_option("--dynamics", ml_dyn, "Dynamics JSON from fit-dynamics")->required();
  ml->add_option("--out", ml_out, "LQR JSON")->required();

  Common sl_c;
  std::string sl_mode, sl_controller = "lqr", sl_edge = "thin", sl_lqr, sl_log, sl_summary;
  double sl_coverage = 0.5;
  auto* sl = app.add_subcommand("slide", "Run one tactile slide");
  add_common(sl, sl_c);
  sl->add_option("mode", sl_mode, "vertical or horizontal")->required()->check(CLI::IsMember({"vertical", "horizontal"}));
  sl->add_option("--controller", sl_controller, "lqr, proportional or zero (horizontal)")->capture_default_str();
  sl->add_option("--edge", sl_edge, "thin or thick (vertical)")->capture_default_str();
  sl->add_option("--lqr", sl_lqr, "LQR JSON for the lqr controller");
  sl->add_option("--coverage", sl_coverage, "Initial fraction of the sensor covered")->capture_default_str();
  sl->add_option("--log", sl_log, "Per-step CSV log");
  sl->add_option("--summary", sl_summary, "Write the summary JSON here");

  Common re_c;
  std::string re_clf, re_model, re_out;
  auto* re = app.add_subcommand("run-episode", "Run the task state machine once");
  add_common(re, re_c);
  re->add_option("--classifier", re_clf, "Classifier JSON")->required();
  re->add_option("--model", re_model, "Affordance model JSON (geometric labels when absent)");
  re->add_option("--out", re_out, "Write the episode report here");

  Common ev_c;
  std::string ev_metric, ev_model;
  int ev_k = 40;
  double ev_min = -1.0;
  auto* ev = app.add_subcommand("eval", "Offline evaluation");
  add_common(ev, ev_c);
  ev->add_option("metric", ev_metric, "precision-at-k")->required()->check(CLI::IsMember({"precision-at-k"}));
  ev->add_option("--model", ev_model, "Affordance model JSON")->required();
  ev->add_option("--k", ev_k, "k")->capture_default_str();
  ev->add_option("--min", ev_min, "Exit with status 3 when the metric is below this");

  Common rp_c;
  std::string rp_input, rp_out;
  auto* rp = app.add_subcommand("report", "Summarize JSON logs under a directory");
  add_common(rp, rp_c);
  rp->add_option("--input", rp_input, "Directory of reports")->required();
  rp->add_option("--out", rp_out, "Write the summary JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return VTC_ERR_CONTRACT;
  }

  std::string cfg;
  try {
    for (const Common* c : {&gad_c, &gtd_c, &tc_c, &pa_c, &fa_c, &te_c, &fd_c, &ml_c, &sl_c, &re_c, &ev_c, &rp_c}) {
      if (!c->config.empty()) cfg = config_text(*c);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return VTC_ERR_IO;
  }
  const char* config = cfg.c_str();
  char* report = nullptr;
  vtc_status s = VTC_OK;

  if (*gad) {
    s = vtc_generate_affordance_dataset(config, gad_seeds, gad_c.seed, gad_out.c_str(), &report);
    if (s != VTC_OK) return fail(s);
    return print_report(report);
  } else if (*gtd) {
    s = vtc_generate_tactile_dataset(config, gtd_c.seed, gtd_out.c_str(), &report);
    if (s != VTC_OK) return fail(s);
    return print_report(report);
  } else if (*tc) {
    vtc_classifier* clf = nullptr;
    s = vtc_classifier_train(config, tc_data.c_str(), tc_c.seed, &clf, &report);
    if (s == VTC_OK) s = vtc_classifier_save(clf, tc_out.c_str());
    vtc_classifier_free(clf);
    if (s != VTC_OK) return fail(s);
    return print_report(report);
  } else if (*pa) {
    vtc_affordance_model* m = nullptr;
    s = vtc_affordance_pretrain(config, pa_manifest.c_str(), pa_epochs, pa_c.seed, &m, &report);
    if (s == VTC_OK) s = vtc_affordance_save(m, pa_out.c_str());
    vtc_affordance_free(m);
    if (s != VTC_OK) return fail(s);
    return print_report(report, pa_report);
  } else if (*fa) {
    vtc_affordance_model* m = nullptr;
    s = vtc_affordance_load(fa_model.c_str(), &m);
    if (s == VTC_OK) {
      s = vtc_affordance_finetune(m, config, fa_budget, fa_no_replay ? 0 : 1, fa_c.seed, fa_curve.c_str(), &report);
    }
    if (s == VTC_OK) s = vtc_affordance_save(m, fa_out.c_str());
    vtc_affordance_free(m);
    if (s != VTC_OK) return fail(s);
    return print_report(report, fa_report);
  } else if (*te) {
    s = te_replay ? vtc_replay_experiment(config, te_budget, te_target, te_c.seed, &report)
                  : vtc_transfer_experiment(config, te_budget, te_c.seed, te_out_dir.c_str(), &report);
    if (s != VTC_OK) return fail(s);
    return print_report(report, te_report);
  } else if (*fd) {
    vtc_dynamics* d = nullptr;
    s = vtc_fit_dynamics(config, fd_c.seed, &d, &report);
    if (s == VTC_OK) s = vtc_dynamics_save(d, fd_out.c_str());
    vtc_dynamics_free(d);
    if (s != VTC_OK) return fail(s);
    return print_report(report);
  } else if (*ml) {
    vtc_dynamics* d = nullptr;
    vtc_lqr* l = nullptr;
    s = vtc_dynamics_load(ml_dyn.c_str(), &d);
    if (s == VTC_OK) s = vtc_lqr_make(d, config, &l, &report);
    if (s == VTC_OK) s = vtc_lqr_save(l, ml_out.c_str());
    vtc_lqr_free(l);
    vtc_dynamics_free(d);
    if (s != VTC_OK) return fail(s);
    return print_report(report);
  } else if (*sl) {
    vtc_lqr* l = nullptr;
    if (!sl_lqr.empty()) {
      s = vtc_lqr_load(sl_lqr.c_str(), &l);
      if (s != VTC_OK) return fail(s);
    }
    s = vtc_slide(config, sl_mode.c_str(), sl_controller.c_str(), sl_edge.c_str(), l, sl_coverage, sl_c.seed,
                  sl_log.c_str(), &report);
    vtc_lqr_free(l);
    if (s != VTC_OK) return fail(s);
    return print_report(report, sl_summary);
  } else if (*re) {
    vtc_classifier* clf = nullptr;
    vtc_affordance_model* m = nullptr;
    s = vtc_classifier_load(re_clf.c_str(), &clf);
    if (s == VTC_OK && !re_model.empty()) s = vtc_affordance_load(re_model.c_str(), &m);
    if (s == VTC_OK) s = vtc_run_episode(config, clf, m, re_c.seed, &report);
    vtc_affordance_free(m);
    vtc_classifier_free(clf);
    if (s != VTC_OK) return fail(s);
    return print_report(report, re_out);
  } else if (*ev) {
    vtc_affordance_model* m = nullptr;
    double p = 0.0;
    s = vtc_affordance_load(ev_model.c_str(), &m);
    if (s == VTC_OK) s = vtc_affordance_precision_at_k(m, config, ev_k, ev_c.seed, &p);
    vtc_affordance_free(m);
    if (s != VTC_OK) return fail(s);
    std::printf("precision@%d %.4f\n", ev_k, p);
    if (ev_min >= 0.0 && p < ev_min) {
      std::fprintf(stderr, "below required %.4f\n", ev_min);
      return VTC_ERR_ACCEPTANCE;
    }
  } else if (*rp) {
    return run_report(rp_input, rp_out);
  }
  return 0;
}
