#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dualmpc/csv.hpp"
#include "dualmpc/harness.hpp"

namespace dmpc::sim {

void write_plot_tables(const std::string& run_dir, const std::string& out_dir,
                       std::vector<std::string>* warnings) {
  namespace fs = std::filesystem;
  const fs::path run(run_dir);
  const fs::path summary_path = run / "summary.json";
  std::ifstream in(summary_path);
  if (!in) {
    throw std::runtime_error("cannot open " + summary_path.string());
  }
  nlohmann::json summary;
  try {
    in >> summary;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(summary_path.string() + ": " + e.what());
  }
  fs::create_directories(out_dir);
  const fs::path base(out_dir);

  struct TrialRef {
    std::string controller;
    int index = 0;
    std::string outcome;
    io::CsvTable table;
  };
  std::vector<TrialRef> refs;
  for (const nlohmann::json& t : summary.at("trials")) {
    TrialRef ref;
    ref.controller = t.at("controller").get<std::string>();
    ref.index = t.at("trial").get<int>();
    ref.outcome = t.at("outcome").get<std::string>();
    char buf[64];
    std::snprintf(buf, sizeof(buf), "trial_%s_%02d.csv", ref.controller.c_str(),
                  ref.index);
    const fs::path csv_path = run / buf;
    if (!fs::exists(csv_path)) {
      if (warnings != nullptr) {
        warnings->push_back("missing per-trial table " + csv_path.string() +
                            "; skipped");
      }
      continue;
    }
    ref.table = io::read_csv(csv_path.string());
    refs.push_back(std::move(ref));
  }

  // Per-trial pose time-lapse.
  for (const TrialRef& ref : refs) {
    io::CsvWriter csv({"t", "ego_x", "ego_y", "ego_heading", "ego_speed",
                       "fol_x", "fol_y", "fol_speed", "lead_x", "lead_y",
                       "lead_speed", "pred_term_fol_x", "pred_term_fol_sigma"});
    const io::CsvTable& t = ref.table;
    const std::size_t cols[] = {
        t.column_index("t"),          t.column_index("ego_x"),
        t.column_index("ego_y"),      t.column_index("ego_heading"),
        t.column_index("ego_speed"),  t.column_index("fol_x"),
        t.column_index("fol_y"),      t.column_index("fol_speed"),
        t.column_index("lead_x"),     t.column_index("lead_y"),
        t.column_index("lead_speed"), t.column_index("pred_term_fol_x"),
        t.column_index("pred_term_fol_sigma")};
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      Eigen::VectorXd row(13);
      for (int c = 0; c < 13; ++c) {
        row[c] = t.number(r, cols[static_cast<std::size_t>(c)]);
      }
      csv.append_numeric(row);
    }
    char buf[80];
    std::snprintf(buf, sizeof(buf), "plot_timelapse_%s_%02d.csv",
                  ref.controller.c_str(), ref.index);
    csv.write((base / buf).string());
  }

  // Prediction-error traces grouped by merge outcome, averaged per controller
  // and time step over the trials sharing that outcome (grid order, so the
  // output is reproducible bit for bit).
  for (const std::string outcome : {"merged_between", "merged_behind"}) {
    struct Accumulator {
      std::vector<double> sum;
      std::vector<int> count;
    };
    std::map<std::string, Accumulator> by_controller;
    for (const TrialRef& ref : refs) {
      if (ref.outcome != outcome) {
        continue;
      }
      Accumulator& acc = by_controller[ref.controller];
      const std::size_t tc = ref.table.column_index("pred_err");
      if (acc.sum.size() < ref.table.rows.size()) {
        acc.sum.resize(ref.table.rows.size(), 0.0);
        acc.count.resize(ref.table.rows.size(), 0);
      }
      for (std::size_t r = 0; r < ref.table.rows.size(); ++r) {
        const double v = ref.table.number(r, tc);
        if (std::isfinite(v)) {
          acc.sum[r] += v;
          acc.count[r] += 1;
        }
      }
    }
    if (by_controller.empty()) {
      if (warnings != nullptr) {
        warnings->push_back(std::string("no trials ended ") + outcome +
                            "; skipped plot_error_" + outcome + ".csv");
      }
      continue;
    }
    io::CsvWriter csv({"controller", "t", "mean_abs_err", "trials"});
    const double dt = summary.at("config").at("timing").at("dt").get<double>();
    for (const auto& [controller, acc] : by_controller) {
      for (std::size_t r = 0; r < acc.sum.size(); ++r) {
        if (acc.count[r] == 0) {
          continue;
        }
        csv.append({controller, io::format_double(r * dt),
                    io::format_double(acc.sum[r] / acc.count[r]),
                    std::to_string(acc.count[r])});
      }
    }
    csv.write((base / ("plot_error_" + outcome + ".csv")).string());
  }
}

}  // namespace dmpc::sim
