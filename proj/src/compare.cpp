#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "bae/errors.hpp"
#include "bae/harness.hpp"

namespace bae {

namespace {

struct Curve {
  std::vector<double> steps;
  std::vector<double> test, train, value_loss, policy_loss;
};

Curve to_curve(const std::vector<MetricsRow>& rows) {
  Curve c;
  for (const auto& r : rows) {
    c.steps.push_back(static_cast<double>(r.global_step));
    c.test.push_back(r.test_return);
    c.train.push_back(r.train_return);
    c.value_loss.push_back(r.value_loss);
    c.policy_loss.push_back(r.policy_loss);
  }
  return c;
}

double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
  const std::size_t lo = hi - 1;
  if (xs[hi] == xs[lo]) return ys[hi];
  const double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + w * (ys[hi] - ys[lo]);
}

Curve resample(const Curve& c, const std::vector<double>& grid) {
  Curve out;
  out.steps = grid;
  for (double x : grid) {
    out.test.push_back(interp(c.steps, c.test, x));
    out.train.push_back(interp(c.steps, c.train, x));
    out.value_loss.push_back(interp(c.steps, c.value_loss, x));
    out.policy_loss.push_back(interp(c.steps, c.policy_loss, x));
  }
  return out;
}

// Trapezoid area divided by the step span; a single point is its own value.
double normalized_auc(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() == 1 || xs.back() == xs.front()) return ys.back();
  double area = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i) area += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
  return area / (xs.back() - xs.front());
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

int method_rank(const std::string& m) {
  static const std::vector<std::string> order = {"gae", "bae", "rad", "drac"};
  const auto it = std::find(order.begin(), order.end(), m);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string fmt_csv(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

CompareReport compare(const std::vector<std::string>& metrics_files) {
  if (metrics_files.empty()) throw ConfigError("compare: no metrics files given");
  std::vector<std::string> methods;
  std::vector<Curve> curves;
  for (const auto& path : metrics_files) {
    const auto rows = read_metrics(path);
    if (rows.empty()) throw ConfigError("compare: '" + path + "' has no data rows");
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].global_step < rows[i - 1].global_step)
        throw ConfigError("compare: global_step decreases in '" + path + "'");
    methods.push_back(rows.front().method);
    curves.push_back(to_curve(rows));
  }

  CompareReport report;
  const bool same_grid = std::all_of(curves.begin(), curves.end(),
                                     [&](const Curve& c) { return c.steps == curves.front().steps; });
  if (!same_grid) {
    double lo = curves.front().steps.front(), hi = curves.front().steps.back();
    std::size_t coarsest = 0;
    for (std::size_t i = 0; i < curves.size(); ++i) {
      lo = std::max(lo, curves[i].steps.front());
      hi = std::min(hi, curves[i].steps.back());
      if (curves[i].steps.size() < curves[coarsest].steps.size()) coarsest = i;
    }
    std::vector<double> grid;
    for (double s : curves[coarsest].steps)
      if (s >= lo && s <= hi) grid.push_back(s);
    if (grid.empty()) throw ConfigError("compare: step ranges of the runs do not overlap");
    for (auto& c : curves) c = resample(c, grid);
    report.notes.push_back("step grids differ; all runs linearly resampled to the " +
                           std::to_string(grid.size()) + "-point grid of " + metrics_files[coarsest] +
                           " restricted to [" + fmt_csv(lo) + ", " + fmt_csv(hi) + "]");
  }

  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < methods.size(); ++i) groups[methods[i]].push_back(i);
  std::vector<std::string> names;
  for (const auto& [name, _] : groups) names.push_back(name);
  std::stable_sort(names.begin(), names.end(),
                   [](const std::string& a, const std::string& b) { return method_rank(a) < method_rank(b); });

  for (const auto& name : names) {
    std::vector<double> final_test, auc, final_train, final_vl, final_pl;
    for (std::size_t i : groups[name]) {
      const Curve& c = curves[i];
      final_test.push_back(c.test.back());
      auc.push_back(normalized_auc(c.steps, c.test));
      final_train.push_back(c.train.back());
      final_vl.push_back(c.value_loss.back());
      final_pl.push_back(c.policy_loss.back());
    }
    MethodSummary s;
    s.method = name;
    s.runs = groups[name].size();
    std::tie(s.final_test_mean, s.final_test_std) = mean_std(final_test);
    std::tie(s.auc_mean, s.auc_std) = mean_std(auc);
    std::tie(s.final_train_mean, s.final_train_std) = mean_std(final_train);
    std::tie(s.final_value_loss_mean, s.final_value_loss_std) = mean_std(final_vl);
    std::tie(s.final_policy_loss_mean, s.final_policy_loss_std) = mean_std(final_pl);
    report.methods.push_back(s);
  }
  return report;
}

std::string CompareReport::text() const {
  std::string out;
  char line[512];
  std::snprintf(line, sizeof(line), "%-8s %4s  %-19s  %-19s  %-19s  %-19s  %-19s\n", "method", "runs",
                "final_test", "auc_test", "final_train", "final_value_loss", "final_policy_loss");
  out += line;
  auto pm = [](double m, double s) { return fmt(m) + " +/- " + fmt(s); };
  for (const auto& m : methods) {
    std::snprintf(line, sizeof(line), "%-8s %4zu  %-19s  %-19s  %-19s  %-19s  %-19s\n", m.method.c_str(),
                  m.runs, pm(m.final_test_mean, m.final_test_std).c_str(),
                  pm(m.auc_mean, m.auc_std).c_str(), pm(m.final_train_mean, m.final_train_std).c_str(),
                  pm(m.final_value_loss_mean, m.final_value_loss_std).c_str(),
                  pm(m.final_policy_loss_mean, m.final_policy_loss_std).c_str());
    out += line;
  }
  for (const auto& n : notes) out += "note: " + n + "\n";
  return out;
}

std::string CompareReport::csv() const {
  std::string out =
      "method,runs,final_test_mean,final_test_std,auc_mean,auc_std,final_train_mean,final_train_std,"
      "final_value_loss_mean,final_value_loss_std,final_policy_loss_mean,final_policy_loss_std\n";
  for (const auto& m : methods) {
    out += m.method + "," + std::to_string(m.runs);
    for (double v : {m.final_test_mean, m.final_test_std, m.auc_mean, m.auc_std, m.final_train_mean,
                     m.final_train_std, m.final_value_loss_mean, m.final_value_loss_std,
                     m.final_policy_loss_mean, m.final_policy_loss_std})
      out += "," + fmt_csv(v);
    out += "\n";
  }
  return out;
}

const MethodSummary* CompareReport::find(const std::string& method) const {
  for (const auto& m : methods)
    if (m.method == method) return &m;
  return nullptr;
}

}  // namespace bae
