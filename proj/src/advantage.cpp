#include "bae/advantage.hpp"

#include <cmath>
#include <numeric>

#include "bae/errors.hpp"

namespace bae {

void AdvantageConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("adv.gamma must be in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("adv.lambda must be in [0, 1]");
  if (method == AdvMethod::kBae && m < 1) throw ConfigError("adv.m must be >= 1 for bae");
  if (method == AdvMethod::kKStep && k < 1) throw ConfigError("kstep horizon must be >= 1");
}

std::string to_string(AdvMethod m) {
  switch (m) {
    case AdvMethod::kGae: return "gae";
    case AdvMethod::kBae: return "bae";
    case AdvMethod::kMc: return "mc";
    case AdvMethod::kKStep: return "kstep";
  }
  return "gae";
}

AdvMethod parse_adv_method(const std::string& s, std::size_t* k) {
  if (s == "gae") return AdvMethod::kGae;
  if (s == "bae") return AdvMethod::kBae;
  if (s == "mc") return AdvMethod::kMc;
  if (s.rfind("kstep(", 0) == 0 && s.back() == ')') {
    const std::string digits = s.substr(6, s.size() - 7);
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(digits, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != digits.size() || v < 1) throw ConfigError("bad kstep horizon in '" + s + "'");
    if (k) *k = v;
    return AdvMethod::kKStep;
  }
  throw ConfigError("unknown advantage method '" + s + "'");
}

// ---------------------------------------------------------------- ValueTable

ValueTable::ValueTable(std::size_t rows, std::size_t steps)
    : current_(rows, steps, 0.0), next_(rows, steps, 0.0) {}

ValueTable ValueTable::from_values(std::span<const double> values) {
  if (values.empty()) throw ContractError("ValueTable: need T + 1 values");
  const std::size_t t = values.size() - 1;
  ValueTable table(1, t);
  for (std::size_t i = 0; i < t; ++i) {
    table.current(0, i) = values[i];
    table.next(0, i) = values[i + 1];
  }
  return table;
}

ValueTable ValueTable::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty() || rows.front().empty()) throw ContractError("ValueTable: empty rows");
  const std::size_t t = rows.front().size() - 1;
  ValueTable table(rows.size(), t);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != t + 1) throw ContractError("ValueTable: rows differ in length");
    for (std::size_t i = 0; i < t; ++i) {
      table.current(r, i) = rows[r][i];
      table.next(r, i) = rows[r][i + 1];
    }
  }
  return table;
}

void ValueTable::set_row(std::size_t i, std::span<const double> current,
                         std::span<const double> next) {
  if (i >= rows() || current.size() != steps() || next.size() != steps())
    throw ContractError("ValueTable::set_row: shape mismatch");
  for (std::size_t t = 0; t < steps(); ++t) {
    current_(i, t) = current[t];
    next_(i, t) = next[t];
  }
}

ValueTable ValueTable::mean_row() const {
  ValueTable out(1, steps());
  const double inv = 1.0 / static_cast<double>(rows());
  for (std::size_t t = 0; t < steps(); ++t) {
    double dc = 0.0, dn = 0.0;
    for (std::size_t i = 1; i < rows(); ++i) {
      dc += current_(i, t) - current_(0, t);
      dn += next_(i, t) - next_(0, t);
    }
    out.current(0, t) = current_(0, t) + dc * inv;
    out.next(0, t) = next_(0, t) + dn * inv;
  }
  return out;
}

ValueTable ValueTable::row(std::size_t i) const {
  ValueTable out(1, steps());
  for (std::size_t t = 0; t < steps(); ++t) {
    out.current(0, t) = current_(i, t);
    out.next(0, t) = next_(i, t);
  }
  return out;
}

std::vector<double> buffer_next_values(const RolloutBuffer& buf, std::span<const double> current,
                                       std::span<const double> bootstrap_values) {
  const std::size_t n = buf.size();
  if (current.size() != n || bootstrap_values.size() != buf.bootstraps.size())
    throw ContractError("buffer_next_values: value counts do not match the buffer");
  std::vector<double> next(n, 0.0);
  for (std::size_t t = 0; t + 1 < n; ++t)
    if (!buf.steps[t].done()) next[t] = current[t + 1];
  for (std::size_t b = 0; b < buf.bootstraps.size(); ++b)
    next[buf.bootstraps[b].index] = bootstrap_values[b];
  return next;
}

// -------------------------------------------------------------- estimators

namespace {

void check_traj(const ValueTable& table, const Trajectory& traj) {
  if (traj.rewards.size() != table.steps() || traj.terminated.size() != table.steps() ||
      traj.truncated.size() != table.steps())
    throw ContractError("advantage: trajectory length " + std::to_string(traj.rewards.size()) +
                        " does not match value table with " + std::to_string(table.steps()) +
                        " steps");
}

std::vector<double> residuals(const ValueTable& table, std::size_t row, const Trajectory& traj,
                              double gamma) {
  const std::size_t n = table.steps();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double bootstrap = traj.terminated[t] ? 0.0 : gamma * table.next(row, t);
    delta[t] = traj.rewards[t] + bootstrap - table.current(row, t);
  }
  return delta;
}

std::vector<double> gae_recursion(const ValueTable& table, std::size_t row, const Trajectory& traj,
                                  double gamma, double lambda) {
  const auto delta = residuals(table, row, traj, gamma);
  std::vector<double> adv(delta.size(), 0.0);
  double running = 0.0;
  for (std::size_t t = delta.size(); t-- > 0;) {
    running = delta[t] + (traj.done(t) ? 0.0 : gamma * lambda * running);
    adv[t] = running;
  }
  return adv;
}

AdvantageEstimate with_targets(std::vector<double> adv, const ValueTable& table) {
  AdvantageEstimate est;
  est.value_targets.resize(adv.size());
  for (std::size_t t = 0; t < adv.size(); ++t) est.value_targets[t] = adv[t] + table.current(0, t);
  est.advantages = std::move(adv);
  return est;
}

}  // namespace

std::size_t segment_end(const Trajectory& traj, std::size_t t) {
  std::size_t e = t;
  while (e + 1 < traj.size() && !traj.done(e)) ++e;
  return e;
}

std::vector<double> td_residuals(std::span<const double> values, const Trajectory& traj,
                                 double gamma) {
  if (values.size() != traj.size() + 1)
    throw ContractError("td_residuals: need T + 1 values, got " + std::to_string(values.size()) +
                        " for T = " + std::to_string(traj.size()));
  return td_residuals(ValueTable::from_values(values), 0, traj, gamma);
}

std::vector<double> td_residuals(const ValueTable& table, std::size_t row, const Trajectory& traj,
                                 double gamma) {
  check_traj(table, traj);
  if (row >= table.rows()) throw ContractError("td_residuals: row out of range");
  return residuals(table, row, traj, gamma);
}

double kstep_advantage(std::size_t i, std::size_t t, std::size_t k, const ValueTable& table,
                       const Trajectory& traj, double gamma) {
  if (k < 1) throw ContractError("kstep_advantage: k must be >= 1");
  check_traj(table, traj);
  if (i >= table.rows() || t >= table.steps()) throw ContractError("kstep_advantage: index out of range");
  const std::size_t last = std::min(segment_end(traj, t), t + k - 1);
  double acc = -table.current(i, t);
  double discount = 1.0;
  for (std::size_t l = t; l <= last; ++l) {
    acc += discount * traj.rewards[l];
    discount *= gamma;
  }
  if (!traj.terminated[last]) acc += discount * table.next(i, last);
  return acc;
}

double bootstrap_average(std::size_t t, std::size_t k, const ValueTable& table,
                         const Trajectory& traj, double gamma) {
  double acc = 0.0;
  for (std::size_t i = 0; i < table.rows(); ++i) acc += kstep_advantage(i, t, k, table, traj, gamma);
  return acc / static_cast<double>(table.rows());
}

AdvantageEstimate gae(const ValueTable& table, const Trajectory& traj, const AdvantageConfig& cfg) {
  if (cfg.method != AdvMethod::kGae) throw ContractError("gae: config method is not gae");
  cfg.validate();
  check_traj(table, traj);
  return with_targets(gae_recursion(table, 0, traj, cfg.gamma, cfg.lambda), table);
}

AdvantageEstimate bae(const ValueTable& table, const Trajectory& traj, const AdvantageConfig& cfg) {
  if (cfg.method != AdvMethod::kBae) throw ContractError("bae: config method is not bae");
  cfg.validate();
  check_traj(table, traj);
  if (table.rows() != cfg.m + 1)
    throw ContractError("bae: value table has " + std::to_string(table.rows()) + " rows, expected m + 1 = " +
                        std::to_string(cfg.m + 1));
  const ValueTable averaged = table.mean_row();
  return with_targets(gae_recursion(averaged, 0, traj, cfg.gamma, cfg.lambda), table);
}

std::vector<double> literal_bae_oracle(const ValueTable& table, const Trajectory& traj,
                                       const AdvantageConfig& cfg) {
  check_traj(table, traj);
  constexpr std::size_t kMaxSegment = 12;
  std::vector<double> adv(traj.size(), 0.0);
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const std::size_t end = segment_end(traj, t);
    std::size_t start = t;
    while (start > 0 && !traj.done(start - 1)) --start;
    if (end - start + 1 > kMaxSegment)
      throw ContractError("literal_bae_oracle: segment longer than 12 steps");
    const std::size_t feasible = end - t + 1;
    double acc = 0.0;
    for (std::size_t k = 1; k <= feasible; ++k) {
      const double w = k < feasible ? (1.0 - cfg.lambda) * std::pow(cfg.lambda, static_cast<double>(k - 1))
                                    : std::pow(cfg.lambda, static_cast<double>(k - 1));
      if (w == 0.0) continue;
      acc += w * bootstrap_average(t, k, table, traj, cfg.gamma);
    }
    adv[t] = acc;
  }
  return adv;
}

AdvantageEstimate normalize_advantages(AdvantageEstimate est) {
  const std::size_t n = est.advantages.size();
  if (n < 2) throw ContractError("normalize_advantages: need at least two steps");
  const double mean = std::accumulate(est.advantages.begin(), est.advantages.end(), 0.0) /
                      static_cast<double>(n);
  double var = 0.0;
  for (double a : est.advantages) var += (a - mean) * (a - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(n)), 1e-8);
  for (double& a : est.advantages) a = (a - mean) / sd;
  return est;
}

AdvantageEstimate estimate_advantages(const ValueTable& table, const Trajectory& traj,
                                      const AdvantageConfig& cfg) {
  cfg.validate();
  check_traj(table, traj);
  switch (cfg.method) {
    case AdvMethod::kGae:
      return gae(table, traj, cfg);
    case AdvMethod::kBae:
      return bae(table, traj, cfg);
    case AdvMethod::kMc:
      return with_targets(gae_recursion(table, 0, traj, cfg.gamma, 1.0), table);
    case AdvMethod::kKStep: {
      std::vector<double> adv(traj.size());
      for (std::size_t t = 0; t < traj.size(); ++t)
        adv[t] = kstep_advantage(0, t, cfg.k, table, traj, cfg.gamma);
      return with_targets(std::move(adv), table);
    }
  }
  throw ContractError("estimate_advantages: unknown method");
}

}  // namespace bae
