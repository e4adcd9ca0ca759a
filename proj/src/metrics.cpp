#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "bae/errors.hpp"
#include "bae/harness.hpp"

namespace bae {

namespace {

constexpr const char* kColumns[] = {"schema_version", "global_step",   "method",
                                    "seed",           "train_return",  "test_return",
                                    "test_return_std", "test_return_greedy", "policy_loss",
                                    "value_loss",     "entropy",       "approx_kl",
                                    "clip_fraction"};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string metrics_header() {
  std::string h;
  for (const char* c : kColumns) {
    if (!h.empty()) h += ',';
    h += c;
  }
  return h;
}

std::string format_metrics_row(const MetricsRow& r) {
  const double fields[] = {r.train_return, r.test_return,  r.test_return_std, r.test_return_greedy,
                           r.policy_loss,  r.value_loss,   r.entropy,         r.approx_kl,
                           r.clip_fraction};
  for (double f : fields)
    if (!std::isfinite(f)) throw NumericalError("metrics row contains a non-finite value");
  std::string s = std::to_string(kMetricsSchemaVersion) + "," + std::to_string(r.global_step) + "," +
                  r.method + "," + std::to_string(r.seed);
  for (double f : fields) s += "," + num(f);
  return s;
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open metrics file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("metrics file '" + path + "' is empty");
  const auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* c : kColumns)
    if (!col.count(c)) throw ConfigError("metrics file '" + path + "' lacks column " + c);
  std::vector<MetricsRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": wrong number of columns");
    auto get = [&](const char* name) { return cells[col.at(name)]; };
    if (std::stoi(get("schema_version")) != kMetricsSchemaVersion)
      throw ConfigError(path + ": unsupported metrics schema version " + get("schema_version"));
    MetricsRow r;
    r.global_step = std::stoull(get("global_step"));
    r.method = get("method");
    r.seed = std::stoull(get("seed"));
    r.train_return = std::stod(get("train_return"));
    r.test_return = std::stod(get("test_return"));
    r.test_return_std = std::stod(get("test_return_std"));
    r.test_return_greedy = std::stod(get("test_return_greedy"));
    r.policy_loss = std::stod(get("policy_loss"));
    r.value_loss = std::stod(get("value_loss"));
    r.entropy = std::stod(get("entropy"));
    r.approx_kl = std::stod(get("approx_kl"));
    r.clip_fraction = std::stod(get("clip_fraction"));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace bae
