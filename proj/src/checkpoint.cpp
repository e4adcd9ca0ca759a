#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bae/errors.hpp"
#include "bae/harness.hpp"

namespace bae {

// Text layout:
//   bae-checkpoint 1
//   step <global_step> seed <seed>
//   config <n>            followed by n key=value lines
//   params <n>            each: <name> <rows> <cols> <optimizer-steps?> then values
//   adam <t>              then first and second moments in parameter order
// Values are hexadecimal floats so the round trip is exact.

namespace {

void write_matrix(std::ostream& out, const Matrix& m) {
  char buf[40];
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%a", m[i]);
    out << buf << (i + 1 == m.size() ? '\n' : ' ');
  }
  if (m.size() == 0) out << '\n';
}

Matrix read_matrix(std::istream& in, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  std::string tok;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(in >> tok)) throw ConfigError("checkpoint: truncated matrix data");
    char* end = nullptr;
    m[i] = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw ConfigError("checkpoint: bad number '" + tok + "'");
  }
  return m;
}

void expect(std::istream& in, const std::string& word) {
  std::string tok;
  if (!(in >> tok) || tok != word)
    throw ConfigError("checkpoint: expected '" + word + "', found '" + tok + "'");
}

}  // namespace

void save_checkpoint(const std::string& path, const KeyValueConfig& config, const ActorCritic& net,
                     const Adam& opt, std::uint64_t global_step, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out << "bae-checkpoint 1\n";
  out << "step " << global_step << " seed " << seed << "\n";
  out << "config " << config.entries().size() << "\n";
  for (const auto& [k, v] : config.entries()) out << k << "=" << v << "\n";
  const ParamStore& p = net.params();
  out << "params " << p.size() << " " << p.step_count() << "\n";
  for (std::size_t i = 0; i < p.size(); ++i) {
    out << p.name(i) << " " << p.value(i).rows() << " " << p.value(i).cols() << "\n";
    write_matrix(out, p.value(i));
  }
  out << "adam " << opt.steps() << "\n";
  for (const auto& m : opt.first_moments()) write_matrix(out, m);
  for (const auto& v : opt.second_moments()) write_matrix(out, v);
  if (!out) throw ConfigError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  expect(in, "bae-checkpoint");
  int version = 0;
  in >> version;
  if (version != 1) throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  std::uint64_t step = 0, seed = 0;
  expect(in, "step");
  in >> step;
  expect(in, "seed");
  in >> seed;
  expect(in, "config");
  std::size_t n_cfg = 0;
  in >> n_cfg;
  std::string line;
  std::getline(in, line);
  std::string cfg_text;
  for (std::size_t i = 0; i < n_cfg; ++i) {
    if (!std::getline(in, line)) throw ConfigError("checkpoint: truncated config");
    cfg_text += line + "\n";
  }
  KeyValueConfig kv = KeyValueConfig::parse(cfg_text);

  expect(in, "params");
  std::size_t n_params = 0;
  std::uint64_t param_steps = 0;
  in >> n_params >> param_steps;
  ParamStore store;
  for (std::size_t i = 0; i < n_params; ++i) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols)) throw ConfigError("checkpoint: truncated parameter header");
    store.add(name, read_matrix(in, rows, cols));
  }
  store.set_step_count(param_steps);

  const ExperimentConfig cfg = ExperimentConfig::from_key_values(kv);
  auto env = make_env(cfg.env_name, cfg.env);
  ActorCritic net(cfg.net_spec(env->spec()), std::move(store));
  // Shapes must match what the config would build.
  {
    Rng probe(0);
    const ActorCritic fresh = ActorCritic::init(net.spec(), probe);
    if (fresh.params().size() != net.params().size())
      throw ConfigError("checkpoint: parameter set does not match the stored config");
    for (std::size_t i = 0; i < net.params().size(); ++i) {
      if (fresh.params().name(i) != net.params().name(i) ||
          !fresh.params().value(i).same_shape(net.params().value(i)))
        throw ConfigError("checkpoint: parameter " + net.params().name(i) + " does not match the config");
    }
  }

  expect(in, "adam");
  std::uint64_t t = 0;
  in >> t;
  Adam opt(net.params());
  for (std::size_t i = 0; i < n_params; ++i)
    opt.first_moments()[i] = read_matrix(in, net.params().value(i).rows(), net.params().value(i).cols());
  for (std::size_t i = 0; i < n_params; ++i)
    opt.second_moments()[i] = read_matrix(in, net.params().value(i).rows(), net.params().value(i).cols());
  opt.set_steps(t);
  return Checkpoint{std::move(kv), std::move(net), std::move(opt), step, seed};
}

}  // namespace bae
