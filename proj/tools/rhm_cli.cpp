#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rhm/rhm.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace rhm;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

const std::set<std::string> kKnownKeys = {
    "command", "params",   "instance",     "P",         "grid",      "seeds",     "arch",
    "width",   "depth",    "param",        "train",     "criterion", "test_cap",  "threads",
    "hfm",     "out",      "probe_size",   "replacements", "instances", "resamples", "pooled",
    "restarts", "stop_when_met"};

/// Fully resolved experiment settings.
struct Settings {
  std::string command;
  std::vector<ModelParams> params;
  std::optional<std::string> instance_path;
  std::optional<std::uint64_t> P;
  std::vector<std::uint64_t> grid;
  std::vector<std::uint64_t> seeds{0};
  Architecture arch;
  TrainConfig train;
  Criterion criterion = Criterion::relative;
  std::uint64_t test_cap = kDefaultTestSize;
  int threads = 1;
  bool hfm = false;
  std::string out;
  std::size_t probe_size = kDefaultProbeSize;
  int replacements = kDefaultReplacements;
  int instances = 0;
  int resamples = 200;
  bool pooled = true;
  int restarts = 10;
  bool stop_when_met = false;
};

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::config, "config key '" + key + "' has the wrong type");
  }
}

/// "a,b,c" lists values; "lo:hi" or "lo:hi:ratio" spans a geometric grid.
std::vector<std::uint64_t> parse_grid(const json& g) {
  if (g.is_array()) {
    std::vector<std::uint64_t> out;
    for (const auto& x : g) {
      require(x.is_number_unsigned() || (x.is_number_integer() && x.get<long long>() > 0), ErrorCode::config,
              "grid entries must be positive integers");
      out.push_back(x.get<std::uint64_t>());
    }
    return out;
  }
  require(g.is_string(), ErrorCode::config, "grid must be a list or a string");
  const auto text = g.get<std::string>();
  if (text.empty()) return {};
  try {
    if (text.find(':') != std::string::npos) {
      std::vector<double> parts;
      std::stringstream ss(text);
      for (std::string t; std::getline(ss, t, ':');) parts.push_back(std::stod(t));
      require(parts.size() == 2 || parts.size() == 3, ErrorCode::config, "geometric grid is lo:hi[:ratio]");
      return geometric_grid(parts[0], parts[1], parts.size() == 3 ? parts[2] : std::sqrt(2.0));
    }
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    for (std::string t; std::getline(ss, t, ',');) {
      require(!t.empty() && t.find('-') == std::string::npos, ErrorCode::config, "grid entries must be positive");
      out.push_back(std::stoull(t));
    }
    return out;
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::config, "cannot parse grid '" + text + "'");
  }
}

ModelParams params_entry(const json& j) {
  require(j.is_object(), ErrorCode::config, "params entries must be objects");
  ModelParams p;
  p.v = get_or(j, "v", p.v);
  p.m = get_or(j, "m", p.m);
  p.s = get_or(j, "s", p.s);
  p.L = get_or(j, "L", p.L);
  p.n_c = get_or(j, "n_c", p.n_c);
  p.seed = get_or<std::uint64_t>(j, "seed", 0);
  validate(p);
  return p;
}

Settings resolve(const json& cfg) {
  for (const auto& [k, _] : cfg.items())
    require(kKnownKeys.count(k) > 0, ErrorCode::config, "unknown config key '" + k + "'");
  Settings s;
  s.command = get_or<std::string>(cfg, "command", "");
  if (cfg.contains("params")) {
    const auto& p = cfg.at("params");
    if (p.is_array()) {
      for (const auto& e : p) s.params.push_back(params_entry(e));
    } else {
      s.params.push_back(params_entry(p));
    }
  }
  if (cfg.contains("instance")) s.instance_path = get_or<std::string>(cfg, "instance", "");
  if (cfg.contains("P") && !cfg.at("P").is_null()) {
    const auto P = get_or<long long>(cfg, "P", 0);
    require(P >= 1, ErrorCode::config, "P must be positive");
    s.P = static_cast<std::uint64_t>(P);
  }
  if (cfg.contains("grid")) s.grid = parse_grid(cfg.at("grid"));
  if (cfg.contains("seeds")) {
    const auto& sd = cfg.at("seeds");
    s.seeds.clear();
    if (sd.is_array()) {
      s.seeds = get_or<std::vector<std::uint64_t>>(cfg, "seeds", {});
    } else {
      const int n = get_or(cfg, "seeds", 1);
      require(n >= 1, ErrorCode::config, "seeds must be at least 1");
      for (int i = 0; i < n; ++i) s.seeds.push_back(static_cast<std::uint64_t>(i));
    }
    require(!s.seeds.empty(), ErrorCode::config, "seed list is empty");
  }
  s.arch.kind = parse_arch_kind(get_or<std::string>(cfg, "arch", "tree-cnn"));
  s.arch.width = get_or(cfg, "width", 0);
  s.arch.depth = get_or(cfg, "depth", 0);
  s.arch.param = parse_parameterization(get_or<std::string>(cfg, "param", "standard"));
  if (cfg.contains("train")) {
    const auto& t = cfg.at("train");
    require(t.is_object(), ErrorCode::config, "train must be an object");
    for (const auto& [k, _] : t.items())
      require(k == "batch" || k == "lr" || k == "stop_loss" || k == "max_epochs" || k == "whiten", ErrorCode::config,
              "unknown train key '" + k + "'");
    s.train.batch = get_or(t, "batch", s.train.batch);
    s.train.lr = get_or(t, "lr", s.train.lr);
    s.train.stop_loss = get_or(t, "stop_loss", s.train.stop_loss);
    s.train.max_epochs = get_or(t, "max_epochs", s.train.max_epochs);
    s.train.whiten = get_or(t, "whiten", s.train.whiten);
  }
  validate(s.train);
  const auto crit = get_or<std::string>(cfg, "criterion", "relative");
  require(crit == "relative" || crit == "absolute", ErrorCode::config, "criterion is 'relative' or 'absolute'");
  s.criterion = crit == "relative" ? Criterion::relative : Criterion::absolute;
  s.test_cap = get_or<std::uint64_t>(cfg, "test_cap", s.test_cap);
  s.threads = get_or(cfg, "threads", s.threads);
  require(s.threads >= 1, ErrorCode::config, "threads must be at least 1");
  s.hfm = get_or(cfg, "hfm", s.hfm);
  s.out = get_or<std::string>(cfg, "out", ".");
  s.probe_size = get_or<std::size_t>(cfg, "probe_size", s.probe_size);
  require(s.probe_size >= 2, ErrorCode::config, "probe_size must be at least 2");
  s.replacements = get_or(cfg, "replacements", s.replacements);
  require(s.replacements >= 1, ErrorCode::config, "replacements must be at least 1");
  s.instances = get_or(cfg, "instances", s.instances);
  s.resamples = get_or(cfg, "resamples", s.resamples);
  s.pooled = get_or(cfg, "pooled", s.pooled);
  s.restarts = get_or(cfg, "restarts", s.restarts);
  require(s.restarts >= 1, ErrorCode::config, "restarts must be at least 1");
  s.stop_when_met = get_or(cfg, "stop_when_met", s.stop_when_met);
  return s;
}

std::string describe(const ModelParams& p) {
  return "v=" + std::to_string(p.v) + " m=" + std::to_string(p.m) + " s=" + std::to_string(p.s) +
         " L=" + std::to_string(p.L) + " n_c=" + std::to_string(p.n_c);
}

std::string series(const ModelParams& p) {
  return "v" + std::to_string(p.v) + "_m" + std::to_string(p.m) + "_s" + std::to_string(p.s) + "_L" +
         std::to_string(p.L) + "_nc" + std::to_string(p.n_c);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::config, "cannot write " + path.string());
  os.precision(17);
  return os;
}

/// Plot data: one point per row, several curves distinguished by `series`.
struct Curve {
  std::string x_name, y_name;
  struct Point {
    std::string series;
    double x, y, se;
  };
  std::vector<Point> points;

  void write(const fs::path& path) const {
    auto os = open_out(path);
    os << "# schema: rhm-curve-v1\n# x: " << x_name << "\n# y: " << y_name << "\nseries,x,y,se\n";
    for (const auto& p : points) os << p.series << ',' << p.x << ',' << p.y << ',' << p.se << '\n';
  }
};

std::pair<double, double> mean_se(const std::vector<double>& xs) {
  double sum = 0.0, n = 0.0;
  for (double x : xs)
    if (std::isfinite(x)) sum += x, n += 1;
  if (n == 0) return {std::nan(""), std::nan("")};
  const double mean = sum / n;
  double acc = 0.0;
  for (double x : xs)
    if (std::isfinite(x)) acc += (x - mean) * (x - mean);
  return {mean, n > 1 ? std::sqrt(acc / (n - 1) / n) : 0.0};
}

const ModelParams& single_params(const Settings& s) {
  require(s.params.size() == 1, ErrorCode::config, "command '" + s.command + "' takes exactly one parameter set");
  return s.params.front();
}

RhmInstance load_or_build(const Settings& s) {
  if (s.instance_path) {
    std::ifstream is(*s.instance_path);
    require(static_cast<bool>(is), ErrorCode::config, "cannot open instance file " + *s.instance_path);
    return read_instance(is);
  }
  const auto& p = single_params(s);
  return s.hfm ? build_hfm_instance(p) : build_instance(p);
}

std::vector<std::uint64_t> grid_or_P(const Settings& s) {
  if (!s.grid.empty()) return s.grid;
  require(s.P.has_value(), ErrorCode::config, "command '" + s.command + "' needs --P or --grid");
  return {*s.P};
}

void check_grid(const ModelParams& p, const std::vector<std::uint64_t>& grid) {
  const auto pmax = exact_p_max(p);
  for (auto P : grid)
    require(!pmax || static_cast<u128>(P) <= *pmax, ErrorCode::config,
            "P=" + std::to_string(P) + " exceeds p_max=" + u128_to_string(*pmax) + " for " + describe(p));
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

int cmd_gen(const Settings& s) {
  const auto inst = load_or_build(s);
  fs::path path = s.out;
  if (path.extension() != ".json") path /= "instance.json";
  {
    auto os = open_out(path);
    write_instance(os, inst);
  }
  std::string extra;
  if (s.P) {
    check_grid(inst.params, {*s.P});
    Rng rng = Rng(inst.params.seed).derive(*s.P);
    auto data_path = path;
    data_path.replace_extension(".data.csv");
    auto os = open_out(data_path);
    write_dataset_csv(os, sample_training_set(inst, *s.P, rng));
    extra = ", " + std::to_string(*s.P) + " data in " + data_path.string();
  }
  std::cout << "gen: " << describe(inst.params) << " construction=" << inst.construction << " -> " << path.string()
            << extra << '\n';
  return 0;
}

int cmd_theory(const Settings& s) {
  require(!s.params.empty(), ErrorCode::config, "theory needs model parameters");
  for (const auto& p : s.params) {
    const auto t = theory_quantities(p);
    auto exact_or = [](const std::optional<u128>& x, double d) { return x ? u128_to_string(*x) : fmt(d); };
    if (s.params.size() > 1) std::cout << "# " << describe(p) << '\n';
    std::cout << "p_max=" << exact_or(t.p_max_exact, t.p_max) << '\n'
              << "p_min_nats=" << fmt(t.p_min_nats) << '\n'
              << "p_star=" << exact_or(t.p_star_exact, t.p_star) << '\n'
              << "p_c=" << exact_or(t.p_star_exact, t.p_c) << '\n'
              << "p_cluster=" << fmt(t.p_cluster) << '\n'
              << "eps_rand=" << fmt(t.eps_rand) << '\n'
              << "log_num_rules=" << fmt(t.log_num_rules) << '\n'
              << "log_num_instances=" << fmt(t.log_num_instances) << '\n';
    if (t.log_f_hfm) std::cout << "log_f_hfm=" << fmt(*t.log_f_hfm) << '\n';
  }
  return 0;
}

int cmd_stats(const Settings& s) {
  const auto inst = load_or_build(s);
  const auto& p = inst.params;
  const fs::path dir = s.out;
  OccurrenceTable counts;
  if (s.P) {
    check_grid(p, {*s.P});
    Rng rng = Rng(p.seed).derive(*s.P);
    counts = empirical_counts(sample_training_set(inst, *s.P, rng), inst);
  } else {
    counts = exact_tuple_counts(inst);
  }
  {
    auto os = open_out(dir / "counts.csv");
    write_counts_csv(os, counts);
  }
  {
    auto os = open_out(dir / "frequencies.csv");
    write_frequencies_csv(os, conditional_frequencies(counts));
  }
  const auto rm = rule_moments(p);
  const auto lm = level_moments(p);
  {
    auto os = open_out(dir / "moments.csv");
    os << "# schema: rhm-moments-v1\nquantity,value,se\n";
    os << "rule_mean," << rm.mean << ",\nrule_var," << rm.var << ",\nrule_cov_same_hi," << rm.cov_same_hi
       << ",\nrule_cov_same_lo," << rm.cov_same_lo << ",\nrule_cov_none," << rm.cov_none << ",\n";
    os << "signal_var," << lm.signal_var << ",\nsignal_var_asymptotic," << lm.signal_var_asymptotic
       << ",\nnoise_coeff," << lm.noise_coeff << ",\np_c," << lm.p_c << ",\n";
    if (s.instances > 0) {
      const auto mc = monte_carlo_moments(p, s.instances, p.seed, s.hfm ? Ensemble::hfm : Ensemble::rhm);
      os << "mc_rule_mean," << mc.estimate.mean << ',' << mc.stderr_.mean << '\n'
         << "mc_rule_var," << mc.estimate.var << ',' << mc.stderr_.var << '\n'
         << "mc_rule_cov_same_hi," << mc.estimate.cov_same_hi << ',' << mc.stderr_.cov_same_hi << '\n'
         << "mc_rule_cov_same_lo," << mc.estimate.cov_same_lo << ',' << mc.stderr_.cov_same_lo << '\n'
         << "mc_rule_cov_none," << mc.estimate.cov_none << ',' << mc.stderr_.cov_none << '\n'
         << "mc_signal_var," << mc.signal_var << ',' << mc.signal_var_se << '\n';
    }
  }
  std::string extra;
  if (!s.grid.empty()) {
    check_grid(p, s.grid);
    const auto pts = noise_scaling_probe(inst, s.grid, s.resamples, p.seed);
    Curve c{"P", "variance of empirical feature frequency over resamples", {}};
    for (const auto& pt : pts) {
      c.points.push_back({"measured", static_cast<double>(pt.P), pt.variance, pt.se});
      c.points.push_back({"predicted", static_cast<double>(pt.P), pt.predicted, 0.0});
    }
    c.write(dir / "noise.csv");
    extra = ", noise curve over " + std::to_string(pts.size()) + " sizes";
  }
  std::cout << "stats: " << describe(p) << (s.P ? " P=" + std::to_string(*s.P) : std::string(" exact"))
            << " signal_var=" << fmt(lm.signal_var) << extra << " -> " << dir.string() << '\n';
  return 0;
}

int cmd_onestep(const Settings& s) {
  require(!s.params.empty(), ErrorCode::config, "onestep needs model parameters");
  const auto grid = grid_or_P(s);
  Curve c{"P / p_c", "synonymic sensitivity S_11 of the one-step representation", {}};
  for (const auto& p : s.params) {
    check_grid(p, grid);
    const double pc = theory_quantities(p).p_c;
    std::vector<RhmInstance> insts;
    for (auto seed : s.seeds) insts.push_back(scan_instance(p, seed, s.hfm));
    for (auto P : grid) {
      std::vector<double> vals(s.seeds.size());
      parallel_for(s.seeds.size(), s.threads, [&](std::size_t i) {
        Rng rng = Rng(insts[i].params.seed).derive(P);
        try {
          vals[i] = onestep_sensitivity(insts[i], P, s.probe_size, s.replacements, rng).S;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::degenerate) throw;
          vals[i] = std::nan("");
        }
      });
      const auto [m, se] = mean_se(vals);
      c.points.push_back({series(p), static_cast<double>(P) / pc, m, se});
    }
  }
  const fs::path path = fs::path(s.out) / "onestep.csv";
  c.write(path);
  std::cout << "onestep: " << c.points.size() << " points over " << s.params.size() << " parameter set(s) -> "
            << path.string() << '\n';
  return 0;
}

int cmd_cluster(const Settings& s) {
  require(!s.params.empty(), ErrorCode::config, "cluster needs model parameters");
  const auto grid = grid_or_P(s);
  Curve c{"P", "test error of the layerwise clustering solver", {}};
  Curve scaled{"P / (sqrt(n_c) m^L)", "test error of the layerwise clustering solver", {}};
  for (const auto& p : s.params) {
    check_grid(p, grid);
    const double pcl = theory_quantities(p).p_cluster;
    std::vector<RhmInstance> insts;
    for (auto seed : s.seeds) insts.push_back(scan_instance(p, seed, s.hfm));
    for (auto P : grid) {
      std::vector<double> errs(s.seeds.size());
      parallel_for(s.seeds.size(), s.threads, [&](std::size_t i) {
        Rng rng = Rng(insts[i].params.seed).derive(P);
        const auto split = sample_train_test(insts[i], P, rng, s.test_cap);
        LayerwiseConfig cfg;
        cfg.pooled = s.pooled;
        cfg.kmeans.restarts = s.restarts;
        cfg.kmeans.seed = rng.derive(7).key();
        const auto res = layerwise_solve(insts[i], split.train, split.test, cfg);
        errs[i] = res.test_error;
      });
      const auto [m, se] = mean_se(errs);
      c.points.push_back({series(p), static_cast<double>(P), m, se});
      scaled.points.push_back({series(p), static_cast<double>(P) / pcl, m, se});
    }
  }
  const fs::path dir = s.out;
  c.write(dir / "cluster.csv");
  scaled.write(dir / "cluster_scaled.csv");
  std::cout << "cluster: " << c.points.size() << " points -> " << (dir / "cluster.csv").string() << '\n';
  return 0;
}

int cmd_train(const Settings& s) {
  require(s.P.has_value(), ErrorCode::config, "train needs --P");
  const auto inst = load_or_build(s);
  check_grid(inst.params, {*s.P});
  for (const auto& w : architecture_warnings(s.arch, inst.params)) std::cerr << "warning: " << w << '\n';
  const auto cell = train_cell(inst, *s.P, s.seeds.front(), s.arch, s.train, s.test_cap);
  const fs::path dir = s.out;
  {
    auto os = open_out(dir / "records.csv");
    write_records_csv(os, {cell.record});
  }
  {
    auto os = open_out(dir / "checkpoint.json");
    os << to_json(cell.net).dump() << '\n';
  }
  Curve loss{"epoch", "mean minibatch cross-entropy", {}};
  for (std::size_t e = 0; e < cell.result.loss_history.size(); ++e)
    loss.points.push_back({"train", static_cast<double>(e + 1), cell.result.loss_history[e], 0.0});
  loss.write(dir / "loss.csv");
  std::cout << "train: " << describe(inst.params) << " arch=" << cell.record.arch << " P=" << *s.P
            << " test_error=" << fmt(cell.record.test_error) << " epochs=" << cell.record.epochs
            << " converged=" << (cell.record.converged ? 1 : 0) << " -> " << dir.string() << '\n';
  return 0;
}

int cmd_scan(const Settings& s) {
  require(!s.params.empty(), ErrorCode::config, "scan needs model parameters");
  require(!s.grid.empty(), ErrorCode::config, "P grid is empty");
  std::vector<ExperimentRecord> records;
  Curve c{"P", "mean test error over converged seeds", {}};
  std::ostringstream summary;
  for (const auto& p : s.params) {
    ScanConfig cfg;
    cfg.grid = s.grid;
    cfg.seeds = s.seeds;
    cfg.arch = s.arch;
    cfg.train = s.train;
    cfg.criterion = s.criterion;
    cfg.test_cap = s.test_cap;
    cfg.threads = s.threads;
    cfg.stop_when_met = s.stop_when_met;
    cfg.hfm = s.hfm;
    const auto res = sample_complexity_scan(p, cfg);
    for (const auto& w : res.warnings) std::cerr << "warning: " << describe(p) << ": " << w << '\n';
    records.insert(records.end(), res.records.begin(), res.records.end());
    for (const auto& pt : res.points) c.points.push_back({series(p), static_cast<double>(pt.P), pt.mean_error, pt.se});
    summary << ' ' << series(p) << ":P*=" << (res.p_star ? std::to_string(*res.p_star) : std::string(">grid"));
  }
  const fs::path dir = s.out;
  {
    auto os = open_out(dir / "records.csv");
    write_records_csv(os, records);
  }
  c.write(dir / "scan.csv");
  std::cout << "scan: " << records.size() << " runs" << summary.str() << " -> " << dir.string() << '\n';
  return 0;
}

int cmd_sense(const Settings& s) {
  require(!s.params.empty(), ErrorCode::config, "sense needs model parameters");
  const auto grid = grid_or_P(s);
  Curve c{"P", "synonymic sensitivity S_kl (series: layer k, level l)", {}};
  std::vector<ExperimentRecord> records;
  const fs::path dir = s.out;
  for (const auto& p : s.params) {
    check_grid(p, grid);
    std::vector<RhmInstance> insts;
    for (auto seed : s.seeds) insts.push_back(scan_instance(p, seed, s.hfm));
    ProbeConfig pc;
    pc.probe_size = s.probe_size;
    pc.replacements = s.replacements;
    pc.whiten = s.train.whiten;
    auto probe_for = [&](const RhmInstance& inst, const Dataset& test, std::uint64_t P) {
      if (test.size() >= 2) {
        Dataset probe;
        probe.dim = test.dim;
        for (std::size_t i = 0; i < std::min(test.size(), s.probe_size); ++i) probe.push_back(test.at(i));
        return probe;
      }
      Rng r = Rng(inst.params.seed).derive(P).derive(5);
      const auto pmax = exact_p_max(inst.params);
      return sample_training_set(inst, std::min<std::uint64_t>(s.probe_size, static_cast<std::uint64_t>(*pmax)), r);
    };
    for (auto P : grid) {
      std::vector<SensitivityReport> trained(s.seeds.size()), init(s.seeds.size());
      std::vector<ExperimentRecord> recs(s.seeds.size());
      parallel_for(s.seeds.size(), s.threads, [&](std::size_t i) {
        const auto cell = train_cell(insts[i], P, s.seeds[i], s.arch, s.train, s.test_cap);
        const auto probe = probe_for(insts[i], cell.test, P);
        Rng r1 = Rng(insts[i].params.seed).derive(P).derive(6);
        Rng r2 = r1;
        trained[i] = sensitivity_profile(cell.net, insts[i], probe, pc, r1);
        init[i] = sensitivity_profile(initial_network(insts[i], P, s.arch), insts[i], probe, pc, r2);
        recs[i] = cell.record;
        recs[i].params = p;
      });
      records.insert(records.end(), recs.begin(), recs.end());
      for (std::size_t i = 0; i < s.seeds.size(); ++i) {
        auto os = open_out(dir / ("sense_" + series(p) + "_P" + std::to_string(P) + "_seed" +
                                  std::to_string(s.seeds[i]) + ".csv"));
        write_sensitivity_csv(os, trained[i]);
      }
      for (int k = 0; k < trained.front().layers(); ++k)
        for (int l = 1; l <= p.L; ++l) {
          std::vector<double> a, b;
          for (std::size_t i = 0; i < s.seeds.size(); ++i) {
            a.push_back(trained[i].at(k, l).S);
            b.push_back(init[i].at(k, l).S);
          }
          const auto [m, se] = mean_se(a);
          const auto [mi, sei] = mean_se(b);
          const std::string tag = series(p) + "_k" + std::to_string(k) + "_l" + std::to_string(l);
          c.points.push_back({tag, static_cast<double>(P), m, se});
          c.points.push_back({tag + "_init", static_cast<double>(P), mi, sei});
        }
    }
  }
  {
    auto os = open_out(dir / "records.csv");
    write_records_csv(os, records);
  }
  c.write(dir / "sense.csv");
  std::cout << "sense: " << records.size() << " trained networks -> " << (dir / "sense.csv").string() << '\n';
  return 0;
}

int report(ErrorCode code, std::string msg) {
  const std::string prefix = std::string(to_string(code)) + ": ";
  if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
  const bool config_like = code == ErrorCode::config || code == ErrorCode::invalid_params || code == ErrorCode::parse ||
                           code == ErrorCode::unsupported_construction || code == ErrorCode::out_of_range ||
                           code == ErrorCode::cap_exceeded;
  std::cerr << json{{"error", std::string(to_string(code))}, {"message", msg}}.dump() << '\n';
  return config_like ? kExitConfig : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random hierarchy model experiments"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  struct Flags {
    std::optional<int> v, m, s, L, nc, width, depth, seeds, max_epochs, instances, resamples, replacements;
    std::optional<std::uint64_t> seed, P, probe_size, test_cap;
    std::optional<std::string> grid, arch, out, config, instance, criterion, param;
    std::optional<int> threads;
    std::optional<double> lr;
    bool hfm = false;
  } f;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen", "Sample an instance and write it as JSON (plus P data with --P)"},
      {"theory", "Print characteristic sample sizes"},
      {"stats", "Exact or empirical counts, frequencies and moments"},
      {"onestep", "Sensitivity of the one-step representation versus P"},
      {"cluster", "Layerwise clustering solver error versus P"},
      {"train", "Train one network"},
      {"scan", "Sample-complexity scan over a P grid"},
      {"sense", "Synonymic sensitivity of trained networks versus P"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--v", f.v, "Vocabulary size");
    sub->add_option("--m", f.m, "Representations per symbol");
    sub->add_option("--s", f.s, "Tuple length");
    sub->add_option("--L", f.L, "Depth");
    sub->add_option("--nc", f.nc, "Number of classes");
    sub->add_option("--seed", f.seed, "Instance seed");
    sub->add_option("--P", f.P, "Training-set size");
    sub->add_option("--grid", f.grid, "P grid: a,b,c or lo:hi[:ratio]");
    sub->add_option("--arch", f.arch, "shallow-fcn | deep-fcn | tree-cnn");
    sub->add_option("--width", f.width, "Hidden width (default depends on the architecture)");
    sub->add_option("--depth", f.depth, "Hidden layers of the deep FCN");
    sub->add_option("--param", f.param, "standard | ntk");
    sub->add_option("--seeds", f.seeds, "Number of seeds");
    sub->add_option("--max-epochs", f.max_epochs, "Epoch cap");
    sub->add_option("--lr", f.lr, "Learning rate");
    sub->add_option("--test-cap", f.test_cap, "Maximum test-set size");
    sub->add_option("--probe", f.probe_size, "Probe-set size for sensitivities");
    sub->add_option("--replacements", f.replacements, "Synonym exchanges per probe datum");
    sub->add_option("--instances", f.instances, "Monte Carlo instances (stats)");
    sub->add_option("--resamples", f.resamples, "Training-set resamples (stats noise probe)");
    sub->add_option("--criterion", f.criterion, "relative | absolute");
    sub->add_option("--instance", f.instance, "Load the instance from a JSON file");
    sub->add_flag("--hfm", f.hfm, "Homogeneous-features construction");
    sub->add_option("--out", f.out, "Output directory (gen: file or directory)");
    sub->add_option("--threads", f.threads, "Worker threads");
    sub->add_option("--config", f.config, "JSON config file; flags override it");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(ErrorCode::config, e.what());
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    json cfg = json::object();
    if (f.config) {
      std::ifstream is(*f.config);
      require(static_cast<bool>(is), ErrorCode::config, "cannot open config " + *f.config);
      try {
        cfg = json::parse(is);
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse, "config " + *f.config + ": " + e.what());
      }
      require(cfg.is_object(), ErrorCode::config, "config must be a JSON object");
      if (cfg.contains("command"))
        require(cfg.at("command") == command, ErrorCode::config,
                "config is for '" + cfg.at("command").dump() + "', not '" + command + "'");
    }
    cfg["command"] = command;
    // Environment supplies only the output directory and thread count, below
    // the config file and the flags.
    if (!cfg.contains("out"))
      if (const char* e = std::getenv("RHM_OUT_DIR")) cfg["out"] = e;
    if (!cfg.contains("threads"))
      if (const char* e = std::getenv("RHM_THREADS")) {
        try {
          cfg["threads"] = std::stoi(e);
        } catch (const std::logic_error&) {
          throw Error(ErrorCode::config, "RHM_THREADS is not an integer");
        }
      }
    const bool any_param = f.v || f.m || f.s || f.L || f.nc || f.seed;
    if (any_param) {
      json& p = cfg["params"];
      if (p.is_null()) p = json::object();
      require(p.is_object(), ErrorCode::config, "parameter flags cannot override a list of parameter sets");
      if (f.v) p["v"] = *f.v;
      if (f.m) p["m"] = *f.m;
      if (f.s) p["s"] = *f.s;
      if (f.L) p["L"] = *f.L;
      if (f.nc) p["n_c"] = *f.nc;
      if (f.seed) p["seed"] = *f.seed;
    }
    if (f.P) cfg["P"] = *f.P;
    if (f.grid) cfg["grid"] = *f.grid;
    if (f.arch) cfg["arch"] = *f.arch;
    if (f.width) cfg["width"] = *f.width;
    if (f.depth) cfg["depth"] = *f.depth;
    if (f.param) cfg["param"] = *f.param;
    if (f.seeds) cfg["seeds"] = *f.seeds;
    if (f.max_epochs) cfg["train"]["max_epochs"] = *f.max_epochs;
    if (f.lr) cfg["train"]["lr"] = *f.lr;
    if (f.test_cap) cfg["test_cap"] = *f.test_cap;
    if (f.probe_size) cfg["probe_size"] = *f.probe_size;
    if (f.replacements) cfg["replacements"] = *f.replacements;
    if (f.instances) cfg["instances"] = *f.instances;
    if (f.resamples) cfg["resamples"] = *f.resamples;
    if (f.criterion) cfg["criterion"] = *f.criterion;
    if (f.instance) cfg["instance"] = *f.instance;
    if (f.hfm) cfg["hfm"] = true;
    if (f.out) cfg["out"] = *f.out;
    if (f.threads) cfg["threads"] = *f.threads;

    const Settings s = resolve(cfg);
    if (s.params.empty() && !s.instance_path)
      throw Error(ErrorCode::config, "no model parameters: give --v/--m/--s/--L/--nc, params in --config, or --instance");
    if (command == "gen") return cmd_gen(s);
    if (command == "theory") return cmd_theory(s);
    if (command == "stats") return cmd_stats(s);
    if (command == "onestep") return cmd_onestep(s);
    if (command == "cluster") return cmd_cluster(s);
    if (command == "train") return cmd_train(s);
    if (command == "scan") return cmd_scan(s);
    return cmd_sense(s);
  } catch (const Error& e) {
    return report(e.code(), e.what());
  } catch (const fs::filesystem_error& e) {
    return report(ErrorCode::config, e.what());
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "runtime"}, {"message", e.what()}}.dump() << '\n';
    return kExitRuntime;
  }
}
