#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rhm/error.hpp"
#include "rhm/hierarchy.hpp"
#include "rhm/params.hpp"
#include "rhm/scan.hpp"

namespace rhm {

inline constexpr const char* kInstanceSchema = "rhm-instance-v1";
inline constexpr const char* kRecordSchema = "rhm-scan-v1";

inline nlohmann::json params_to_json(const ModelParams& p) {
  return {{"v", p.v}, {"m", p.m}, {"s", p.s}, {"L", p.L}, {"n_c", p.n_c}, {"seed", p.seed}};
}

/// rules[l-1][sym][i] is the i-th tuple (as an element array) of `sym` at level l.
inline nlohmann::json instance_to_json(const RhmInstance& inst) {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : inst.rules) {
    nlohmann::json level = nlohmann::json::array();
    for (int sym = 0; sym < r.domain_size; ++sym) {
      nlohmann::json reps = nlohmann::json::array();
      for (TupleCode t : r.representations(sym)) reps.push_back(decode_tuple(t, r.v, r.s));
      level.push_back(std::move(reps));
    }
    rules.push_back(std::move(level));
  }
  return {{"schema", kInstanceSchema},
          {"params", params_to_json(inst.params)},
          {"construction", inst.construction},
          {"rules", std::move(rules)}};
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& key, const std::string& where) {
  require(j.is_object() && j.contains(key), ErrorCode::parse, "missing field '" + where + key + "'");
  return j.at(key);
}

template <class T>
T field_as(const nlohmann::json& j, const std::string& key, const std::string& where) {
  const auto& f = field(j, key, where);
  try {
    return f.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::parse, "field '" + where + key + "' has the wrong type");
  }
}

}  // namespace detail

inline ModelParams params_from_json(const nlohmann::json& j) {
  ModelParams p;
  p.v = detail::field_as<int>(j, "v", "params.");
  p.m = detail::field_as<int>(j, "m", "params.");
  p.s = detail::field_as<int>(j, "s", "params.");
  p.L = detail::field_as<int>(j, "L", "params.");
  p.n_c = detail::field_as<int>(j, "n_c", "params.");
  if (j.contains("seed")) p.seed = detail::field_as<std::uint64_t>(j, "seed", "params.");
  return p;
}

/// Parses and validates an instance; shape problems are parse errors naming
/// the offending field, parameter violations are invalid-params errors.
inline RhmInstance instance_from_json(const nlohmann::json& j) {
  const auto schema = detail::field_as<std::string>(j, "schema", "");
  require(schema == kInstanceSchema, ErrorCode::parse, "unsupported schema '" + schema + "'");
  RhmInstance inst;
  inst.params = params_from_json(detail::field(j, "params", ""));
  validate(inst.params);
  if (j.contains("construction")) inst.construction = detail::field_as<std::string>(j, "construction", "");
  const auto& p = inst.params;
  const auto& rules = detail::field(j, "rules", "");
  require(rules.is_array() && static_cast<int>(rules.size()) == p.L, ErrorCode::parse,
          "field 'rules' must hold L=" + std::to_string(p.L) + " levels");
  for (int level = 1; level <= p.L; ++level) {
    const std::string where = "rules[" + std::to_string(level - 1) + "]";
    const auto& lv = rules[static_cast<std::size_t>(level - 1)];
    const int domain = p.domain_size(level);
    require(lv.is_array() && static_cast<int>(lv.size()) == domain, ErrorCode::parse,
            "field '" + where + "' must hold " + std::to_string(domain) + " symbols");
    CompositionRule r;
    r.level = level;
    r.domain_size = domain;
    r.m = p.m;
    r.v = p.v;
    r.s = p.s;
    for (int sym = 0; sym < domain; ++sym) {
      const auto& reps = lv[static_cast<std::size_t>(sym)];
      const std::string w = where + "[" + std::to_string(sym) + "]";
      require(reps.is_array() && static_cast<int>(reps.size()) == p.m, ErrorCode::parse,
              "field '" + w + "' must hold m=" + std::to_string(p.m) + " tuples");
      for (int i = 0; i < p.m; ++i) {
        const auto& tup = reps[static_cast<std::size_t>(i)];
        const std::string wt = w + "[" + std::to_string(i) + "]";
        require(tup.is_array() && static_cast<int>(tup.size()) == p.s, ErrorCode::parse,
                "field '" + wt + "' must be an s-tuple");
        std::vector<int> elems;
        for (const auto& e : tup) {
          require(e.is_number_integer() && e.get<int>() >= 0 && e.get<int>() < p.v, ErrorCode::parse,
                  "field '" + wt + "' has an element outside 0..v-1");
          elems.push_back(e.get<int>());
        }
        r.forward.push_back(encode_tuple(elems, p.v));
      }
    }
    r.index();
    inst.rules.push_back(std::move(r));
  }
  validate(inst);
  return inst;
}

inline void write_instance(std::ostream& os, const RhmInstance& inst) { os << instance_to_json(inst).dump() << '\n'; }

inline RhmInstance read_instance(std::istream& is) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse, std::string("instance JSON: ") + e.what());
  }
  return instance_from_json(j);
}

inline constexpr const char* kRecordColumns =
    "v,m,s,L,n_c,param_seed,arch,P,seed,test_error,train_loss,epochs,converged,runtime_s";

/// Record CSV. runtime_s is last so the other columns are byte-stable.
inline void write_records_csv(std::ostream& os, const std::vector<ExperimentRecord>& recs) {
  os << "# schema: " << kRecordSchema << '\n' << kRecordColumns << '\n';
  std::ostringstream line;
  line.precision(17);
  for (const auto& r : recs) {
    line.str("");
    const auto& p = r.params;
    line << p.v << ',' << p.m << ',' << p.s << ',' << p.L << ',' << p.n_c << ',' << p.seed << ',' << r.arch << ',' << r.P << ','
         << r.seed << ',' << r.test_error << ',' << r.train_loss << ',' << r.epochs << ',' << (r.converged ? 1 : 0)
         << ',' << r.runtime_s << '\n';
    os << line.str();
  }
}

inline std::vector<ExperimentRecord> read_records_csv(std::istream& is) {
  std::string line;
  int lineno = 0;
  auto next = [&] {
    ++lineno;
    return static_cast<bool>(std::getline(is, line));
  };
  require(next() && line == std::string("# schema: ") + kRecordSchema, ErrorCode::parse,
          "line 1: expected '# schema: " + std::string(kRecordSchema) + "'");
  require(next() && line == kRecordColumns, ErrorCode::parse, "line 2: unexpected column header");
  std::vector<ExperimentRecord> out;
  while (next()) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    const std::string at = "line " + std::to_string(lineno);
    require(cells.size() == 14, ErrorCode::parse, at + ": expected 14 columns");
    ExperimentRecord r;
    try {
      r.params.v = std::stoi(cells[0]);
      r.params.m = std::stoi(cells[1]);
      r.params.s = std::stoi(cells[2]);
      r.params.L = std::stoi(cells[3]);
      r.params.n_c = std::stoi(cells[4]);
      r.params.seed = std::stoull(cells[5]);
      r.arch = cells[6];
      r.P = std::stoull(cells[7]);
      r.seed = std::stoull(cells[8]);
      r.test_error = std::stod(cells[9]);
      r.train_loss = std::stod(cells[10]);
      r.epochs = std::stoi(cells[11]);
      r.converged = std::stoi(cells[12]) != 0;
      r.runtime_s = std::stod(cells[13]);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::parse, at + ": malformed number");
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace rhm
