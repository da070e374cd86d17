#include "onoff/io.hpp"

#include <fstream>

#include "onoff/errors.hpp"

namespace onoff {
namespace {

template <typename T>
T field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) {
    throw ConfigError(std::string("missing field '") + name + "'");
  }
  try {
    return j.at(name).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad field '") + name + "': " + e.what());
  }
}

Matrix matrix_field(const Json& j, const char* name) {
  const auto rows = field<std::vector<std::vector<double>>>(j, name);
  for (const auto& r : rows) {
    if (r.size() != rows.size()) throw ConfigError(std::string("'") + name + "' must be square");
  }
  return Matrix::from_rows(rows);
}

}  // namespace

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

MarkovModel model_from_json(const Json& j) {
  Matrix p = matrix_field(j, "p");
  if (j.contains("n") && field<int>(j, "n") != static_cast<int>(p.rows())) {
    throw ConfigError("model: 'n' does not match the size of 'p'");
  }
  std::vector<double> pi0 = j.contains("pi0")
                                ? field<std::vector<double>>(j, "pi0")
                                : std::vector<double>(p.rows(), 1.0 / static_cast<double>(p.rows()));
  return MarkovModel(std::move(p), std::move(pi0));
}

Json model_to_json(const MarkovModel& model) {
  return {{"n", model.n()}, {"p", model.p().to_rows()}, {"pi0", model.pi0()}};
}

MarkovModel load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

Json distribution_to_json(const QueryDistribution& dist) {
  Json entries = Json::array();
  for (const QueryEntry& e : dist.entries()) {
    entries.push_back({{"z", e.z.counts(dist.n())}, {"x", e.x}, {"u", e.u}, {"p", e.prob}});
  }
  return {{"n", dist.n()}, {"entries", std::move(entries)}};
}

QueryDistribution distribution_from_json(const Json& j) {
  const int n = field<int>(j, "n");
  if (n < 1 || n > kMaxSources) throw ConfigError("distribution: bad 'n'");
  const Json entries = field<Json>(j, "entries");
  if (!entries.is_array()) throw ConfigError("distribution: 'entries' must be an array");
  std::vector<QueryEntry> out;
  for (const Json& e : entries) {
    const auto counts = field<std::vector<int>>(e, "z");
    if (static_cast<int>(counts.size()) != n) {
      throw ConfigError("distribution: 'z' must list one count per source");
    }
    out.push_back({MultisetQuery::from_counts(counts), field<int>(e, "x"), field<int>(e, "u"),
                   field<double>(e, "p")});
  }
  return QueryDistribution(n, std::move(out));
}

Json law_to_json(const ConditionalLaw& law) { return law.table().to_rows(); }

ConditionalLaw law_from_json(const Json& j) {
  try {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    for (const auto& r : rows) {
      if (r.size() != rows.size()) throw ConfigError("law must be square");
    }
    return ConditionalLaw(Matrix::from_rows(rows));
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad law: ") + e.what());
  }
}

Json audit_to_json(const AuditReport& r) {
  Json j = {
      {"passed", r.passed},
      {"privacy_gap", r.privacy_gap},
      {"privacy_worst", {{"query", r.privacy_worst_query}, {"u", r.privacy_worst_u},
                         {"v", r.privacy_worst_v}}},
      {"set_privacy_gap", r.set_privacy_gap},
      {"mutual_information_bits", r.mutual_information},
      {"mutual_information_kl_bits", r.mutual_information_kl},
      {"decodability_violations", r.decodability_violations},
      {"marginal_gap", r.marginal_gap},
      {"marginal_worst", {{"u", r.marginal_worst_u}, {"x", r.marginal_worst_x}}},
  };
  if (r.cardinality_checked) {
    j["cardinality_gap"] = r.cardinality_gap;
    j["cardinality_worst"] = r.cardinality_worst;
  } else {
    j["cardinality_gap"] = nullptr;
  }
  return j;
}

Json bounds_to_json(const std::vector<BoundsRow>& rows) {
  Json out = Json::array();
  for (const BoundsRow& r : rows) {
    Json j = {{"t", r.t},           {"F_t", r.on ? 1 : 0},  {"outer2", r.outer2},
              {"outer1", r.outer1}, {"inner", r.inner},     {"achieved", r.achieved}};
    if (r.exact_n2) j["exact_n2"] = *r.exact_n2;
    if (r.lp_opt) j["lp_opt"] = *r.lp_opt;
    out.push_back(std::move(j));
  }
  return out;
}

PrivacyPattern pattern_from_spec(const std::string& spec, std::size_t length,
                                 std::uint64_t seed) {
  constexpr std::string_view kPrefix = "bernoulli:";
  if (spec.starts_with(kPrefix)) {
    double p = 0.0;
    try {
      std::size_t used = 0;
      p = std::stod(spec.substr(kPrefix.size()), &used);
      if (used != spec.size() - kPrefix.size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw ConfigError("bad pattern '" + spec + "'");
    }
    if (length == 0) throw ConfigError("a bernoulli pattern needs --horizon");
    return PrivacyPattern::bernoulli(length, p, seed);
  }
  return PrivacyPattern::parse(spec);
}

void write_trace_csv(std::ostream& os, const std::vector<Episode>& episodes) {
  os << "episode,t,F,x,q,len_bits,decode_ok\n";
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (const TraceRecord& r : episodes[e]) {
      os << e << ',' << r.t << ',' << (r.on ? 1 : 0) << ',' << r.x << ',' << r.q.mask() << ','
         << r.len_bits << ',' << (r.decode_ok ? 1 : 0) << '\n';
    }
  }
}

}  // namespace onoff
