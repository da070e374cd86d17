#include "cli.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "onoff/bounds.hpp"
#include "onoff/errors.hpp"
#include "onoff/io.hpp"
#include "onoff/lp.hpp"
#include "onoff/scheme.hpp"
#include "onoff/sim.hpp"
#include "onoff/verify.hpp"

namespace onoff::cli {
namespace {

// Cardinalities stored in a build file must be reproduced this closely.
constexpr double kRoundTripTolerance = 1e-9;
constexpr double kExpectTolerance = 1e-6;

struct Options {
  std::string model_path;
  std::string pattern;
  std::size_t horizon = 0;
  bool horizon_set = false;
  int cap = 0;
  std::size_t episodes = 1000;
  std::uint64_t seed = 0;
  std::size_t msg_bits = 64;
  std::string policy = "algorithm1";
  std::string format;
  std::string out;
  std::optional<double> expect;
  std::size_t gap = 1;
  bool with_lp = false;
  std::string input;
  std::string dump_path;
  std::string grid = "decay";
  int sources = 3;
  std::size_t points = 100;
  std::size_t max_gap = 20;
  std::vector<double> sums = {0.2, 0.4, 0.7, 1.0};
};

void emit(const Options& opt, const std::string& text, std::ostream& out) {
  if (opt.out.empty()) {
    out << text;
    return;
  }
  std::ofstream f(opt.out);
  if (!f) throw ConfigError("cannot write '" + opt.out + "'");
  f << text;
}

PrivacyPattern load_pattern(const Options& opt) {
  if (opt.pattern.empty()) throw ConfigError("--pattern is required");
  const std::size_t length = opt.horizon_set ? opt.horizon + 1 : 0;
  PrivacyPattern pattern = pattern_from_spec(opt.pattern, length, opt.seed);
  if (opt.horizon_set && pattern.size() < opt.horizon + 1) {
    throw ConfigError("pattern is shorter than --horizon + 1");
  }
  return pattern;
}

std::size_t horizon_of(const Options& opt, const PrivacyPattern& pattern) {
  return opt.horizon_set ? opt.horizon : pattern.size() - 1;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(15) << v;
  return os.str();
}

int cmd_bounds(const Options& opt, std::ostream& out) {
  const MarkovModel model = load_model(opt.model_path);
  const PrivacyPattern pattern = load_pattern(opt);
  BoundsOptions bo;
  bo.policy = parse_policy(opt.policy);
  bo.with_lp = opt.with_lp;
  const auto rows = bounds_over_horizon(model, pattern, horizon_of(opt, pattern), bo);
  if (opt.format == "json") {
    emit(opt, bounds_to_json(rows).dump(2) + "\n", out);
  } else {
    std::ostringstream os;
    write_bounds_csv(os, rows);
    emit(opt, os.str(), out);
  }
  return kExitOk;
}

int cmd_build(const Options& opt, std::ostream& out) {
  const MarkovModel model = load_model(opt.model_path);
  const ConditionalLaw law = step_law(model, opt.gap);
  const OrderStats stats = order_stats(law);
  BuildTrace trace;
  const QueryDistribution dist = build_query_distribution(law, stats, &trace);

  Json j = distribution_to_json(dist);
  j["scheme"] = "algorithm1";
  j["gap"] = opt.gap;
  j["law"] = law_to_json(law);
  j["expected_multiset_cardinality"] = dist.expected_cardinality();
  j["expected_set_cardinality"] = dist.expected_set_cardinality();
  j["stats"] = {{"lambdas", stats.lambdas},
                {"thetas", stats.thetas},
                {"sigma", stats.sigma},
                {"deltas", stats.deltas}};
  j["pieces_per_stage"] = trace.pieces;
  emit(opt, j.dump(2) + "\n", out);
  return kExitOk;
}

int cmd_verify(const Options& opt, std::ostream& out) {
  const Json j = read_json_file(opt.input);
  const QueryDistribution dist = distribution_from_json(j);
  if (!j.contains("law")) throw ConfigError("verify: input has no 'law' field");
  const ConditionalLaw law = law_from_json(j.at("law"));
  const OrderStats stats = order_stats(law);

  AuditOptions ao;
  ao.check_cardinality = j.value("scheme", std::string("algorithm1")) == "algorithm1";
  const AuditReport report = audit_distribution(dist, law, stats, ao);

  bool consistent = true;
  std::ostringstream notes;
  auto compare = [&](const char* key, double actual) {
    if (!j.contains(key)) return;
    const double stored = j.at(key).get<double>();
    if (std::abs(stored - actual) > kRoundTripTolerance) {
      consistent = false;
      notes << key << ": stored " << fmt(stored) << ", recomputed " << fmt(actual) << '\n';
    }
  };
  compare("expected_multiset_cardinality", dist.expected_cardinality());
  compare("expected_set_cardinality", dist.expected_set_cardinality());
  const bool ok = report.passed && consistent;

  if (opt.format == "json") {
    Json r = audit_to_json(report);
    r["consistent"] = consistent;
    emit(opt, r.dump(2) + "\n", out);
  } else {
    std::ostringstream os;
    os << (ok ? "PASS" : "FAIL") << '\n'
       << "privacy_gap " << fmt(report.privacy_gap) << " at z=" << report.privacy_worst_query
       << " u=" << report.privacy_worst_u << " v=" << report.privacy_worst_v << '\n'
       << "set_privacy_gap " << fmt(report.set_privacy_gap) << '\n'
       << "mutual_information_bits " << fmt(report.mutual_information) << '\n'
       << "decodability_violations " << report.decodability_violations << '\n'
       << "marginal_gap " << fmt(report.marginal_gap) << " at u=" << report.marginal_worst_u
       << " x=" << report.marginal_worst_x << '\n';
    if (report.cardinality_checked) {
      os << "cardinality_gap " << fmt(report.cardinality_gap) << " at |z|="
         << report.cardinality_worst << '\n';
    }
    os << notes.str();
    emit(opt, os.str(), out);
  }
  return ok ? kExitOk : kExitFailed;
}

int cmd_lp(const Options& opt, std::ostream& out, std::ostream& err) {
  const MarkovModel model = load_model(opt.model_path);
  const ConditionalLaw law = step_law(model, opt.gap);
  const std::optional<int> cap = opt.cap > 0 ? std::optional<int>(opt.cap) : std::nullopt;
  const LpProblem problem = build_lp(law, cap);
  if (!opt.dump_path.empty()) {
    std::ofstream f(opt.dump_path);
    if (!f) throw ConfigError("cannot write '" + opt.dump_path + "'");
    f << dump(problem);
  }
  const LpSolution sol = solve(problem);
  if (sol.status != LpStatus::kOptimal) {
    err << "LP did not reach an optimum\n";
    return kExitFailed;
  }

  if (opt.format == "json") {
    Json j = {{"optimum", sol.optimum},
              {"columns", problem.legend.size()},
              {"rows", problem.constraints.rows()},
              {"pivots", sol.pivots},
              {"distribution", distribution_to_json(to_distribution(problem, sol))}};
    j["distribution"]["law"] = law_to_json(law);
    j["distribution"]["scheme"] = "lp";
    if (cap) j["cap"] = *cap;
    emit(opt, j.dump(2) + "\n", out);
  } else {
    emit(opt, fmt(sol.optimum) + "\n", out);
  }
  if (opt.expect && std::abs(sol.optimum - *opt.expect) > kExpectTolerance) {
    err << "optimum " << fmt(sol.optimum) << " differs from expected " << fmt(*opt.expect) << '\n';
    return kExitFailed;
  }
  return kExitOk;
}

int cmd_simulate(const Options& opt, std::ostream& out) {
  const MarkovModel model = load_model(opt.model_path);
  const PrivacyPattern pattern = load_pattern(opt);
  if (opt.episodes == 0) throw ConfigError("--episodes must be positive");
  SimConfig config;
  config.message_bits = opt.msg_bits;
  config.seed = opt.seed;
  config.policy = parse_policy(opt.policy);
  const std::vector<Episode> episodes = run_episodes(model, pattern, config, opt.episodes);

  if (!opt.out.empty()) {
    std::ofstream f(opt.out);
    if (!f) throw ConfigError("cannot write '" + opt.out + "'");
    write_trace_csv(f, episodes);
  }

  std::size_t failures = 0;
  Json steps = Json::array();
  for (std::size_t t = 0; t < pattern.size(); ++t) {
    double total = 0.0;
    std::size_t step_failures = 0;
    for (const Episode& ep : episodes) {
      total += ep[t].q.size();
      step_failures += ep[t].decode_ok ? 0 : 1;
    }
    failures += step_failures;
    const double mean = total / static_cast<double>(episodes.size());
    const ChiSquareResult chi = empirical_privacy_audit(episodes, t);
    steps.push_back({{"t", t},
                     {"F_t", pattern.on(t) ? 1 : 0},
                     {"mean_query_size", mean},
                     {"rate", 1.0 / mean},
                     {"decode_failures", step_failures},
                     {"chi_square", {{"statistic", chi.statistic},
                                     {"dof", chi.dof},
                                     {"p_value", chi.p_value},
                                     {"strata", chi.strata},
                                     {"reliable", chi.reliable}}}});
  }

  if (opt.format == "csv") {
    std::ostringstream os;
    os << "t,F_t,mean_query_size,rate,decode_failures,chi_square,dof,p_value\n";
    for (const Json& s : steps) {
      os << s["t"] << ',' << s["F_t"] << ',' << fmt(s["mean_query_size"].get<double>()) << ','
         << fmt(s["rate"].get<double>()) << ',' << s["decode_failures"] << ','
         << fmt(s["chi_square"]["statistic"].get<double>()) << ',' << s["chi_square"]["dof"]
         << ',' << fmt(s["chi_square"]["p_value"].get<double>()) << '\n';
    }
    out << os.str();
  } else {
    const Json summary = {{"episodes", opt.episodes}, {"seed", opt.seed},
                          {"policy", policy_name(config.policy)},
                          {"pattern", pattern.str()}, {"msg_bits", opt.msg_bits},
                          {"decode_failures", failures}, {"steps", steps}};
    out << summary.dump(2) << '\n';
  }
  return failures == 0 ? kExitOk : kExitFailed;
}

int cmd_sweep(const Options& opt, std::ostream& out) {
  const bool json = opt.format == "json";
  std::ostringstream os;
  os << std::setprecision(15);
  Json arr = Json::array();
  if (opt.grid == "decay") {
    if (!json) os << "sum,gap,inverse_rate,rate\n";
    for (const DecayPoint& p : decay_grid(opt.sums, opt.max_gap)) {
      if (json) {
        arr.push_back({{"sum", p.sum}, {"gap", p.gap}, {"inverse_rate", p.inverse_rate},
                       {"rate", 1.0 / p.inverse_rate}});
      } else {
        os << p.sum << ',' << p.gap << ',' << p.inverse_rate << ',' << 1.0 / p.inverse_rate << '\n';
      }
    }
  } else if (opt.grid == "symmetric") {
    if (!json) os << "stay,outer,inner,outer_rate,inner_rate\n";
    for (const SymmetricPoint& p : symmetric_grid(opt.sources, opt.points)) {
      if (json) {
        arr.push_back({{"stay", p.stay}, {"outer", p.outer}, {"inner", p.inner},
                       {"outer_rate", 1.0 / p.outer}, {"inner_rate", 1.0 / p.inner}});
      } else {
        os << p.stay << ',' << p.outer << ',' << p.inner << ',' << 1.0 / p.outer << ','
           << 1.0 / p.inner << '\n';
      }
    }
  } else {
    throw ConfigError("--grid must be 'decay' or 'symmetric'");
  }
  emit(opt, json ? arr.dump(2) + "\n" : os.str(), out);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ON-OFF privacy scheme synthesis, verification and simulation"};
  app.require_subcommand(1);
  Options opt;

  auto add_model = [&](CLI::App* cmd) {
    cmd->add_option("--model", opt.model_path, "Model JSON")->required();
  };
  // Left empty by default; each command picks its own default format.
  auto add_format = [&](CLI::App* cmd) {
    cmd->add_option("--format", opt.format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}));
  };
  auto add_pattern = [&](CLI::App* cmd) {
    cmd->add_option("--pattern", opt.pattern, "Privacy pattern, e.g. 1000 or bernoulli:0.2")
        ->required();
    cmd->add_option("--horizon", opt.horizon, "Last time index T")
        ->each([&](const std::string&) { opt.horizon_set = true; });
    cmd->add_option("--seed", opt.seed, "Seed for random patterns and simulation");
  };

  auto* bounds = app.add_subcommand("bounds", "Per-step rate bounds over a pattern");
  add_model(bounds);
  add_pattern(bounds);
  bounds->add_option("--policy", opt.policy, "Scheme inducing the history law");
  bounds->add_flag("--lp", opt.with_lp, "Add the history-averaged LP optimum");
  bounds->add_option("--out", opt.out, "Output file");

  auto* build = app.add_subcommand("build", "Build the step scheme for P^gap");
  add_model(build);
  build->add_option("--gap", opt.gap, "Steps since the last ON step")->check(CLI::PositiveNumber);
  build->add_option("--out", opt.out, "Output JSON file");

  auto* verify = app.add_subcommand("verify", "Audit a scheme file");
  verify->add_option("input", opt.input, "Scheme JSON from build or lp")->required();
  verify->add_option("--out", opt.out, "Report file");

  auto* lp = app.add_subcommand("lp", "Solve the query-design LP for P^gap");
  add_model(lp);
  lp->add_option("--gap", opt.gap, "Steps since the last ON step")->check(CLI::PositiveNumber);
  lp->add_option("--cap", opt.cap, "Allow only |q| <= cap or |q| = N")->check(CLI::PositiveNumber);
  lp->add_option("--expect", opt.expect, "Fail unless the optimum matches within 1e-6");
  lp->add_option("--dump", opt.dump_path, "Write the LP in plain text");
  lp->add_option("--out", opt.out, "Output file");

  auto* simulate = app.add_subcommand("simulate", "Run seeded episodes with real payloads");
  add_model(simulate);
  add_pattern(simulate);
  simulate->add_option("--episodes", opt.episodes, "Number of episodes");
  simulate->add_option("--msg-bits", opt.msg_bits, "Message length L in bits")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--policy", opt.policy,
                       "algorithm1, n2_closed_form, naive or full_download");
  simulate->add_option("--out", opt.out, "Trace CSV file");

  auto* sweep = app.add_subcommand("sweep", "Plot data for the closed-form curves");
  sweep->add_option("--grid", opt.grid, "decay (two sources) or symmetric (N sources)");
  sweep->add_option("--n", opt.sources, "Sources for the symmetric grid")->check(CLI::Range(2, 64));
  sweep->add_option("--points", opt.points, "Grid points for the symmetric grid");
  sweep->add_option("--max-gap", opt.max_gap, "Largest t - tau for the decay grid");
  sweep->add_option("--sums", opt.sums, "alpha + beta values for the decay grid");
  sweep->add_option("--out", opt.out, "Output file");

  for (CLI::App* cmd : {bounds, verify, lp, simulate, sweep}) add_format(cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*bounds) return cmd_bounds(opt, out);
    if (*build) return cmd_build(opt, out);
    if (*verify) return cmd_verify(opt, out);
    if (*lp) return cmd_lp(opt, out, err);
    if (*simulate) return cmd_simulate(opt, out);
    if (*sweep) return cmd_sweep(opt, out);
  } catch (const CapacityError& e) {
    err << "capacity: " << e.what() << '\n';
    return kExitCapacity;
  } catch (const ConfigError& e) {
    err << "config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::out_of_range& e) {
    err << "config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailed;
  }
  return kExitConfig;
}

}  // namespace onoff::cli
