#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "onoff/bounds.hpp"
#include "onoff/model.hpp"
#include "onoff/scheme.hpp"
#include "onoff/sim.hpp"
#include "onoff/verify.hpp"

namespace onoff {

using Json = nlohmann::json;

// Parse failures and missing files surface as ConfigError.
Json read_json_file(const std::string& path);

// {"n": N, "p": [[...]], "pi0": [...]}; pi0 is optional and defaults to uniform.
MarkovModel model_from_json(const Json& j);
Json model_to_json(const MarkovModel& model);
MarkovModel load_model(const std::string& path);

// {"n": N, "entries": [{"z": [counts], "x": .., "u": .., "p": ..}]}
Json distribution_to_json(const QueryDistribution& dist);
QueryDistribution distribution_from_json(const Json& j);

Json law_to_json(const ConditionalLaw& law);
ConditionalLaw law_from_json(const Json& j);

Json audit_to_json(const AuditReport& report);
Json bounds_to_json(const std::vector<BoundsRow>& rows);

// "1010" literal, or "bernoulli:P" for a random pattern of `length` steps.
PrivacyPattern pattern_from_spec(const std::string& spec, std::size_t length,
                                 std::uint64_t seed);

// Columns episode, t, F, x, q (bitmask), len_bits, decode_ok.
void write_trace_csv(std::ostream& os, const std::vector<Episode>& episodes);

}  // namespace onoff
