#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "walkergeo/sampling.h"
#include "walkergeo/walker.h"

namespace walkergeo::cli {

enum ExitCode : int {
  kPass = 0,
  kFail = 1,
  kFlowEscape = 2,
  kZeroLambda = 3,
  kGridFailure = 4,
  kUnknownExample = 5,
  kBadInput = 6,
  kPrecondition = 7,
};

// Malformed spec file or command line; the message carries file/line context.
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MetricSpec {
  WalkerMetric metric;
  std::optional<double> lambda;
  Box box;  // (xp, coords..., xm)
  std::optional<double> tolerance;
  std::optional<std::uint64_t> seed;
  std::string digest;
};

// FNV-1a, 64 bit, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

MetricSpec parse_spec(const std::string& text, const std::string& origin);
MetricSpec load_spec(const std::string& path);
nlohmann::json export_spec(const WalkerMetric& w, std::optional<double> lambda, const Box& box,
                           std::optional<std::uint64_t> seed = std::nullopt);

// Runs one CLI invocation; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace walkergeo::cli
