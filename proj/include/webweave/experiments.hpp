#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace webweave {

std::string_view version() noexcept;

enum class ExitCode : int { ok = 0, failure = 1, schema = 2, range = 3, resource = 4 };

inline constexpr std::string_view experiment_names[] = {"simulate", "eta-stats",  "duality-check", "converge",
                                                        "tightness", "dimension", "metric",        "cr-reflect"};

struct Violation
{
  std::string pointer; ///< JSON pointer into the config
  std::string message;
};

/// Every schema violation of a parsed config, in document order.
std::vector<Violation> validate_config(const nlohmann::json &config);

class SchemaError : public std::runtime_error
{
public:
  explicit SchemaError(std::vector<Violation> v);
  const std::vector<Violation> &violations() const noexcept { return violations_; }

private:
  std::vector<Violation> violations_;
};

/// Reads and parses a config file; unparsable JSON is a SchemaError at "".
nlohmann::json load_config(const std::filesystem::path &file);

struct RunOverrides
{
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  unsigned threads = 1;
};

/// Validates, runs and writes the result bundle (summary.json, tables,
/// plot data, run_info.json) into the output directory.  Returns the summary.
nlohmann::json run_experiment(nlohmann::json config, const RunOverrides &overrides);

/// Exit code and error document for the exception currently being handled.
std::pair<ExitCode, nlohmann::json> current_error();

/// Root of the replica seed streams of one experiment.
std::uint64_t experiment_stream(std::uint64_t seed, std::string_view experiment);

std::string sha256_hex(std::string_view data);

/// Writes to a temporary file in the same directory, then renames it over `file`.
void write_atomic(const std::filesystem::path &file, std::string_view data);

/// Decimal form with 17 significant digits.
std::string format_real(double v);

} // namespace webweave
