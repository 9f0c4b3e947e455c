#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gandistill/analysis.hpp"
#include "gandistill/classifier.hpp"
#include "gandistill/models.hpp"
#include "gandistill/training.hpp"

namespace gandistill {

/// Every configuration key of every module, fully resolved. Unknown keys are
/// rejected; a persisted RunConfig determines a single-threaded run.
class RunConfig {
 public:
  /// Defaults for all keys.
  RunConfig();

  /// Merges `file` (may be empty: no file) and then `overrides` (key, raw
  /// value) over the defaults and validates the result. Raw override values
  /// are parsed as JSON when possible and otherwise taken as strings.
  static RunConfig parse_and_validate(const std::filesystem::path& file,
                                      const std::vector<std::pair<std::string, std::string>>& overrides = {});
  static RunConfig from_json(const nlohmann::json& j);

  /// Throws ConfigError naming the first offending key.
  void validate() const;

  const nlohmann::json& values() const { return values_; }
  nlohmann::json to_json() const { return values_; }
  void set(const std::string& key, const nlohmann::json& value);

  template <typename V>
  V get(const std::string& key) const {
    return values_.at(key).get<V>();
  }

  GeneratorSpec generator_spec() const;
  DiscriminatorSpec discriminator_spec() const;
  TrainConfig train_config() const;
  ClassifierTrainConfig classifier_config() const;
  std::vector<double> class_weights() const;

  /// Writes the resolved config as config.json inside `dir`.
  void echo(const std::filesystem::path& dir) const;

  static const std::vector<std::string>& keys();

 private:
  nlohmann::json values_;
};

/// Number of residual upsampling blocks taking a 4x4 base map to `resolution`.
int blocks_for_resolution(int resolution);

/// Root for run directories: $GANDISTILL_RUN_ROOT or ./runs.
std::filesystem::path run_root();

/// Full command-line entry point (also used in-process by tests). Returns the
/// exit status: 0 ok, 2 usage/config error, 3 data error, 4 numerical abort.
int run_cli(int argc, const char* const* argv);

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

}  // namespace gandistill
