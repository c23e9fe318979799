#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "usermodel/dataset/client.hpp"
#include "usermodel/probes/train.hpp"

namespace usermodel::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Values given on the command line; unset fields fall through to the config
// file, then the environment, then defaults.
struct FlagValues {
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> fixture;
  std::optional<std::string> model_config;
  std::optional<std::string> probes;
  std::optional<int> port;
};

struct EffectiveConfig {
  std::uint64_t seed = 0;
  std::optional<std::string> out;
  std::optional<std::string> fixture;
  std::optional<std::string> model_config;
  std::optional<std::string> probes;
  int port = 8080;
  std::string host = "127.0.0.1";
  std::size_t workers = 4;
  dataset::ClientConfig client;
  std::optional<std::pair<int, int>> layer_window;
  double strength = 8.0;
  std::string steering_source = "control-probe";
  std::string pin_zero = "negate";
  std::size_t max_new_tokens = 64;
  probes::TrainConfig train;
  bool credential_present = false;

  // Secrets appear only as "****".
  nlohmann::json to_json() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

// Precedence: flags > config file > environment > defaults.
EffectiveConfig resolve_config(const FlagValues& flags, const std::optional<nlohmann::json>& file,
                               const EnvLookup& env);

EnvLookup process_env();

// Entry point shared by the executable and the tests.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace usermodel::cli
