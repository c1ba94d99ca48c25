#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ovd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingData = 3;
inline constexpr int kExitNumeric = 4;
inline constexpr int kExitMismatch = 5;
inline constexpr int kExitGradcheck = 6;

struct EvalFlags {
  std::string config_path;  // empty: use <data>/config.json when present, else defaults
  std::optional<std::string> filter;
  std::optional<double> rho;
  std::optional<int> priors;
  std::vector<std::string> postprocess;  // empty: the config's mode
  std::optional<std::uint64_t> seed;
};

// Writes train.json, eval.json, bank.json, cache.json and the resolved
// config.json; nothing is written when the config is invalid.
int cmd_gen(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed = {});

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, std::optional<std::uint64_t> seed = {});

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& out_dir, const EvalFlags& flags = {});

int cmd_ablate(const std::string& config_path, const std::string& suite,
               const std::string& out_dir, std::optional<std::uint64_t> seed = {});

int cmd_gradcheck(int trials, double tolerance);

}  // namespace ovd::cli
