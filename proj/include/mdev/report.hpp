#pragma once

#include "mdev/harness.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mdev {

/// 17 significant digits, so every double round-trips; "nan"/"inf"/"-inf"
/// for non-finite values.
std::string format_double(double v);

std::string tail_csv(const ExperimentResult& r);
std::string ks_csv(const ExperimentResult& r);
std::string mdp_csv(const ExperimentResult& r);
std::string conc_csv(const ExperimentResult& r);

/// Full result including a timing-free manifest block (spec echo, seeds,
/// version), so identical runs serialize to identical bytes.
nlohmann::json result_to_json(const ExperimentResult& r);

std::string sha256_hex(const std::string& bytes);

/// Writes output files under a root directory, recording a digest for each,
/// and finally a manifest.json listing them plus timing.
class RunManifest {
 public:
  RunManifest(std::filesystem::path root, std::string subcommand, nlohmann::json config,
              std::uint64_t seed);

  void write(const std::string& name, const std::string& content);
  void set_timing(const std::string& key, double seconds) { timing_[key] = seconds; }
  /// Writes manifest.json; call after every other output.
  void finish();

  const std::filesystem::path& root() const { return root_; }

 private:
  struct Entry {
    std::string name;
    std::string sha256;
    std::size_t bytes;
  };
  std::filesystem::path root_;
  std::string subcommand_;
  nlohmann::json config_;
  std::uint64_t seed_;
  std::map<std::string, double> timing_;
  std::vector<Entry> files_;
};

}  // namespace mdev
