#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hfz/orch/campaign.hpp"

namespace hfz::cli {

namespace fs = std::filesystem;

// Configuration text:
//
//   file    := { line }
//   line    := blank | comment | section | entry
//   comment := ('#' | ';') text
//   section := '[' name ']'
//   entry   := key '=' value
//
// Keys before the first section header belong to section "campaign".
// Whitespace around keys and values is ignored. Lists are comma separated.
class Ini {
 public:
  static Ini parse(std::string_view text);
  // Last value wins when a key repeats.
  const std::string* get(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, std::string value);
  const std::map<std::string, std::map<std::string, std::string>>& sections() const { return sections_; }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  orch::CampaignConfig campaign;  // campaign.output is ignored; stages live under output_root
  fs::path output_root = "hfz-out";
  double triage_threshold = 0.3;
  bool triage_sanitizer = true;
  bool triage_skip_clustering = false;
  bool triage_skip_rerun = false;
  fs::path coverage_export;  // empty: <output_root>/coverage.txt

  bool operator==(const PipelineConfig&) const = default;

  fs::path run_dir() const { return output_root / "run"; }
  fs::path cmin_dir() const { return output_root / "cmin"; }
  fs::path security_dir() const { return output_root / "security"; }
  fs::path triage_dir() const { return output_root / "triage"; }
  fs::path coverage_path() const { return coverage_export.empty() ? output_root / "coverage.txt" : coverage_export; }
};

// Relative paths are resolved against `base_dir`. Unknown keys are errors.
PipelineConfig config_from_ini(std::string_view text, const fs::path& base_dir = {});
PipelineConfig load_config(const fs::path& path);
std::string config_to_ini(const PipelineConfig& config);

}  // namespace hfz::cli
