#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hfz::orch {

enum class Origin : std::uint8_t { Fuzzer, Concolic, Initial };
std::string_view origin_name(Origin o);

struct SeedRecord {
  std::string path;  // file name, unique within a session
  std::uint64_t bytes_len = 1;
  // Logical creation time: total fuzzer executions when the seed appeared.
  // Keeps scheduling independent of wall-clock jitter.
  std::uint64_t t_creation = 0;
  Origin origin = Origin::Fuzzer;
  bool new_cov = false;
  bool new_function = false;
  std::uint64_t features_gain = 0;
  std::optional<std::uint64_t> afl_id;
};

// Queue file names look like `id:000042,execs:1200,+cov`.
std::optional<std::uint64_t> parse_afl_id(std::string_view name);
std::vector<std::string> name_tags(std::string_view name);
bool has_tag(std::string_view name, std::string_view tag);

// Strict weak orders, best first.
bool libfuzzer_before(const SeedRecord& a, const SeedRecord& b);
bool afl_before(const SeedRecord& a, const SeedRecord& b);

std::vector<SeedRecord> rank_seeds_libfuzzer_style(std::vector<SeedRecord> records);
std::vector<SeedRecord> rank_seeds_afl_style(std::vector<SeedRecord> records);

}  // namespace hfz::orch
