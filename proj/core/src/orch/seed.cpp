#include "hfz/orch/seed.hpp"

#include <algorithm>
#include <charconv>
#include <tuple>

namespace hfz::orch {

std::string_view origin_name(Origin o) {
  switch (o) {
    case Origin::Fuzzer: return "fuzzer";
    case Origin::Concolic: return "concolic";
    case Origin::Initial: return "initial";
  }
  return "?";
}

std::vector<std::string> name_tags(std::string_view name) {
  std::vector<std::string> tags;
  while (!name.empty()) {
    const auto comma = name.find(',');
    tags.emplace_back(name.substr(0, comma));
    if (comma == std::string_view::npos) break;
    name.remove_prefix(comma + 1);
  }
  return tags;
}

bool has_tag(std::string_view name, std::string_view tag) {
  const auto tags = name_tags(name);
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

std::optional<std::uint64_t> parse_afl_id(std::string_view name) {
  if (!name.starts_with("id:")) return std::nullopt;
  name.remove_prefix(3);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(name.data(), name.data() + name.size(), v);
  if (ec != std::errc{} || end == name.data()) return std::nullopt;
  if (end != name.data() + name.size() && *end != ',') return std::nullopt;
  return v;
}

namespace {

__extension__ typedef unsigned __int128 u128;

// t_creation / bytes_len compared without division: a.t * b.len vs b.t * a.len.
int compare_ratio(const SeedRecord& a, const SeedRecord& b) {
  const auto lhs = static_cast<u128>(a.t_creation) * b.bytes_len;
  const auto rhs = static_cast<u128>(b.t_creation) * a.bytes_len;
  return lhs < rhs ? -1 : lhs > rhs ? 1 : 0;
}

}  // namespace

bool libfuzzer_before(const SeedRecord& a, const SeedRecord& b) {
  const auto ka = std::make_tuple(a.new_function, a.new_cov, a.features_gain > 0);
  const auto kb = std::make_tuple(b.new_function, b.new_cov, b.features_gain > 0);
  if (ka != kb) return ka > kb;
  if (const int r = compare_ratio(a, b); r != 0) return r > 0;
  return a.path < b.path;
}

bool afl_before(const SeedRecord& a, const SeedRecord& b) {
  const auto id = [](const SeedRecord& s) { return s.afl_id.value_or(0); };
  const auto ka = std::make_tuple(a.new_cov, a.origin == Origin::Initial);
  const auto kb = std::make_tuple(b.new_cov, b.origin == Origin::Initial);
  if (ka != kb) return ka > kb;
  if (a.bytes_len != b.bytes_len) return a.bytes_len < b.bytes_len;
  if (id(a) != id(b)) return id(a) > id(b);
  return a.path < b.path;
}

std::vector<SeedRecord> rank_seeds_libfuzzer_style(std::vector<SeedRecord> records) {
  std::sort(records.begin(), records.end(), libfuzzer_before);
  return records;
}

std::vector<SeedRecord> rank_seeds_afl_style(std::vector<SeedRecord> records) {
  std::sort(records.begin(), records.end(), afl_before);
  return records;
}

}  // namespace hfz::orch
