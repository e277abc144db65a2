#include "hfz/cli/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>
#include <type_traits>

#include "hfz/common/fs.hpp"

namespace hfz::cli {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(const std::string& key, std::string_view v) {
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) throw ConfigError("bad value for " + key + ": '" + std::string(v) + "'");
  return out;
}

bool parse_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError("bad boolean for " + key + ": '" + std::string(v) + "'");
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

fs::path resolve(const fs::path& base, std::string_view v) {
  fs::path p{std::string(v)};
  return p.is_relative() && !base.empty() ? base / p : p;
}

struct Field {
  std::string section, key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, std::string_view, const fs::path&)> set;
};

template <typename T, typename Access>
Field number(std::string section, std::string key, Access access) {
  const std::string full = section + "." + key;
  return {section, key, [access](const PipelineConfig& c) { return format_number(access(const_cast<PipelineConfig&>(c))); },
          [access, full](PipelineConfig& c, std::string_view v, const fs::path&) { access(c) = parse_number<T>(full, v); }};
}

template <typename Access>
Field boolean(std::string section, std::string key, Access access) {
  const std::string full = section + "." + key;
  return {section, key,
          [access](const PipelineConfig& c) { return std::string(access(const_cast<PipelineConfig&>(c)) ? "true" : "false"); },
          [access, full](PipelineConfig& c, std::string_view v, const fs::path&) { access(c) = parse_bool(full, v); }};
}

template <typename Access>
Field path(std::string section, std::string key, Access access) {
  return {section, key, [access](const PipelineConfig& c) { return access(const_cast<PipelineConfig&>(c)).string(); },
          [access](PipelineConfig& c, std::string_view v, const fs::path& base) {
            access(c) = v.empty() ? fs::path{} : resolve(base, v);
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(path("campaign", "target", [](PipelineConfig& c) -> fs::path& { return c.campaign.target; }));
    f.push_back(path("campaign", "output", [](PipelineConfig& c) -> fs::path& { return c.output_root; }));
    f.push_back({"campaign", "corpus",
                 [](const PipelineConfig& c) {
                   std::string s;
                   for (const auto& d : c.campaign.corpus_dirs) s += (s.empty() ? "" : ", ") + d.string();
                   return s;
                 },
                 [](PipelineConfig& c, std::string_view v, const fs::path& base) {
                   c.campaign.corpus_dirs.clear();
                   while (!v.empty()) {
                     const auto comma = v.find(',');
                     const auto item = trim(v.substr(0, comma));
                     if (!item.empty()) c.campaign.corpus_dirs.push_back(resolve(base, item));
                     if (comma == std::string_view::npos) break;
                     v.remove_prefix(comma + 1);
                   }
                 }});
    f.push_back({"campaign", "mode", [](const PipelineConfig& c) { return std::string(orch::mode_name(c.campaign.mode)); },
                 [](PipelineConfig& c, std::string_view v, const fs::path&) {
                   const auto m = orch::mode_from_name(v);
                   if (!m) throw ConfigError("bad value for campaign.mode: '" + std::string(v) + "'");
                   c.campaign.mode = *m;
                 }});
    f.push_back(number<unsigned>("campaign", "fuzzer_workers", [](PipelineConfig& c) -> auto& { return c.campaign.fuzzer_workers; }));
    f.push_back(number<unsigned>("campaign", "concolic_workers", [](PipelineConfig& c) -> auto& { return c.campaign.concolic_workers; }));
    f.push_back(number<std::size_t>("campaign", "sym_pointer_period", [](PipelineConfig& c) -> auto& { return c.campaign.sym_pointer_period; }));
    f.push_back(number<std::uint64_t>("campaign", "seed", [](PipelineConfig& c) -> auto& { return c.campaign.seed; }));
    f.push_back(number<std::uint64_t>("campaign", "step_budget", [](PipelineConfig& c) -> auto& { return c.campaign.step_budget; }));
    f.push_back(number<std::uint64_t>("campaign", "execs_per_epoch", [](PipelineConfig& c) -> auto& { return c.campaign.execs_per_epoch; }));
    f.push_back(number<double>("campaign", "poll_interval", [](PipelineConfig& c) -> auto& { return c.campaign.poll_interval; }));
    f.push_back(number<unsigned>("campaign", "jobs", [](PipelineConfig& c) -> auto& { return c.campaign.jobs; }));

    f.push_back(number<double>("budget", "per_query_seconds", [](PipelineConfig& c) -> auto& { return c.campaign.budget.per_query_seconds; }));
    f.push_back(number<double>("budget", "total_seconds", [](PipelineConfig& c) -> auto& { return c.campaign.budget.total_seconds; }));
    f.push_back(number<double>("budget", "run_seconds", [](PipelineConfig& c) -> auto& { return c.campaign.budget.run_seconds; }));
    f.push_back(number<std::size_t>("budget", "queue_threshold", [](PipelineConfig& c) -> auto& { return c.campaign.budget.queue_threshold; }));
    f.push_back(number<std::uint64_t>("budget", "memory_bytes", [](PipelineConfig& c) -> auto& { return c.campaign.budget.memory_bytes; }));
    f.push_back(number<unsigned>("budget", "solver_threads", [](PipelineConfig& c) -> auto& { return c.campaign.budget.solver_threads; }));

    f.push_back(number<std::size_t>("address", "per_address", [](PipelineConfig& c) -> auto& { return c.campaign.address.per_address; }));
    f.push_back(number<std::size_t>("address", "per_run", [](PipelineConfig& c) -> auto& { return c.campaign.address.per_run; }));
    f.push_back(number<double>("address", "query_seconds", [](PipelineConfig& c) -> auto& { return c.campaign.address.query_seconds; }));

    f.push_back(number<std::size_t>("stop", "max_crashes", [](PipelineConfig& c) -> auto& { return c.campaign.stop.max_crashes; }));
    f.push_back(number<double>("stop", "session_timeout", [](PipelineConfig& c) -> auto& { return c.campaign.stop.session_timeout; }));
    f.push_back(number<double>("stop", "exit_on_time", [](PipelineConfig& c) -> auto& { return c.campaign.stop.exit_on_time; }));
    f.push_back(number<std::uint64_t>("stop", "max_execs", [](PipelineConfig& c) -> auto& { return c.campaign.stop.max_execs; }));
    f.push_back(number<std::size_t>("stop", "max_epochs", [](PipelineConfig& c) -> auto& { return c.campaign.stop.max_epochs; }));

    f.push_back(number<std::size_t>("security", "sample", [](PipelineConfig& c) -> auto& { return c.campaign.security_sample; }));

    f.push_back(number<double>("triage", "threshold", [](PipelineConfig& c) -> auto& { return c.triage_threshold; }));
    f.push_back(boolean("triage", "sanitizer", [](PipelineConfig& c) -> auto& { return c.triage_sanitizer; }));
    f.push_back(boolean("triage", "skip_clustering", [](PipelineConfig& c) -> auto& { return c.triage_skip_clustering; }));
    f.push_back(boolean("triage", "skip_rerun", [](PipelineConfig& c) -> auto& { return c.triage_skip_rerun; }));

    f.push_back(path("coverage", "export", [](PipelineConfig& c) -> fs::path& { return c.coverage_export; }));
    return f;
  }();
  return table;
}

}  // namespace

Ini Ini::parse(std::string_view text) {
  Ini ini;
  std::string section = "campaign";
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    ini.set(section, std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return ini;
}

const std::string* Ini::get(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

void Ini::set(const std::string& section, const std::string& key, std::string value) {
  sections_[section][key] = std::move(value);
}

PipelineConfig config_from_ini(std::string_view text, const fs::path& base_dir) {
  const auto ini = Ini::parse(text);
  PipelineConfig c;
  for (const auto& [section, entries] : ini.sections()) {
    for (const auto& [key, value] : entries) {
      const auto& table = fields();
      const auto it = std::find_if(table.begin(), table.end(),
                                   [&](const Field& f) { return f.section == section && f.key == key; });
      if (it == table.end()) throw ConfigError("unknown setting " + section + "." + key);
      it->set(c, value, base_dir);
    }
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = fsx::read_text(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  return config_from_ini(text, path.parent_path());
}

std::string config_to_ini(const PipelineConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      out += (out.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace hfz::cli
