#include "hfz/common/fs.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "hfz/common/hash.hpp"

namespace hfz::fsx {

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

namespace {

std::atomic<std::uint64_t> g_tmp_counter{0};

fs::path temp_sibling(const fs::path& path) {
  const auto tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
  return path.parent_path() /
         ("." + path.filename().string() + ".tmp" + std::to_string(tid) + "." +
          std::to_string(g_tmp_counter++));
}

}  // namespace

void write_atomic(const fs::path& path, std::string_view data) {
  const auto tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_atomic(const fs::path& path, const Bytes& data) {
  write_atomic(path, std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
}

std::vector<fs::path> list_files(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (!entry.is_regular_file(ec)) continue;
    const auto name = entry.path().filename().string();
    if (name.empty() || name[0] == '.') continue;
    out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return out;
}

std::string content_name(const Bytes& data) { return to_hex(fnv1a(data)); }

}  // namespace hfz::fsx
