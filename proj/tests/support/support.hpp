#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <string_view>
#include <unistd.h>

#include "hfz/vm/parser.hpp"

namespace hfz::test {

namespace fs = std::filesystem;

inline fs::path source_dir() { return HFZ_SOURCE_DIR; }
inline fs::path target_path(std::string_view name) { return source_dir() / "targets" / name; }
inline fs::path data_path(std::string_view name) { return source_dir() / "tests" / "data" / name; }

inline vm::Program asm_program(std::string_view text) { return vm::parse_program(text, "t.asm"); }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view tag = "hfz") {
    static std::atomic<unsigned> counter{0};
    path_ = fs::temp_directory_path() /
            (std::string(tag) + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(std::string_view name) const { return path_ / name; }

 private:
  fs::path path_;
};

}  // namespace hfz::test
