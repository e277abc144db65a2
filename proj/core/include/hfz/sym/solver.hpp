#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hfz/common/bytes.hpp"
#include "hfz/sym/expr.hpp"

namespace hfz::sym {

enum class Verdict : std::uint8_t { Sat, Unsat, Unknown };
std::string_view verdict_name(Verdict v);

using Model = std::map<std::uint32_t, std::uint8_t>;
using Clock = std::chrono::steady_clock;

struct SolveOptions {
  std::chrono::duration<double> per_query{10.0};
  // Hard stop shared by several queries (the run's total solver budget).
  std::optional<Clock::time_point> deadline;
  // Starting point for local search; bytes not in the model keep these values.
  std::span<const std::uint8_t> hint{};
  std::uint64_t seed = 0x5eed;
  // Largest search space (product of byte domain sizes) enumerated exhaustively.
  std::uint64_t exhaustive_limit = 1ULL << 24;
};

struct SolveResult {
  Verdict verdict = Verdict::Unknown;
  Model model;
  enum class Method : std::uint8_t { Fold, Domain, Exhaustive, LocalSearch, None } method = Method::None;
  std::uint64_t evaluations = 0;
  double seconds = 0;
};

// Decides a conjunction of width-1 expressions. Sat models satisfy every
// conjunct under `evaluate`. Unsat is reported only when proved by domain
// filtering or by exhausting the search space.
SolveResult solve(std::span<const Expr> conjuncts, const SolveOptions& opts = {});

// Splits conjunctions and byte-wise equalities into independent conjuncts.
std::vector<Expr> normalize(std::span<const Expr> conjuncts);

// `base` with model bytes written in; grows the buffer when the model refers
// past its end.
Bytes apply_model(std::span<const std::uint8_t> base, const Model& model);

bool satisfies(std::span<const Expr> conjuncts, std::span<const std::uint8_t> input);

}  // namespace hfz::sym
