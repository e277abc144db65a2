#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "hfz/vm/program.hpp"

namespace hfz::concolic {

// Intraprocedural control dependence over each function's block graph.
// CALL falls through to its return point; RET and EXIT go to a virtual exit.
class ControlDependence {
 public:
  explicit ControlDependence(const vm::Program& program) : program_(program) {}

  // Branch instructions (conditional jumps and switches) that `index` is
  // transitively control dependent on inside the function entered at
  // `function_entry`. Sorted.
  const std::vector<std::size_t>& chain(std::size_t function_entry, std::size_t index);

  // Blocks (by entry index) belonging to the function, in discovery order.
  std::vector<std::size_t> function_blocks(std::size_t function_entry);

 private:
  struct Function {
    std::vector<std::size_t> blocks;                 // node -> block entry index
    std::map<std::size_t, std::size_t> node_of;      // block entry -> node
    std::vector<std::vector<std::size_t>> parents;   // node -> controlling nodes
    std::map<std::size_t, std::vector<std::size_t>> chains;
  };

  Function& analyze(std::size_t function_entry);
  std::vector<std::size_t> successors(std::size_t block_entry, bool& exits) const;
  std::size_t terminator(std::size_t block_entry) const;

  const vm::Program& program_;
  std::map<std::size_t, Function> functions_;
};

}  // namespace hfz::concolic
