#pragma once

#include <string>
#include <utility>

#include "nrt/errors.hpp"
#include "nrt/matrix.hpp"

namespace nrt {

// One learnable array plus its gradient accumulator. Backward passes add
// into grad (never overwrite) so parameters shared across heads collect
// every contribution; the optimizer resets grad after it consumes it.
struct ParamSlot {
  Matrix value;
  Matrix grad;
  std::string name;

  ParamSlot() = default;
  ParamSlot(std::string n, std::size_t rows, std::size_t cols)
      : value(rows, cols), grad(rows, cols), name(std::move(n)) {}

  void reset_grad() { grad.zero(); }

  void check_shapes() const {
    if (!value.same_shape(grad)) {
      throw DimensionError("param " + name + ": grad " + grad.shape_str() +
                           " does not match value " + value.shape_str());
    }
  }
};

}  // namespace nrt
