#pragma once

#include <cstdint>
#include <string>

#include "hetsr/tensor.hpp"

namespace hetsr::detail {

void count_macs(std::int64_t n);

inline void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw DTypeError(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) + " vs " +
                     dtype_name(b.dtype()) + ")");
  }
}

inline void require_rank(const Tensor& x, int rank, const char* op) {
  if (x.ndim() != rank) {
    throw ShapeError(std::string(op) + ": expected a rank-" + std::to_string(rank) +
                     " tensor, got shape " + shape_str(x.shape()));
  }
}

}  // namespace hetsr::detail
