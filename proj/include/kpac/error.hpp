#pragma once

#include <stdexcept>
#include <string>

namespace kpac {

enum class ErrorCode {
  malformed_header,
  truncated_payload,
  unsupported_magic,
  io_failure,
  shape_mismatch,
  size_too_small,
  nonpositive_param,
  zero_sum_kernel,
  kernel_larger_than_grid,
  downscale_requested,
  singular_spectrum,
  non_real_spectrum,
  invalid_scale,
  all_pixels_excluded,
  invalid_problem,
  channel_mismatch,
  empty_output,
  unsupported_config,
  invalid_config,
  bad_spatial_dims,
  tape_mismatch,
  empty_dataset,
  bad_magic,
  truncated,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::malformed_header: return "malformed-header";
    case ErrorCode::truncated_payload: return "truncated-payload";
    case ErrorCode::unsupported_magic: return "unsupported-magic";
    case ErrorCode::io_failure: return "io-failure";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::size_too_small: return "size-too-small";
    case ErrorCode::nonpositive_param: return "nonpositive-param";
    case ErrorCode::zero_sum_kernel: return "zero-sum-kernel";
    case ErrorCode::kernel_larger_than_grid: return "kernel-larger-than-grid";
    case ErrorCode::downscale_requested: return "downscale-requested";
    case ErrorCode::singular_spectrum: return "singular-spectrum";
    case ErrorCode::non_real_spectrum: return "non-real-spectrum";
    case ErrorCode::invalid_scale: return "invalid-scale";
    case ErrorCode::all_pixels_excluded: return "all-pixels-excluded";
    case ErrorCode::invalid_problem: return "invalid-problem";
    case ErrorCode::channel_mismatch: return "channel-mismatch";
    case ErrorCode::empty_output: return "empty-output";
    case ErrorCode::unsupported_config: return "unsupported-config";
    case ErrorCode::invalid_config: return "invalid-config";
    case ErrorCode::bad_spatial_dims: return "bad-spatial-dims";
    case ErrorCode::tape_mismatch: return "tape-mismatch";
    case ErrorCode::empty_dataset: return "empty-dataset";
    case ErrorCode::bad_magic: return "bad-magic";
    case ErrorCode::truncated: return "truncated";
  }
  return "unknown";
}

/// Exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kpac
