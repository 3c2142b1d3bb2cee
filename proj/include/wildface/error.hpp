#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wildface {

enum class Errc {
  parse,
  schema,
  undetectable_pose,
  head_undetectable,
  degenerate_roi,
  too_small,
  empty_stats,
  ambiguity,
  missing_asset,
  undefined_ratio,
  shape,
  degenerate_batch,
  missing_face,
  non_finite,
  training_failure,
  invalid_input,
  undefined_class,
  config,
  io,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::parse: return "parse error";
    case Errc::schema: return "schema error";
    case Errc::undetectable_pose: return "undetectable pose";
    case Errc::head_undetectable: return "head undetectable";
    case Errc::degenerate_roi: return "degenerate ROI";
    case Errc::too_small: return "image too small";
    case Errc::empty_stats: return "empty statistics input";
    case Errc::ambiguity: return "ambiguous input";
    case Errc::missing_asset: return "missing asset";
    case Errc::undefined_ratio: return "undefined ratio";
    case Errc::shape: return "shape mismatch";
    case Errc::degenerate_batch: return "degenerate batch";
    case Errc::missing_face: return "missing face features";
    case Errc::non_finite: return "non-finite value";
    case Errc::training_failure: return "training failure";
    case Errc::invalid_input: return "invalid input";
    case Errc::undefined_class: return "undefined class";
    case Errc::config: return "configuration error";
    case Errc::io: return "I/O error";
  }
  return "unknown error";
}

/// Every failure raised by the library carries one of the Errc categories so
/// callers (the CLI in particular) can map it to an exit code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace wildface
