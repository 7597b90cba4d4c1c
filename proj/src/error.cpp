#include "causecast/error.hpp"

namespace causecast {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::dimension: return "dimension";
    case ErrorCategory::catalog: return "catalog";
    case ErrorCategory::data: return "data";
    case ErrorCategory::io: return "io";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::rollout: return "rollout";
    case ErrorCategory::window: return "window";
    case ErrorCategory::scoring: return "scoring";
    case ErrorCategory::undefined_metric: return "undefined_metric";
    case ErrorCategory::empty_input: return "empty_input";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::dimension: return 3;
    case ErrorCategory::catalog: return 4;
    case ErrorCategory::data: return 5;
    case ErrorCategory::io: return 6;
    case ErrorCategory::numeric: return 7;
    case ErrorCategory::rollout: return 8;
    case ErrorCategory::window: return 9;
    case ErrorCategory::scoring: return 10;
    case ErrorCategory::undefined_metric: return 11;
    case ErrorCategory::empty_input: return 12;
  }
  return 70;
}

}  // namespace causecast
