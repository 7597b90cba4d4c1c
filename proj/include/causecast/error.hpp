#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace causecast {

enum class ErrorCategory {
  config,
  dimension,
  catalog,
  data,
  io,
  numeric,
  rollout,
  window,
  scoring,
  undefined_metric,
  empty_input,
};

std::string_view category_name(ErrorCategory category);
// Process exit status for a failure of this category; distinct per category.
int exit_code(ErrorCategory category);

// Every failure surfaced by the library carries a category; the CLI maps it to
// a single machine-parsable line and a distinct exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace causecast
