#pragma once

#include <stdexcept>
#include <string>

namespace mbfte {

enum class Errc {
  invalid_argument,
  provider_failure,
  token_not_in_support,
  no_alternate,
  no_progress,
  message_too_long,
  bad_tag,
  bad_length,
  untokenizable,
  no_valid_parse,
  over_limit,
  rate_limited,
  too_short,
  exhausted_retries,
  io,
};

const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mbfte
