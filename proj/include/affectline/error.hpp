#pragma once

#include <stdexcept>
#include <string>

namespace affectline {

enum class ErrorKind {
  // audio_io
  unreadable_file,
  unsupported_encoding,
  empty_audio,
  malformed_name,
  out_of_scope_class,
  empty_result,
  // nn
  shape_mismatch,
  // train_eval
  invalid_split,
  divergence,
  config_mismatch,
  empty_input,
  bad_magic,
  version_mismatch,
  truncated,
  // session
  manifest_schema,
  manifest_row,
  empty_session,
  // cli / plumbing
  config,
  io,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace affectline
