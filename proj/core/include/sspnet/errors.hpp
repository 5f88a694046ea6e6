#pragma once

#include <stdexcept>
#include <string>

namespace ssp {

// Failure categories. The CLI maps each category to a distinct exit code,
// so library code should pick the most specific one that applies.
enum class errc {
  ok = 0,
  config,        // invalid configuration (divisibility, unknown keys, bad enum)
  geometry,      // sparse-view geometry violation (r * D_i != D_s etc.)
  contract,      // op contract violation (shape mismatch, bad axis)
  label,         // task label out of range
  io,            // generic file I/O failure
  bad_header,    // magic bytes or header layout wrong
  truncated,     // payload shorter than the header promises
  bad_version,   // on-disk format version not supported
  numeric,       // non-finite values where finite ones are required
};

const char* errc_name(errc c);

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

inline void check(bool ok, errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace ssp
