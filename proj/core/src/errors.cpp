#include "sspnet/errors.hpp"

namespace ssp {

const char* errc_name(errc c) {
  switch (c) {
    case errc::ok: return "ok";
    case errc::config: return "config";
    case errc::geometry: return "geometry";
    case errc::contract: return "contract";
    case errc::label: return "label";
    case errc::io: return "io";
    case errc::bad_header: return "bad_header";
    case errc::truncated: return "truncated";
    case errc::bad_version: return "bad_version";
    case errc::numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace ssp
