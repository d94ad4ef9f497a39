#include "ptt/error.hpp"

namespace ptt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Contract: return "contract violation";
    case ErrorKind::EmptyAttentionRow: return "empty attention row";
    case ErrorKind::Numerical: return "numerical failure";
    case ErrorKind::DegenerateGeometry: return "degenerate geometry";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Load: return "load error";
  }
  return "error";
}

}  // namespace ptt
