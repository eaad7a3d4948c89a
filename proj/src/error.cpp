#include "pamimpute/error.hpp"

namespace pamimpute {

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::numeric: return 4;
        case ErrorKind::infeasible: return 5;
    }
    return 1;
}

std::string_view kind_name(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage: return "usage";
        case ErrorKind::data: return "data";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::infeasible: return "infeasible";
    }
    return "unknown";
}

}  // namespace pamimpute
