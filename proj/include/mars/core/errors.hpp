#pragma once

#include <stdexcept>
#include <string>

namespace mars {

/// Base of every error the engine throws. Callers that only need to report
/// failures can catch this one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define MARS_DEFINE_ERROR_BASE(Name, Base)              \
    class Name : public Base {                          \
    public:                                             \
        explicit Name(const std::string& what)          \
            : Base(std::string(#Name ": ") + what) {}   \
    }
#define MARS_DEFINE_ERROR(Name) MARS_DEFINE_ERROR_BASE(Name, Error)

MARS_DEFINE_ERROR(EmptyTree);
MARS_DEFINE_ERROR(InvalidScore);
MARS_DEFINE_ERROR(NoAgents);
MARS_DEFINE_ERROR(ShapeError);
MARS_DEFINE_ERROR(InvalidArgument);
MARS_DEFINE_ERROR(StateError);
MARS_DEFINE_ERROR(RoutingError);
MARS_DEFINE_ERROR(DegenerateDenominator);
MARS_DEFINE_ERROR(ConfigError);
MARS_DEFINE_ERROR(FormatError);

// Remote agent failures. The search loop treats any RemoteError as a failed
// expansion and keeps going.
MARS_DEFINE_ERROR(RemoteError);
MARS_DEFINE_ERROR_BASE(ProtocolError, RemoteError);
MARS_DEFINE_ERROR_BASE(TimeoutError, RemoteError);

#undef MARS_DEFINE_ERROR
#undef MARS_DEFINE_ERROR_BASE

}  // namespace mars
