#ifndef PROTOLANG_ERRORS_HPP
#define PROTOLANG_ERRORS_HPP

#include <stdexcept>
#include <string>

#include "protolang/source_span.hpp"

namespace protolang {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed data: dimension mismatches, invalid rates, bad configuration.
struct StructuralError : Error {
    using Error::Error;
};

// Substitution would capture a free variable under a binder.
struct CaptureError : Error {
    using Error::Error;
};

// Syntax or resolution failure in concrete text; carries a span.
struct ParseError : Error {
    SourceSpan span;
    ParseError(const std::string& msg, SourceSpan s) : Error(msg), span(s) {}
};

// The rate equations have no usable solution over the requested horizon:
// state blowup or step-size underflow during integration.
struct IllPosedError : Error {
    double time = 0.0;
    IllPosedError(const std::string& msg, double t) : Error(msg), time(t) {}
};

// Evaluation-time failures: unbound variables, non-desugared input.
struct EvalError : Error {
    using Error::Error;
};

// Rejection sampling failed to accept within the attempt cap.
struct TruncationError : Error {
    using Error::Error;
};

// Exponential equilibrate durations require a positive nominal time.
struct NonpositiveEquilibrateError : Error {
    using Error::Error;
};

// Jump count exceeded the configured cap during PDMP execution.
struct ZenoError : Error {
    using Error::Error;
};

// Concentration below the round-off tolerance was encountered.
struct NegativeConcentrationError : Error {
    using Error::Error;
};

}  // namespace protolang

#endif
