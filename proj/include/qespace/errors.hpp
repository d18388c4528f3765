#pragma once

#include <stdexcept>
#include <string>

namespace qe {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BackendMismatch : Error {
    using Error::Error;
};
struct OutOfSupport : Error {
    using Error::Error;
};
struct DimensionOverflow : Error {
    using Error::Error;
};
struct NegativeTime : Error {
    using Error::Error;
};
struct NonzeroTrace : Error {
    using Error::Error;
};
struct EmptyBall : Error {
    using Error::Error;
};
struct StencilOverflow : Error {
    using Error::Error;
};
struct PaddingInsufficient : Error {
    using Error::Error;
};
struct NotElliptic : Error {
    using Error::Error;
};
struct GridResampling : Error {
    using Error::Error;
};
struct LatticeOffGrid : Error {
    using Error::Error;
};
struct ResolutionTooCoarse : Error {
    using Error::Error;
};
struct WindowTooSmall : Error {
    using Error::Error;
};
struct EigFailure : Error {
    using Error::Error;
};
struct QuadratureOverflow : Error {
    using Error::Error;
};
struct ModelMismatch : Error {
    using Error::Error;
};
struct ResidualTooLarge : Error {
    using Error::Error;
};
struct InsufficientRange : Error {
    using Error::Error;
};
struct ConfigInvalid : Error {
    using Error::Error;
};
struct UnknownTable : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct SingularMatrix : Error {
    using Error::Error;
};

/// Iterative norm estimation that stopped before reaching tolerance.
/// Carries the best estimate found so far.
struct NoConvergence : Error {
    double best;
    NoConvergence(const std::string& msg, double best_value)
        : Error(msg), best(best_value) {}
};

}  // namespace qe
