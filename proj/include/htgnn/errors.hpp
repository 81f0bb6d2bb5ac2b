#pragma once

#include <stdexcept>
#include <string>

namespace htgnn {

// Base for all framework errors so callers can catch one type at the CLI
// boundary and map to exit codes.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define HTGNN_DEFINE_ERROR(Name)                                   \
  struct Name : Error {                                            \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

// Graph construction
HTGNN_DEFINE_ERROR(UnknownSubtype);
HTGNN_DEFINE_ERROR(DanglingEdge);
HTGNN_DEFINE_ERROR(EmptyTypePartition);

// Encoders / numerics
HTGNN_DEFINE_ERROR(NonFiniteInput);
HTGNN_DEFINE_ERROR(WindowTooShort);
HTGNN_DEFINE_ERROR(ShapeMismatch);

// Message passing
HTGNN_DEFINE_ERROR(EmptyNeighborhood);
HTGNN_DEFINE_ERROR(MissingParams);

// Model assembly
HTGNN_DEFINE_ERROR(InvalidVariant);

// Data generation / pipeline
HTGNN_DEFINE_ERROR(EmptyGrid);
HTGNN_DEFINE_ERROR(ZeroPowerSignal);
HTGNN_DEFINE_ERROR(SeriesTooShort);
HTGNN_DEFINE_ERROR(GroupTooSmall);

// Training / metrics
HTGNN_DEFINE_ERROR(DegenerateRange);
HTGNN_DEFINE_ERROR(NearZeroTruth);
HTGNN_DEFINE_ERROR(EmptyCategory);
HTGNN_DEFINE_ERROR(DivergedLoss);

// Config / IO
HTGNN_DEFINE_ERROR(ConfigError);
HTGNN_DEFINE_ERROR(IoError);

#undef HTGNN_DEFINE_ERROR

}  // namespace htgnn
