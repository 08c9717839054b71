#pragma once

#include <stdexcept>
#include <string>

namespace flarekit {

// Raw metadata violates an invariant (levels, gains, color matrix).
struct InvalidMetadataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Two images that must agree in size do not.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A raw-domain shift with an odd component would swap the CFA phase.
struct CfaPhaseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Registration peak too weak to trust.
struct LowConfidenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Not enough (or collinear) correspondences for a homography.
struct DegenerateGeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonInvertibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// JPEG/PNG encode or decode failure.
struct CodecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed config, sidecar or manifest input.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid pipeline or command configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace flarekit
