#pragma once

#include <stdexcept>
#include <string>

namespace vitclust {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable name used in CLI diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define VITCLUST_DEFINE_ERROR(Name)                                         \
    class Name : public Error {                                             \
    public:                                                                 \
        explicit Name(const std::string& message) : Error(#Name, message) {} \
    };

// image decoding and model
VITCLUST_DEFINE_ERROR(DecodeError)
VITCLUST_DEFINE_ERROR(InvalidImage)
VITCLUST_DEFINE_ERROR(PatchError)
VITCLUST_DEFINE_ERROR(ShapeError)
VITCLUST_DEFINE_ERROR(NoHeadError)
VITCLUST_DEFINE_ERROR(MissingTensor)
VITCLUST_DEFINE_ERROR(CorruptFile)

// storage
VITCLUST_DEFINE_ERROR(IOError)
VITCLUST_DEFINE_ERROR(SampleError)
VITCLUST_DEFINE_ERROR(HeaderError)
VITCLUST_DEFINE_ERROR(AlignmentError)
VITCLUST_DEFINE_ERROR(TruncatedPayload)

// numerics
VITCLUST_DEFINE_ERROR(TooFewPoints)
VITCLUST_DEFINE_ERROR(FitError)
VITCLUST_DEFINE_ERROR(MetricError)
VITCLUST_DEFINE_ERROR(CoincidentCentroids)

// pipeline
VITCLUST_DEFINE_ERROR(DimensionError)
VITCLUST_DEFINE_ERROR(ReportError)
VITCLUST_DEFINE_ERROR(LockError)
VITCLUST_DEFINE_ERROR(ConfigError)

#undef VITCLUST_DEFINE_ERROR

}  // namespace vitclust
