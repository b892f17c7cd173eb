#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cosinor {

enum class Errc {
    kInvalidArgument,
    kDegenerateAmplitude,
    kResultantDegenerate,
    kSingularInformation,
    kNotEquispaced,
    kInsufficientData,
    kRankDeficient,
    kTooFewSamples,
    kSingularBlock,
    kNonPositiveVariance,
    kNoUsableGenes,
    kZeroCircularVariance,
    kDegenerateCovariate,
    kEmptyAfterFilter,
    kDataFormat,
};

std::string_view errc_name(Errc code) noexcept;

// Numerical failures (as opposed to malformed input) map to a distinct CLI exit code.
bool is_numerical(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace cosinor
