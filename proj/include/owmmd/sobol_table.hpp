#pragma once

#include <array>
#include <cstdint>

namespace owmmd::detail {

inline constexpr int kSobolMaxDimension = 1024;
inline constexpr int kSobolMaxDegree = 13;

struct SobolDirection {
    int degree;
    std::uint32_t polynomial;
    std::array<std::uint32_t, kSobolMaxDegree> initial;
};

extern const std::array<SobolDirection, kSobolMaxDimension> kSobolTable;

}  // namespace owmmd::detail
