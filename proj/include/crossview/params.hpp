#pragma once

#include <string>
#include <vector>

#include "crossview/autograd.hpp"

namespace crossview {

// Initialization family of a trainable tensor:
//   ConvKernel  - fan-in scaled uniform
//   DenseWeight - truncated normal, std 0.02
//   Bias        - zeros (also layer-norm biases)
//   LnGain      - ones
enum class ParamKind { ConvKernel, DenseWeight, Bias, LnGain };

template <typename T>
struct NamedParam {
    std::string name;
    Var<T> var;
    ParamKind kind;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

} // namespace crossview
