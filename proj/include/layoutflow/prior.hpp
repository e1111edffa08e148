#pragma once

#include <random>
#include <string>
#include <string_view>

#include "layoutflow/layout.hpp"

namespace layoutflow {

using Rng = std::mt19937_64;

enum class PriorKind { Gaussian, Uniform, Mixture };

std::string to_string(PriorKind kind);
PriorKind parse_prior_kind(std::string_view name);

/// Draws x0 over all Nmax slots; pad_mask is all true, callers apply padding.
FlowVector sample_prior(PriorKind kind, int nmax, int bits, Rng& rng);

} // namespace layoutflow
