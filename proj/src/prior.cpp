#include "layoutflow/prior.hpp"

#include "layoutflow/errors.hpp"

namespace layoutflow {

std::string to_string(PriorKind kind)
{
    switch (kind) {
    case PriorKind::Gaussian: return "gaussian";
    case PriorKind::Uniform: return "uniform";
    case PriorKind::Mixture: return "mixture";
    }
    return "gaussian";
}

PriorKind parse_prior_kind(std::string_view name)
{
    if (name == "gaussian") return PriorKind::Gaussian;
    if (name == "uniform") return PriorKind::Uniform;
    if (name == "mixture") return PriorKind::Mixture;
    throw FormatError("unknown prior kind '" + std::string(name) + "'");
}

FlowVector sample_prior(PriorKind kind, int nmax, int bits, Rng& rng)
{
    FlowVector x(nmax, bits);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> symmetric(-1.0, 1.0);
    const int stride = kGeometryDims + bits;
    for (int k = 0; k < nmax; ++k) {
        double* s = x.slot(k);
        for (int d = 0; d < stride; ++d) {
            const bool geometry = d < kGeometryDims;
            switch (kind) {
            case PriorKind::Gaussian:
                s[d] = normal(rng);
                break;
            case PriorKind::Uniform:
                s[d] = geometry ? unit(rng) : symmetric(rng);
                break;
            case PriorKind::Mixture:
                s[d] = geometry ? normal(rng) : symmetric(rng);
                break;
            }
        }
        x.pad_mask[k] = true;
    }
    return x;
}

} // namespace layoutflow
