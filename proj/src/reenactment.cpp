#include "headswap/reenactment.hpp"

#include <stdexcept>

namespace headswap {

FitResult transfer_params(const TransferSpec& spec)
{
    const FitResult& src = spec.source_fit;
    if (spec.target_identity.size() != src.identity.size())
        throw std::invalid_argument("dimension mismatch: target identity vs source fit");
    if (src.expressions.rows() != src.num_frames())
        throw std::invalid_argument("dimension mismatch: source fit frames");

    FitResult out;
    out.identity = spec.target_identity;
    out.expressions = src.expressions;
    out.cameras = src.cameras;
    // Both policies keep the source camera; `none` only documents that no
    // landmark-style rescaling is applied.
    return out;
}

} // namespace headswap
