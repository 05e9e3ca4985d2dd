#pragma once

#include <cstdint>
#include <span>

#include "qpeft/numcore/gradcheck.hpp"
#include "qpeft/trainer/losses.hpp"

namespace qpeft {

/// Finite-difference check of d(mean batch loss)/d(theta) over every QD
/// tensor. R-variant selections are pinned by the unperturbed pass.
GradCheckReport check_qd_gradients(const MiniLM<double>& lm, QDModule<double>& qd, const TokenSeq& prompt_ids,
                                   const Corpus& corpus, std::span<const Instance> batch,
                                   std::span<const Triple> triples, std::size_t sample, std::uint64_t seed,
                                   double eps = 1e-3);

}  // namespace qpeft
