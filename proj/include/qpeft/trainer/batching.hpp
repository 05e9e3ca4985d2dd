#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qpeft/numcore/rng.hpp"
#include "qpeft/textdata/collections.hpp"

namespace qpeft {

/// <query, positive, negative>. `query` indexes the batch; documents are
/// corpus indices.
struct Triple {
  std::size_t query = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  bool operator==(const Triple&) const = default;
};

/// Expands a batch of b instances into b(2b-1) triples. Each instance draws
/// one negative from its own pool with every batch positive removed; query i
/// is then paired with the other b-1 positives followed by all b sampled
/// negatives, in batch order.
/// Throws ContractError on an empty batch, duplicate positives, or a pool
/// left empty after filtering.
std::vector<Triple> build_in_batch_negatives(std::span<const Instance> batch, Rng& rng);
std::vector<Triple> build_in_batch_negatives(std::span<const Instance> batch, std::uint64_t seed);

}  // namespace qpeft
