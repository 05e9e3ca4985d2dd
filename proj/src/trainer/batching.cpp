#include "qpeft/trainer/batching.hpp"

#include <algorithm>
#include <set>

#include "qpeft/error.hpp"

namespace qpeft {

std::vector<Triple> build_in_batch_negatives(std::span<const Instance> batch, Rng& rng) {
  const std::size_t b = batch.size();
  if (b == 0) throw ContractError("build_in_batch_negatives: empty batch");
  std::set<std::size_t> positives;
  for (const auto& inst : batch) {
    if (!positives.insert(inst.positive).second) {
      throw ContractError("build_in_batch_negatives: duplicate positive in batch (query " + inst.query_id + ")");
    }
  }

  std::vector<std::size_t> sampled(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<std::size_t> pool;
    for (auto d : batch[i].negatives) {
      if (!positives.count(d)) pool.push_back(d);
    }
    if (pool.empty()) {
      throw ContractError("build_in_batch_negatives: no usable negative for query " + batch[i].query_id);
    }
    sampled[i] = pool[static_cast<std::size_t>(rng.uniform_int(pool.size()))];
  }

  std::vector<Triple> out;
  out.reserve(b * (2 * b - 1));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i) out.push_back({i, batch[i].positive, batch[j].positive});
    }
    for (std::size_t j = 0; j < b; ++j) out.push_back({i, batch[i].positive, sampled[j]});
  }
  return out;
}

std::vector<Triple> build_in_batch_negatives(std::span<const Instance> batch, std::uint64_t seed) {
  Rng rng(seed);
  return build_in_batch_negatives(batch, rng);
}

}  // namespace qpeft
