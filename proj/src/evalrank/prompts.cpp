#include "qpeft/evalrank/prompts.hpp"

#include "qpeft/error.hpp"

namespace qpeft {

const PromptPreset& prompt_preset(std::string_view id) {
  for (const auto& p : kPromptPresets) {
    if (p.id == id) return p;
  }
  throw ContractError("unknown prompt preset '" + std::string(id) + "' (expected p1..p5)");
}

std::vector<std::string> prompt_texts() {
  std::vector<std::string> out;
  for (const auto& p : kPromptPresets) out.emplace_back(p.text);
  return out;
}

}  // namespace qpeft
