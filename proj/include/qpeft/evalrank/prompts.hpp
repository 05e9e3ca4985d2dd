#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace qpeft {

struct PromptPreset {
  std::string_view id;
  std::string_view text;
};

/// The five hard prompts; p4 is the default.
inline constexpr std::array<PromptPreset, 5> kPromptPresets{{
    {"p1", "please generate a question for the input passage"},
    {"p2", "please generate a Question for the input Passage"},
    {"p3", "what is the question for the input passage"},
    {"p4", "given the hints, please generate a question for the input passage"},
    {"p5", "please generate a question for the input passage based on the hints"},
}};

inline constexpr std::string_view kDefaultPrompt = "p4";

/// Throws ContractError for an unknown id.
const PromptPreset& prompt_preset(std::string_view id);

/// Texts of all presets, used to seed vocabularies.
std::vector<std::string> prompt_texts();

}  // namespace qpeft
