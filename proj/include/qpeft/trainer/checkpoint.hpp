#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qpeft/minilm/minilm.hpp"
#include "qpeft/qd/qd_module.hpp"
#include <json.hpp>

namespace qpeft {

// Container layout:
//   "QPEFTCKP" | u32 version | u64 manifest length | manifest JSON | payload
// The manifest holds {"kind", "config", "tensors": [{name, shape, offset}]};
// offsets are byte offsets into the payload of little-endian float32 data.
inline constexpr char kCheckpointMagic[] = "QPEFTCKP";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  MatrixXd value;
};

struct Container {
  std::string kind;
  nlohmann::json config;
  std::vector<NamedTensor> tensors;

  const MatrixXd& tensor(const std::string& name) const;
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

nlohmann::json to_json(const LMConfig& c);
LMConfig lm_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const QDConfig& c);
QDConfig qd_config_from_json(const nlohmann::json& j);

/// Values are stored as float32; loading returns the rounded values.
template <typename Scalar>
void save_lm(const std::string& path, const MiniLM<Scalar>& lm);
/// The returned model is frozen.
MiniLM<double> load_lm(const std::string& path);

/// `extra` is stored next to the QD config (training config, prompt, ...).
template <typename Scalar>
void save_qd(const std::string& path, const QDModule<Scalar>& qd, const nlohmann::json& extra = nlohmann::json::object());
/// Rebuilds the module against the frozen table it was trained with.
QDModule<double> load_qd(const std::string& path, const MatrixXd& llm_embed, nlohmann::json* extra = nullptr);

/// Rounds every value through float32, as a save/load round trip would.
template <typename Scalar>
void round_to_float(std::vector<ParamTensor<Scalar>*> params);

}  // namespace qpeft
