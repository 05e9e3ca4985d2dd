#include "qpeft/trainer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "qpeft/error.hpp"

namespace qpeft {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

const MatrixXd& Container::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw ParseError("checkpoint: missing tensor " + name);
}

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos, const std::string& path) {
  if (pos + sizeof(T) > in.size()) throw ParseError(path + ": truncated checkpoint");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void write_container(const std::string& path, const Container& c) {
  nlohmann::json manifest;
  manifest["kind"] = c.kind;
  manifest["config"] = c.config;
  manifest["tensors"] = nlohmann::json::array();
  std::string payload;
  for (const auto& t : c.tensors) {
    manifest["tensors"].push_back(
        {{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}}, {"offset", payload.size()}});
    for (Eigen::Index i = 0; i < t.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.value.cols(); ++j) put(payload, static_cast<float>(t.value(i, j)));
    }
  }
  const std::string text = manifest.dump();
  std::string out(kCheckpointMagic, 8);
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  out += payload;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("write failed: " + path);
}

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < 8 || in.compare(0, 8, kCheckpointMagic, 8) != 0) throw ParseError(path + ": bad magic");
  std::size_t pos = 8;
  const auto version = get<std::uint32_t>(in, pos, path);
  if (version != kCheckpointVersion) throw ParseError(path + ": unsupported version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in, pos, path);
  if (pos + len > in.size()) throw ParseError(path + ": truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in.substr(pos, len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": bad manifest: " + e.what());
  }
  pos += len;
  const std::size_t base = pos;

  Container c;
  try {
    c.kind = manifest.at("kind").get<std::string>();
    c.config = manifest.at("config");
    for (const auto& t : manifest.at("tensors")) {
      const auto rows = t.at("shape").at(0).get<Eigen::Index>();
      const auto cols = t.at("shape").at(1).get<Eigen::Index>();
      std::size_t at = base + t.at("offset").get<std::size_t>();
      MatrixXd m(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = get<float>(in, at, path);
      }
      c.tensors.push_back({t.at("name").get<std::string>(), std::move(m)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": bad manifest: " + e.what());
  }
  return c;
}

nlohmann::json to_json(const LMConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"model_dim", c.model_dim}, {"layers", c.layers}, {"heads", c.heads},
          {"ffn_dim", c.ffn_dim},       {"max_seq_len", c.max_seq_len}, {"seed", c.seed}};
}

LMConfig lm_config_from_json(const nlohmann::json& j) {
  LMConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.model_dim = j.at("model_dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

nlohmann::json to_json(const QDConfig& c) {
  return {{"variant", to_string(c.variant)}, {"k", c.k}, {"heads", c.heads}, {"mlp_layers", c.mlp_layers},
          {"model_dim", c.model_dim},        {"seed", c.seed}};
}

QDConfig qd_config_from_json(const nlohmann::json& j) {
  QDConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.k = j.at("k").get<int>();
  c.heads = j.at("heads").get<int>();
  c.mlp_layers = j.at("mlp_layers").get<int>();
  c.model_dim = j.at("model_dim").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

namespace {

template <typename Scalar>
std::vector<NamedTensor> collect(const std::vector<const ParamTensor<Scalar>*>& params) {
  std::vector<NamedTensor> out;
  for (const auto* p : params) out.push_back({p->name, p->value.template cast<double>()});
  return out;
}

template <typename Scalar>
void restore(const std::vector<ParamTensor<Scalar>*>& params, const Container& c, const std::string& path) {
  if (params.size() != c.tensors.size()) throw ParseError(path + ": tensor count does not match config");
  for (auto* p : params) {
    const auto& v = c.tensor(p->name);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
      throw ParseError(path + ": shape mismatch for " + p->name);
    }
    p->value = v.template cast<Scalar>();
  }
}

}  // namespace

template <typename Scalar>
void save_lm(const std::string& path, const MiniLM<Scalar>& lm) {
  write_container(path, {"lm", to_json(lm.config()), collect(lm.parameters())});
}

MiniLM<double> load_lm(const std::string& path) {
  const auto c = read_container(path);
  if (c.kind != "lm") throw ParseError(path + ": not an LM checkpoint");
  MiniLM<double> lm(lm_config_from_json(c.config));
  restore(lm.parameters(), c, path);
  lm.freeze();
  return lm;
}

template <typename Scalar>
void save_qd(const std::string& path, const QDModule<Scalar>& qd, const nlohmann::json& extra) {
  nlohmann::json cfg = {{"qd", to_json(qd.config())}, {"extra", extra}};
  write_container(path, {"qd", cfg, collect(qd.parameters())});
}

QDModule<double> load_qd(const std::string& path, const MatrixXd& llm_embed, nlohmann::json* extra) {
  const auto c = read_container(path);
  if (c.kind != "qd") throw ParseError(path + ": not a QD checkpoint");
  QDModule<double> qd(qd_config_from_json(c.config.at("qd")), llm_embed);
  restore(qd.parameters(), c, path);
  if (extra) *extra = c.config.value("extra", nlohmann::json::object());
  return qd;
}

template <typename Scalar>
void round_to_float(std::vector<ParamTensor<Scalar>*> params) {
  for (auto* p : params) p->value = p->value.template cast<float>().template cast<Scalar>();
}

template void save_lm(const std::string&, const MiniLM<double>&);
template void save_lm(const std::string&, const MiniLM<float>&);
template void save_qd(const std::string&, const QDModule<double>&, const nlohmann::json&);
template void save_qd(const std::string&, const QDModule<float>&, const nlohmann::json&);
template void round_to_float(std::vector<ParamTensor<double>*>);
template void round_to_float(std::vector<ParamTensor<float>*>);

}  // namespace qpeft
