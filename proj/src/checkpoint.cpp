#include "ossem/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ossem {

using nlohmann::json;

uint32_t crc32(const void* data, size_t len, uint32_t seed) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t c = seed ^ 0xFFFFFFFFu;
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

namespace {

constexpr char kMagic[4] = {'O', 'S', 'S', 'M'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(std::string("checkpoint: truncated ") + what);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint64_t get_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw std::runtime_error(std::string("checkpoint: truncated ") + what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

json model_to_json(const ModelConfig& c) {
  return json{{"freq_bins", c.freq_bins},
              {"model_dim", c.model_dim},
              {"blocks", c.blocks},
              {"heads", c.heads},
              {"conv_kernel", c.conv_kernel},
              {"ssm_hidden1", c.ssm_hidden1},
              {"ssm_hidden2", c.ssm_hidden2},
              {"placement", placement_to_string(c.placement)},
              {"causal", c.causal}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  c.freq_bins = j.at("freq_bins").get<int>();
  c.model_dim = j.at("model_dim").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.heads = j.at("heads").get<int>();
  c.conv_kernel = j.at("conv_kernel").get<int>();
  c.ssm_hidden1 = j.at("ssm_hidden1").get<int>();
  c.ssm_hidden2 = j.at("ssm_hidden2").get<int>();
  c.placement = placement_from_string(j.at("placement").get<std::string>());
  c.causal = j.at("causal").get<bool>();
  return c;
}

}  // namespace

void save_checkpoint(std::ostream& os, const CheckpointData& ckpt) {
  json sections = json::array();
  std::vector<std::span<const float>> payloads;
  ckpt.params.for_each([&](const std::string& name, Partition part, const Tensor<float>& t) {
    json sec;
    sec["name"] = name;
    sec["partition"] = partition_to_string(part);
    sec["shape"] = t.shape();
    sec["bytes"] = t.data().size_bytes();
    sec["crc32"] = crc32(t.data().data(), t.data().size_bytes());
    sections.push_back(std::move(sec));
    payloads.push_back(t.data());
  });

  json header;
  header["model"] = model_to_json(ckpt.cfg);
  header["provenance"] = {{"config_hash", ckpt.provenance.config_hash},
                          {"seed", ckpt.provenance.seed},
                          {"epoch", ckpt.provenance.epoch},
                          {"stage", ckpt.provenance.stage}};
  if (ckpt.speaker) {
    header["speaker"] = {{"id", ckpt.speaker->speaker_id}, {"embedding", ckpt.speaker->vec}};
  }
  header["sections"] = std::move(sections);
  const std::string hs = header.dump();

  os.write(kMagic, 4);
  put_u32(os, kCheckpointVersion);
  put_u64(os, hs.size());
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& p : payloads)
    os.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size_bytes()));
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

void save_checkpoint(const std::string& path, const CheckpointData& ckpt) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  save_checkpoint(f, ckpt);
}

CheckpointData load_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic (not a model checkpoint)");
  const uint32_t version = get_u32(is, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) +
                             " (expected " + std::to_string(kCheckpointVersion) + ")");
  const uint64_t hlen = get_u64(is, "header length");
  if (hlen > (1ull << 30)) throw std::runtime_error("checkpoint: implausible header length");
  std::string hs(hlen, '\0');
  if (!is.read(hs.data(), static_cast<std::streamsize>(hlen)))
    throw std::runtime_error("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: malformed header: ") + e.what());
  }

  CheckpointData out;
  out.cfg = model_from_json(header.at("model"));
  const json& prov = header.at("provenance");
  out.provenance.config_hash = prov.at("config_hash").get<std::string>();
  out.provenance.seed = prov.at("seed").get<uint64_t>();
  out.provenance.epoch = prov.at("epoch").get<int>();
  out.provenance.stage = prov.at("stage").get<std::string>();
  if (header.contains("speaker")) {
    const json& spk = header.at("speaker");
    out.speaker = SpeakerEmbedding{spk.at("id").get<std::string>(),
                                   spk.at("embedding").get<std::vector<double>>()};
  }

  out.params = init_params<float>(out.cfg, 0);
  struct SectionRef {
    std::string partition;
    std::vector<int> shape;
    Tensor<float>* tensor;
  };
  std::map<std::string, SectionRef> expected;
  out.params.for_each([&](const std::string& name, Partition part, Tensor<float>& t) {
    expected[name] = SectionRef{partition_to_string(part), t.shape(), &t};
  });

  const json& sections = header.at("sections");
  if (sections.size() != expected.size())
    throw std::runtime_error("checkpoint: section count " + std::to_string(sections.size()) +
                             " does not match the model (" + std::to_string(expected.size()) + ")");
  for (const json& sec : sections) {
    const std::string name = sec.at("name").get<std::string>();
    auto it = expected.find(name);
    if (it == expected.end()) throw std::runtime_error("checkpoint: unexpected section '" + name + "'");
    if (sec.at("partition").get<std::string>() != it->second.partition)
      throw std::runtime_error("checkpoint: partition tag mismatch on section '" + name + "'");
    if (sec.at("shape").get<std::vector<int>>() != it->second.shape)
      throw std::runtime_error("checkpoint: shape mismatch on section '" + name + "'");
    const auto nbytes = sec.at("bytes").get<uint64_t>();
    Tensor<float>& t = *it->second.tensor;
    if (nbytes != t.data().size_bytes())
      throw std::runtime_error("checkpoint: byte count mismatch on section '" + name + "'");
    if (!is.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(nbytes)))
      throw std::runtime_error("checkpoint: truncated section '" + name + "'");
    const uint32_t want = sec.at("crc32").get<uint32_t>();
    const uint32_t got = crc32(t.data().data(), t.data().size_bytes());
    if (want != got)
      throw std::runtime_error("checkpoint: checksum failure in section '" + name + "'");
  }
  return out;
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  return load_checkpoint(f);
}

void ensure_model_matches(const CheckpointData& ckpt, const ModelConfig& expected) {
  if (ckpt.cfg == expected) return;
  throw std::runtime_error(
      "checkpoint: hyperparameter mismatch — stored model is F=" + std::to_string(ckpt.cfg.freq_bins) +
      " D=" + std::to_string(ckpt.cfg.model_dim) + " B=" + std::to_string(ckpt.cfg.blocks) +
      " heads=" + std::to_string(ckpt.cfg.heads) + " placement=" + placement_to_string(ckpt.cfg.placement) +
      (ckpt.cfg.causal ? " causal" : " non-causal") + ", expected F=" + std::to_string(expected.freq_bins) +
      " D=" + std::to_string(expected.model_dim) + " B=" + std::to_string(expected.blocks) +
      " heads=" + std::to_string(expected.heads) + " placement=" + placement_to_string(expected.placement) +
      (expected.causal ? " causal" : " non-causal"));
}

}  // namespace ossem
