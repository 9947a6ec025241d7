#include "mmt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace mmt {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

void write_u64_le(std::ostream& out, std::uint64_t v) {
  write_u32_le(out, static_cast<std::uint32_t>(v & 0xFFFFFFFFULL));
  write_u32_le(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t read_u64_le(std::istream& in) {
  const std::uint64_t lo = read_u32_le(in);
  const std::uint64_t hi = read_u32_le(in);
  return lo | (hi << 32);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32_le(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& path) {
  const std::uint32_t n = read_u32_le(in);
  if (!in) throw FormatError(path + ": truncated string length");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (static_cast<std::uint32_t>(in.gcount()) != n) {
    throw FormatError(path + ": truncated string of " + std::to_string(n) + " bytes");
  }
  return s;
}

void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  write_u32_le(out, static_cast<std::uint32_t>(vocab.size()));
  for (int i = 0; i < vocab.size(); ++i) {
    write_string(out, vocab.tokens[i]);
    write_u64_le(out, static_cast<std::uint64_t>(vocab.counts[i]));
  }
}

Vocabulary read_vocabulary(std::istream& in, const std::string& path) {
  Vocabulary vocab;
  const std::uint32_t n = read_u32_le(in);
  if (!in || n < Vocabulary::kNumReserved) {
    throw FormatError(path + ": vocabulary shorter than the reserved block");
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string tok = read_string(in, path);
    const long long count = static_cast<long long>(read_u64_le(in));
    if (i < Vocabulary::kNumReserved) {
      if (tok != vocab.tokens[i]) {
        throw FormatError(path + ": reserved token " + std::to_string(i) + " is '" + tok + "'");
      }
      vocab.counts[i] = count;
    } else {
      vocab.add(tok, count);
    }
  }
  if (!in) throw FormatError(path + ": truncated vocabulary");
  return vocab;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) {
  nlohmann::json j;
  j["decoder_fixed"] = config.decoder_fixed;
  j["decoder_hidden"] = config.decoder_hidden;
  j["decoder_init"] = to_string(config.decoder_init);
  j["dropout"] = config.dropout;
  j["embedding_dim"] = config.embedding_dim;
  j["encoder_hidden"] = config.encoder_hidden;
  j["encoder_init"] = to_string(config.encoder_init);
  j["encoder_trainable"] = config.encoder_trainable;
  j["latent_dim"] = config.latent_dim;
  j["multimodal"] = config.multimodal;
  j["output_head"] = to_string(config.output_head);
  j["source_vocab"] = config.source_vocab;
  j["target_vocab"] = config.target_vocab;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model config: expected a JSON object");

  static const std::vector<std::string> known = {
      "decoder_fixed",  "decoder_hidden", "decoder_init", "dropout",
      "embedding_dim",  "encoder_hidden", "encoder_init", "encoder_trainable",
      "latent_dim",     "multimodal",     "output_head",  "source_vocab",
      "target_vocab"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) throw ConfigError("model config: unknown key '" + key + "'");
  }
  for (const auto& k : known) {
    if (!j.contains(k)) throw ConfigError("model config: missing key '" + k + "'");
  }

  ModelConfig config;
  try {
    config.decoder_fixed = j.at("decoder_fixed").get<bool>();
    config.decoder_hidden = j.at("decoder_hidden").get<int>();
    config.decoder_init = init_mode_from_string(j.at("decoder_init").get<std::string>());
    config.dropout = j.at("dropout").get<Real>();
    config.embedding_dim = j.at("embedding_dim").get<int>();
    config.encoder_hidden = j.at("encoder_hidden").get<int>();
    config.encoder_init = init_mode_from_string(j.at("encoder_init").get<std::string>());
    config.encoder_trainable = j.at("encoder_trainable").get<bool>();
    config.latent_dim = j.at("latent_dim").get<int>();
    config.multimodal = j.at("multimodal").get<bool>();
    config.output_head = output_head_from_string(j.at("output_head").get<std::string>());
    config.source_vocab = j.at("source_vocab").get<int>();
    config.target_vocab = j.at("target_vocab").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  config.validate();
  return config;
}

void save_checkpoint(const std::string& path, const Model& model, const Vocabulary& source_vocab,
                     const Vocabulary& target_vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path);

  out.write("MMCK", 4);
  write_u32_le(out, kCheckpointVersion);
  write_string(out, model_config_to_json(model.config()));
  write_vocabulary(out, source_vocab);
  write_vocabulary(out, target_vocab);

  const auto params = model.named_parameters();
  write_u32_le(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    write_string(out, name);
    write_u32_le(out, static_cast<std::uint32_t>(t->rank()));
    for (int d : t->shape) write_u32_le(out, static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < t->numel(); ++i) {
      write_u64_le(out, std::bit_cast<std::uint64_t>(static_cast<double>(t->value[i])));
    }
  }
  if (!out) throw Error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint: " + path);

  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "MMCK") {
    throw FormatError(path + ": bad magic (want MMCK)");
  }
  const std::uint32_t version = read_u32_le(in);
  if (!in || version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  }

  ModelConfig config;
  try {
    config = model_config_from_json(read_string(in, path));
  } catch (const ConfigError& e) {
    throw FormatError(path + ": " + e.what());
  }
  Vocabulary source_vocab = read_vocabulary(in, path);
  Vocabulary target_vocab = read_vocabulary(in, path);
  if (source_vocab.size() != config.source_vocab || target_vocab.size() != config.target_vocab) {
    throw FormatError(path + ": vocabulary sizes disagree with the config block");
  }

  // Build a skeleton with the right shapes, then overwrite every tensor from
  // the file; the registry must be covered exactly once.
  CounterRng rng(0);
  Model model(config, MatX::Zero(config.source_vocab, config.embedding_dim),
              MatX::Zero(config.target_vocab, config.embedding_dim), rng);
  std::unordered_map<std::string, Tensor> registry;
  for (auto& [name, t] : model.named_parameters()) registry.emplace(name, t);

  const std::uint32_t count = read_u32_le(in);
  if (!in) throw FormatError(path + ": truncated tensor count");
  if (count != registry.size()) {
    throw FormatError(path + ": " + std::to_string(count) + " tensors for a registry of " +
                      std::to_string(registry.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, path);
    auto it = registry.find(name);
    if (it == registry.end()) throw FormatError(path + ": unexpected tensor '" + name + "'");
    Tensor t = it->second;
    registry.erase(it);

    const std::uint32_t rank = read_u32_le(in);
    if (!in || rank != static_cast<std::uint32_t>(t->rank())) {
      throw FormatError(path + ": tensor '" + name + "' has rank " + std::to_string(rank));
    }
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = read_u32_le(in);
      if (!in || dim != static_cast<std::uint32_t>(t->shape[d])) {
        throw FormatError(path + ": tensor '" + name + "' shape mismatch at axis " +
                          std::to_string(d));
      }
    }
    for (Eigen::Index k = 0; k < t->numel(); ++k) {
      const std::uint64_t bits = read_u64_le(in);
      if (!in) throw FormatError(path + ": truncated data for tensor '" + name + "'");
      t->value[k] = static_cast<Real>(std::bit_cast<double>(bits));
    }
  }

  return Checkpoint{config, std::move(source_vocab), std::move(target_vocab), std::move(model)};
}

}  // namespace mmt
