#pragma once

#include <string>

#include "mmt/embeddings.hpp"
#include "mmt/model.hpp"

namespace mmt {

// Canonical key-sorted JSON for a model configuration. Serialization and
// parsing are exact inverses, so equal configs always produce identical text.
std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

struct Checkpoint {
  ModelConfig config;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  Model model;
};

// Container layout: "MMCK" magic, format version, the config JSON, both
// vocabularies, then every registry tensor as (name, shape, float64 LE
// values). A save of a freshly loaded checkpoint reproduces the bytes.
void save_checkpoint(const std::string& path, const Model& model, const Vocabulary& source_vocab,
                     const Vocabulary& target_vocab);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mmt
