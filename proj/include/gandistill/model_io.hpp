#pragma once

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "gandistill/checkpoint.hpp"
#include "gandistill/models.hpp"

namespace gandistill {

nlohmann::json to_json(const GeneratorSpec& spec);
GeneratorSpec generator_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiscriminatorSpec& spec);
DiscriminatorSpec discriminator_spec_from_json(const nlohmann::json& j);

/// Adds spec, parameters and normalization statistics of `g` to `c`.
void add_generator(Container& c, Generator<float>& g);
/// Rebuilds a generator from any container holding a generator section
/// (model files and training checkpoints alike).
std::unique_ptr<Generator<float>> generator_from_container(const Container& c);

void save_generator(const std::filesystem::path& path, Generator<float>& g);
std::unique_ptr<Generator<float>> load_generator(const std::filesystem::path& path);

}  // namespace gandistill
