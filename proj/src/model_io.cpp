#include "gandistill/model_io.hpp"

namespace gandistill {

nlohmann::json to_json(const GeneratorSpec& s) {
  return {{"z_dim", s.z_dim},
          {"num_classes", s.num_classes},
          {"embedding_dim", s.embedding_dim},
          {"channel_multiplier", s.channel_multiplier},
          {"num_res_blocks", s.num_res_blocks},
          {"conv_kind", to_string(s.conv_kind)},
          {"output_resolution", s.output_resolution}};
}

GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
  try {
    GeneratorSpec s;
    s.z_dim = j.at("z_dim").get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    s.embedding_dim = j.at("embedding_dim").get<int>();
    s.channel_multiplier = j.at("channel_multiplier").get<int>();
    s.num_res_blocks = j.at("num_res_blocks").get<int>();
    s.conv_kind = conv_kind_from_string(j.at("conv_kind").get<std::string>());
    s.output_resolution = j.at("output_resolution").get<int>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("invalid generator spec: ") + e.what());
  }
}

nlohmann::json to_json(const DiscriminatorSpec& s) {
  return {{"channel_multiplier", s.channel_multiplier},
          {"num_strided_layers", s.num_strided_layers},
          {"num_classes", s.num_classes},
          {"spectral_norm_iters", s.spectral_norm_iters},
          {"input_resolution", s.input_resolution}};
}

DiscriminatorSpec discriminator_spec_from_json(const nlohmann::json& j) {
  try {
    DiscriminatorSpec s;
    s.channel_multiplier = j.at("channel_multiplier").get<int>();
    s.num_strided_layers = j.at("num_strided_layers").get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    s.spectral_norm_iters = j.at("spectral_norm_iters").get<int>();
    s.input_resolution = j.at("input_resolution").get<int>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("invalid discriminator spec: ") + e.what());
  }
}

void add_generator(Container& c, Generator<float>& g) {
  c.header["generator_spec"] = to_json(g.spec());
  export_tensors(c, g.params());
  export_tensors(c, g.buffers());
}

std::unique_ptr<Generator<float>> generator_from_container(const Container& c) {
  if (!c.header.contains("generator_spec"))
    throw CheckpointError("container holds no generator");
  auto g = std::make_unique<Generator<float>>(generator_spec_from_json(c.header["generator_spec"]), 0);
  import_tensors(c, g->params());
  import_tensors(c, g->buffers());
  return g;
}

void save_generator(const std::filesystem::path& path, Generator<float>& g) {
  Container c;
  c.header["kind"] = "generator";
  add_generator(c, g);
  write_container(path, c);
}

std::unique_ptr<Generator<float>> load_generator(const std::filesystem::path& path) {
  return generator_from_container(read_container(path));
}

}  // namespace gandistill
