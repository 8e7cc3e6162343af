#include <bit>
#include <cstring>
#include <fstream>

#include "mtlsed/errors.hpp"
#include "mtlsed/model.hpp"

namespace mtlsed {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'L', 'S', 'E', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& is) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m, std::uint64_t step) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto* p : m.parameters()) tensors.push_back({{"name", p->name}, {"shape", p->value.shape}});
  const nlohmann::json header{{"config", to_json(m.config())},
                              {"config_digest", config_digest(m.config())},
                              {"seed", m.seed()},
                              {"step", step},
                              {"tensors", tensors}};
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* p : m.parameters())
    os.write(reinterpret_cast<const char*>(p->value.data.data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw ValidationError("checkpoint: " + path + " is not a model checkpoint");
  if (get<std::uint32_t>(is) != kVersion) throw ValidationError("checkpoint: unsupported version in " + path);
  std::string text(get<std::uint64_t>(is), '\0');
  is.read(text.data(), static_cast<std::streamsize>(text.size()));
  const auto header = nlohmann::json::parse(text);

  const ModelConfig config = model_config_from_json(header.at("config"));
  if (header.at("config_digest").get<std::string>() != config_digest(config))
    throw ValidationError("checkpoint: stored config digest does not match its config");
  if (expected && config_digest(*expected) != config_digest(config))
    throw ValidationError("checkpoint: config digest mismatch (checkpoint " + config_digest(config).substr(0, 12) +
                          ", expected " + config_digest(*expected).substr(0, 12) + ")");

  Checkpoint ck{Model(config, header.at("seed").get<std::uint64_t>()), header.at("step").get<std::uint64_t>()};
  auto params = ck.model.parameters();
  const auto& tensors = header.at("tensors");
  require(tensors.size() == params.size(), "checkpoint: tensor count does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(tensors[i].at("name").get<std::string>() == params[i]->name &&
                tensors[i].at("shape").get<nn::Shape>() == params[i]->value.shape,
            "checkpoint: tensor " + tensors[i].at("name").get<std::string>() + " does not match the model layout");
    auto& data = params[i]->value.data;
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data in " + path);
  }
  return ck;
}

}  // namespace mtlsed
