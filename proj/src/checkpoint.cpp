#include "uno/checkpoint.hpp"

#include "uno/error.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace uno {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'U', 'N', 'O', 'C', 'K', 'P', 'T', '\0'};

json layout_json(const Layout& layout) {
  json out = json::array();
  for (const TensorSpec& t : layout.tensors())
    out.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"offset", t.offset}});
  return out;
}

void write(const std::filesystem::path& path, const json& header, const ParamVector& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  const std::string text = header.dump();
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(params.values().data()),
            static_cast<std::streamsize>(params.values().size() * sizeof(double)));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

struct Raw {
  json header;
  Vec values;
};

Raw read(const std::filesystem::path& path, const std::string& kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  if (!in.read(magic, sizeof magic)) throw Error(ErrorCode::TruncatedFile, path.string());
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw Error(ErrorCode::BadMagic, path.string() + ": not a checkpoint");
  if (!in.read(reinterpret_cast<char*>(&version), sizeof version) || !in.read(reinterpret_cast<char*>(&len), sizeof len))
    throw Error(ErrorCode::TruncatedFile, path.string());
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::BadMagic, path.string() + ": unsupported format version " + std::to_string(version));
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw Error(ErrorCode::TruncatedFile, path.string());
  Raw raw{json::parse(text), Vec()};
  if (raw.header.value("kind", "") != kind)
    throw Error(ErrorCode::LayoutMismatch, path.string() + ": expected a " + kind + " checkpoint");
  const std::uint64_t count = raw.header.at("count").get<std::uint64_t>();
  raw.values.resize(static_cast<Eigen::Index>(count));
  if (!in.read(reinterpret_cast<char*>(raw.values.data()), static_cast<std::streamsize>(count * sizeof(double))))
    throw Error(ErrorCode::TruncatedFile, path.string() + ": parameter block cut short");
  return raw;
}

void check_layout(const json& stored, const Layout& expected, const std::filesystem::path& path) {
  if (stored != layout_json(expected))
    throw Error(ErrorCode::LayoutMismatch, path.string() + ": stored layout disagrees with the architecture");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const VaeModel& model) {
  const VaeArch& a = model.arch;
  json header = {{"kind", "vae"},
                 {"arch",
                  {{"input_dim", a.input_dim},
                   {"latent_dim", a.latent_dim},
                   {"encoder_hidden", a.encoder_hidden},
                   {"decoder_hidden", a.decoder_hidden},
                   {"activation", to_string(a.activation)},
                   {"head", to_string(a.head)}}},
                 {"layout", layout_json(model.params.layout())},
                 {"count", model.params.values().size()}};
  write(path, header, model.params);
}

void save_checkpoint(const std::filesystem::path& path, const ClassifierModel& model) {
  const ClassifierArch& a = model.arch;
  json header = {{"kind", "classifier"},
                 {"arch",
                  {{"input_dim", a.input_dim},
                   {"hidden", a.hidden},
                   {"activation", to_string(a.activation)},
                   {"num_classes", a.num_classes}}},
                 {"layout", layout_json(model.params.layout())},
                 {"count", model.params.values().size()}};
  write(path, header, model.params);
}

VaeModel load_vae(const std::filesystem::path& path) {
  Raw raw = read(path, "vae");
  const json& a = raw.header.at("arch");
  VaeArch arch;
  arch.input_dim = a.at("input_dim");
  arch.latent_dim = a.at("latent_dim");
  arch.encoder_hidden = a.at("encoder_hidden").get<std::vector<int>>();
  arch.decoder_hidden = a.at("decoder_hidden").get<std::vector<int>>();
  arch.activation = parse_activation(a.at("activation"));
  arch.head = parse_output_head(a.at("head"));
  LayoutPtr layout = make_vae_layout(arch);
  check_layout(raw.header.at("layout"), *layout, path);
  return VaeModel{arch, ParamVector(layout, std::move(raw.values))};
}

ClassifierModel load_classifier(const std::filesystem::path& path) {
  Raw raw = read(path, "classifier");
  const json& a = raw.header.at("arch");
  ClassifierArch arch;
  arch.input_dim = a.at("input_dim");
  arch.hidden = a.at("hidden").get<std::vector<int>>();
  arch.activation = parse_activation(a.at("activation"));
  arch.num_classes = a.at("num_classes");
  LayoutPtr layout = make_classifier_layout(arch);
  check_layout(raw.header.at("layout"), *layout, path);
  return ClassifierModel{arch, ParamVector(layout, std::move(raw.values))};
}

}  // namespace uno
