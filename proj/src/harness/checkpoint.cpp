#include "mmfs/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mmfs/core/error.hpp"

namespace mmfs {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::json;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_string(std::ostream& out, const std::string& text) {
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T get(const char* what) {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) fail(std::string("truncated while reading ") + what);
    return value;
  }

  std::string get_string(const char* what, std::size_t limit) {
    const auto length = get<std::uint64_t>(what);
    if (length > limit) fail(std::string("implausible length for ") + what);
    std::string text(length, '\0');
    in_.read(text.data(), static_cast<std::streamsize>(length));
    if (!in_) fail(std::string("truncated while reading ") + what);
    return text;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw DataError("checkpoint " + path_ + ": " + message);
  }

 private:
  std::istream& in_;
  std::string path_;
};

json header_to_json(const CheckpointHeader& h) {
  return json{{"model", to_json(h.model)},
              {"seed", h.seed},
              {"ways", h.ways},
              {"shots", h.shots},
              {"queries", h.queries},
              {"precision", std::string(to_string(h.precision))},
              {"epoch", h.epoch}};
}

CheckpointHeader header_from_json(const json& j) {
  CheckpointHeader h;
  h.model = model_config_from_json(j.at("model"));
  h.seed = j.at("seed").get<std::uint64_t>();
  h.ways = j.at("ways").get<std::size_t>();
  h.shots = j.at("shots").get<std::size_t>();
  h.queries = j.at("queries").get<std::size_t>();
  h.precision = parse_precision(j.at("precision").get<std::string>());
  h.epoch = j.at("epoch").get<std::size_t>();
  return h;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MultiModalModel& model, const CheckpointHeader& header) {
  CheckpointHeader h = header;
  h.model = model.config();
  h.seed = model.seed();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, h.model.embed_dim);
  put_string(out, header_to_json(h).dump());
  const auto& entries = model.parameters().entries();
  put<std::uint64_t>(out, entries.size());
  for (const auto& entry : entries) {
    put_string(out, entry.name);
    const Shape& shape = entry.tensor.shape();
    put<std::uint64_t>(out, shape.size());
    for (std::size_t dim : shape) put<std::uint64_t>(out, dim);
    const auto values = entry.tensor.values();
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  }
  if (!out) throw DataError("checkpoint: write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  Reader reader(in, path.string());

  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) reader.fail("bad magic bytes");
  const auto version = reader.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) reader.fail("unsupported version " + std::to_string(version));
  const auto dim = reader.get<std::uint64_t>("embedding size");

  LoadedCheckpoint loaded;
  try {
    loaded.header = header_from_json(json::parse(reader.get_string("header", 1u << 24)));
  } catch (const json::exception& e) {
    reader.fail(std::string("bad header: ") + e.what());
  } catch (const ConfigError& e) {
    reader.fail(std::string("bad header: ") + e.what());
  }
  if (loaded.header.model.embed_dim != dim) reader.fail("embedding size disagrees with header");

  loaded.model = std::make_unique<MultiModalModel>(loaded.header.model, loaded.header.seed);
  const auto& entries = loaded.model->parameters().entries();
  const auto count = reader.get<std::uint64_t>("parameter count");
  if (count != entries.size()) {
    reader.fail("holds " + std::to_string(count) + " parameters, model has " + std::to_string(entries.size()));
  }
  for (const auto& entry : entries) {
    const std::string name = reader.get_string("parameter name", 4096);
    if (name != entry.name) reader.fail("expected parameter '" + entry.name + "', found '" + name + "'");
    const auto rank = reader.get<std::uint64_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) d = reader.get<std::uint64_t>("dimension");
    if (shape != entry.tensor.shape()) {
      reader.fail("parameter '" + name + "' has shape " + shape_to_string(shape) + ", model expects " +
                  shape_to_string(entry.tensor.shape()));
    }
    Tensor target = entry.tensor;
    auto values = target.mutable_values();
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) reader.fail("truncated values of '" + name + "'");
  }
  if (in.peek() != std::char_traits<char>::eof()) reader.fail("trailing bytes");
  return loaded;
}

}  // namespace mmfs
