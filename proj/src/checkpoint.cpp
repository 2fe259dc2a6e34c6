#include "expertad/checkpoint.hpp"

#include <cstring>

#include "expertad/binary_io.hpp"
#include "expertad/error.hpp"

namespace expertad {
namespace {

constexpr char kMagic[4] = {'E', 'X', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<char> encode_checkpoint(const Model& model) {
  nlohmann::json index;
  index["format"] = "expertad-checkpoint";
  index["version"] = kVersion;
  index["config"] = run_config_to_json(model.config);
  index["seed"] = model.config.seed;
  nlohmann::json groups = nlohmann::json::array();
  std::uint64_t count = 0;
  for (const auto& [name, m] : model.params) {
    groups.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", count}});
    count += static_cast<std::uint64_t>(m.size());
  }
  index["params"] = std::move(groups);

  BinaryWriter w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u64(count);
  for (const auto& [name, m] : model.params) w.raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  const std::string text = index.dump();
  w.bytes(text);
  w.u64(text.size());
  return w.buffer();
}

Model decode_checkpoint(const std::vector<char>& bytes) {
  require(bytes.size() >= 4 + 4 + 8 + 8 && std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorKind::io,
          "checkpoint: bad magic");
  BinaryReader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  require(r.u32() == kVersion, ErrorKind::io, "checkpoint: unsupported version");
  const std::uint64_t count = r.u64();
  require(count <= (bytes.size() - 24) / sizeof(double), ErrorKind::io, "checkpoint: truncated values");
  std::vector<double> values(count);
  r.raw(values.data(), count * sizeof(double));

  std::uint64_t index_len = 0;
  std::memcpy(&index_len, bytes.data() + bytes.size() - 8, 8);
  const std::size_t index_start = 16 + count * sizeof(double);
  require(index_start + index_len + 8 == bytes.size(), ErrorKind::io, "checkpoint: index length mismatch");
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(index_start),
                                  bytes.begin() + static_cast<std::ptrdiff_t>(index_start + index_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, std::string("checkpoint: malformed index: ") + e.what());
  }

  Model model;
  model.config = run_config_from_json(index.at("config"));
  model.bank = default_bank(model.config.scenario.d, model.config.patterns);
  const Model reference = init_model(model.config);
  for (const auto& g : index.at("params")) {
    const auto name = g.at("name").get<std::string>();
    const auto rows = g.at("rows").get<Eigen::Index>(), cols = g.at("cols").get<Eigen::Index>();
    const auto offset = g.at("offset").get<std::uint64_t>();
    require(offset + static_cast<std::uint64_t>(rows * cols) <= count, ErrorKind::io,
            "checkpoint: group '" + name + "' exceeds the value block");
    Mat m(rows, cols);
    std::memcpy(m.data(), values.data() + offset, static_cast<std::size_t>(rows * cols) * sizeof(double));
    model.params[name] = std::move(m);
  }
  require(model.params.size() == reference.params.size(), ErrorKind::io,
          "checkpoint: parameter groups do not match the config");
  for (const auto& [name, m] : reference.params) {
    const auto it = model.params.find(name);
    require(it != model.params.end() && it->second.rows() == m.rows() && it->second.cols() == m.cols(),
            ErrorKind::io, "checkpoint: group '" + name + "' missing or mis-shaped");
  }
  return model;
}

void save_checkpoint(const std::string& path, const Model& model) {
  BinaryWriter w;
  const auto bytes = encode_checkpoint(model);
  w.raw(bytes.data(), bytes.size());
  w.save(path);
}

Model load_checkpoint(const std::string& path) { return decode_checkpoint(BinaryReader::load(path).buffer()); }

}  // namespace expertad
