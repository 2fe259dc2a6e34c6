#include "expertad/scenario_io.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "expertad/binary_io.hpp"
#include "expertad/error.hpp"
#include "expertad/random_stream.hpp"

namespace expertad {
namespace fs = std::filesystem;
namespace {

constexpr char kBlobMagic[4] = {'E', 'X', 'S', 'C'};
constexpr std::uint32_t kBlobVersion = 1;
constexpr const char* kManifestFormat = "expertad-scenarios";

void put_state(BinaryWriter& w, const EgoState& s) {
  for (double v : {s.x, s.y, s.yaw, s.v, s.a, s.yaw_rate}) w.f64(v);
}
EgoState get_state(BinaryReader& r) {
  EgoState s;
  s.x = r.f64(); s.y = r.f64(); s.yaw = r.f64();
  s.v = r.f64(); s.a = r.f64(); s.yaw_rate = r.f64();
  return s;
}
void put_points(BinaryWriter& w, const std::vector<Point2>& pts) {
  w.u64(pts.size());
  for (const auto& p : pts) { w.f64(p.x); w.f64(p.y); }
}
std::vector<Point2> get_points(BinaryReader& r) {
  std::vector<Point2> pts(r.u64());
  for (auto& p : pts) { p.x = r.f64(); p.y = r.f64(); }
  return pts;
}
void put_grid(BinaryWriter& w, const FeatureGrid& g) {
  for (std::size_t v : {g.time(), g.channels(), g.height(), g.width()}) w.u64(v);
  w.f64s(g.data());
}
FeatureGrid get_grid(BinaryReader& r) {
  const std::size_t T = r.u64(), C = r.u64(), H = r.u64(), W = r.u64();
  FeatureGrid g(T, C, H, W);
  auto data = r.f64s();
  require(data.size() == g.size(), ErrorKind::io, "scenario blob: grid size mismatch");
  g.data() = std::move(data);
  return g;
}

std::string blob_name(std::size_t i) {
  std::ostringstream os;
  os << "scenario_" << std::setw(5) << std::setfill('0') << i << ".bin";
  return os.str();
}

}  // namespace

nlohmann::json scenario_config_to_json(const ScenarioConfig& c) {
  return {{"T", c.T},
          {"d", c.d},
          {"H", c.H},
          {"W", c.W},
          {"horizon", c.horizon},
          {"dt", c.dt},
          {"noise_level", c.noise_level},
          {"planted_channels", c.planted_channels},
          {"obstacle_count", c.obstacle_count}};
}

ScenarioConfig scenario_config_from_json(const nlohmann::json& j) {
  require(j.is_object(), ErrorKind::config, "scenario config must be a JSON object");
  static const std::set<std::string> known = {"T", "d", "H", "W", "horizon", "dt",
                                              "noise_level", "planted_channels", "obstacle_count"};
  for (const auto& [key, _] : j.items()) {
    require(known.count(key) == 1, ErrorKind::config, "scenario config: unknown key '" + key + "'");
  }
  ScenarioConfig c;
  try {
    if (j.contains("T")) c.T = j.at("T").get<std::size_t>();
    if (j.contains("d")) c.d = j.at("d").get<std::size_t>();
    if (j.contains("H")) c.H = j.at("H").get<std::size_t>();
    if (j.contains("W")) c.W = j.at("W").get<std::size_t>();
    if (j.contains("horizon")) c.horizon = j.at("horizon").get<std::size_t>();
    if (j.contains("dt")) c.dt = j.at("dt").get<double>();
    if (j.contains("noise_level")) c.noise_level = j.at("noise_level").get<double>();
    if (j.contains("planted_channels")) c.planted_channels = j.at("planted_channels").get<std::size_t>();
    if (j.contains("obstacle_count")) c.obstacle_count = j.at("obstacle_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("scenario config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<char> encode_scenario(const Scenario& sc) {
  BinaryWriter w;
  w.raw(kBlobMagic, 4);
  w.u32(kBlobVersion);
  w.u64(sc.seed);
  w.u32(static_cast<std::uint32_t>(sc.command));
  put_grid(w, sc.bev_seq);
  w.u64(sc.ego_history.size());
  for (const auto& s : sc.ego_history) put_state(w, s);
  w.u64(sc.obstacles.size());
  for (const auto& ob : sc.obstacles) {
    w.f64(ob.radius);
    put_points(w, ob.positions);
  }
  w.u64(sc.future_controls.size());
  for (const auto& u : sc.future_controls) { w.f64(u.a); w.f64(u.yaw_rate); }
  w.u64(sc.gt_states.size());
  for (const auto& s : sc.gt_states) put_state(w, s);
  put_points(w, sc.gt_future);
  put_points(w, sc.reference_points);
  w.u64(sc.planted.size());
  for (std::size_t p : sc.planted) w.u64(p);
  put_grid(w, sc.clean_signal);
  return w.buffer();
}

Scenario decode_scenario(const std::vector<char>& blob) {
  BinaryReader r(blob);
  require(r.bytes(4) == std::string(kBlobMagic, 4), ErrorKind::io, "scenario blob: bad magic");
  require(r.u32() == kBlobVersion, ErrorKind::io, "scenario blob: unsupported version");
  Scenario sc;
  sc.seed = r.u64();
  const std::uint32_t cmd = r.u32();
  require(cmd < kCommandCount, ErrorKind::io, "scenario blob: bad command value");
  sc.command = static_cast<Command>(cmd);
  sc.bev_seq = get_grid(r);
  sc.ego_history.resize(r.u64());
  for (auto& s : sc.ego_history) s = get_state(r);
  sc.obstacles.resize(r.u64());
  for (auto& ob : sc.obstacles) {
    ob.radius = r.f64();
    ob.positions = get_points(r);
  }
  sc.future_controls.resize(r.u64());
  for (auto& u : sc.future_controls) { u.a = r.f64(); u.yaw_rate = r.f64(); }
  sc.gt_states.resize(r.u64());
  for (auto& s : sc.gt_states) s = get_state(r);
  sc.gt_future = get_points(r);
  sc.reference_points = get_points(r);
  sc.planted.resize(r.u64());
  for (auto& p : sc.planted) p = r.u64();
  sc.clean_signal = get_grid(r);
  require(r.remaining() == 0, ErrorKind::io, "scenario blob: trailing bytes");
  return sc;
}

std::vector<std::uint64_t> scenario_seeds(std::uint64_t base_seed, std::size_t count) {
  RandomStream rng = seeded_stream(base_seed, "scenario-seeds");
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i) seeds[i] = rng.bits(i) >> 1;  // JSON-safe range
  return seeds;
}

void write_scenario_set(const std::string& dir, const ScenarioConfig& config,
                        const std::vector<std::uint64_t>& seeds) {
  config.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory '" + dir + "': " + ec.message());

  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const Scenario sc = generate_scenario(config, seeds[i]);
    BinaryWriter w;
    const auto blob = encode_scenario(sc);
    w.raw(blob.data(), blob.size());
    w.save((fs::path(dir) / blob_name(i)).string());
    files.push_back(blob_name(i));
  }
  nlohmann::json manifest = {{"format", kManifestFormat},
                             {"version", 1},
                             {"count", seeds.size()},
                             {"config", scenario_config_to_json(config)},
                             {"seeds", seeds},
                             {"files", files}};
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) fail(ErrorKind::io, "cannot write manifest in '" + dir + "'");
  out << manifest.dump(2) << "\n";
}

ScenarioSet load_scenario_set(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::io, "missing manifest '" + manifest_path.string() + "'");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, std::string("malformed manifest: ") + e.what());
  }
  require(m.value("format", "") == kManifestFormat, ErrorKind::io, "manifest: unexpected format tag");
  ScenarioSet set;
  set.config = scenario_config_from_json(m.at("config"));
  set.seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
  const auto files = m.at("files").get<std::vector<std::string>>();
  require(m.at("count").get<std::size_t>() == files.size() && files.size() == set.seeds.size(),
          ErrorKind::io, "manifest: count, seeds and files disagree");
  for (std::size_t i = 0; i < files.size(); ++i) {
    auto reader = BinaryReader::load((fs::path(dir) / files[i]).string());
    Scenario sc = decode_scenario(reader.buffer());
    require(sc.seed == set.seeds[i], ErrorKind::io, "manifest: blob seed differs from manifest");
    require(sc.bev_seq.channels() == set.config.d && sc.bev_seq.time() == set.config.T &&
                sc.gt_future.size() == set.config.horizon,
            ErrorKind::io, "manifest: blob dimensions differ from manifest config");
    set.scenarios.push_back(std::move(sc));
  }
  return set;
}

}  // namespace expertad
