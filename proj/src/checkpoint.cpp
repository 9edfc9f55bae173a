#include "softnet/checkpoint.hpp"

#include "softnet/error.hpp"
#include "softnet/io.hpp"

namespace softnet {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from_json(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

}  // namespace

json checkpoint_to_json(const TrainedState& state) {
  const MaskedMlp& net = state.network;
  json layers = json::array();
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const auto& l = net.layer(i);
    layers.push_back({{"weight", matrix_to_json(l.weight)},
                      {"bias", matrix_to_json(l.bias)},
                      {"score", matrix_to_json(l.score)},
                      {"capacity", l.capacity},
                      {"major", matrix_to_json(net.masks()[i].major)},
                      {"minor", matrix_to_json(net.masks()[i].minor)}});
  }
  json prototypes = json::array();
  for (const auto& p : state.prototypes.all()) {
    prototypes.push_back({{"class", p.class_id}, {"count", p.sample_count}, {"vector", p.vector}});
  }
  json doc{{"format", kCheckpointFormat},
           {"version", kCheckpointVersion},
           {"mode", to_string(net.mode())},
           {"frozen", net.frozen()},
           {"layers", std::move(layers)},
           {"prototypes", std::move(prototypes)},
           {"base_classes", state.base_classes},
           {"sessions_completed", state.sessions_completed}};
  if (net.freeze_seed()) doc["minor_seed"] = *net.freeze_seed();
  return doc;
}

TrainedState checkpoint_from_json(const json& doc) {
  try {
    if (!doc.is_object() || doc.value("format", std::string{}) != kCheckpointFormat) {
      fail(ErrorKind::format, "not a softnet checkpoint");
    }
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion) {
      fail(ErrorKind::format, "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
    }
    std::vector<MaskedLayer> layers;
    std::vector<LayerMask> masks;
    for (const auto& l : doc.at("layers")) {
      layers.push_back(MaskedLayer{matrix_from_json(l.at("weight")), matrix_from_json(l.at("bias")),
                                   matrix_from_json(l.at("score")), l.at("capacity").get<double>()});
      masks.push_back(LayerMask{matrix_from_json(l.at("major")), matrix_from_json(l.at("minor"))});
    }
    TrainedState state;
    state.network = MaskedMlp(std::move(layers), parse_mask_mode(doc.at("mode").get<std::string>()));
    if (doc.at("frozen").get<bool>()) {
      state.network.restore_frozen_masks(std::move(masks), doc.at("minor_seed").get<std::uint64_t>());
    }
    for (const auto& p : doc.at("prototypes")) {
      state.prototypes.insert(Prototype{p.at("class").get<int>(), p.at("vector").get<std::vector<double>>(),
                                        p.at("count").get<std::size_t>()});
    }
    state.base_classes = doc.at("base_classes").get<std::vector<int>>();
    state.sessions_completed = doc.at("sessions_completed").get<std::size_t>();
    return state;
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const TrainedState& state) {
  write_file_atomic(path, checkpoint_to_json(state).dump() + "\n");
}

TrainedState load_checkpoint(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) fail(ErrorKind::format, "checkpoint " + path.string() + " is not valid JSON");
  return checkpoint_from_json(doc);
}

}  // namespace softnet
