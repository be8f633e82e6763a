#include "invbasin/checkpoint.hpp"

#include <fstream>

#include "json.hpp"

namespace invbasin {

namespace {

using nlohmann::json;

json tensor_to_json(const Tensor& t) {
  json j;
  j["shape"] = t.shape();
  j["data"] = t.vec();
  return j;
}

Tensor tensor_from_json(const json& j) {
  std::vector<std::size_t> shape = j.at("shape").get<std::vector<std::size_t>>();
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  return Tensor(std::move(shape), std::move(data));
}

json norm_to_json(const NormStats& n) {
  json j;
  j["channel_mean"] = n.channel_mean;
  j["channel_std"] = n.channel_std;
  j["static_mean"] = n.static_mean;
  j["static_std"] = n.static_std;
  return j;
}

NormStats norm_from_json(const json& j) {
  NormStats n;
  n.channel_mean = j.at("channel_mean").get<std::vector<double>>();
  n.channel_std = j.at("channel_std").get<std::vector<double>>();
  n.static_mean = j.at("static_mean").get<std::vector<double>>();
  n.static_std = j.at("static_std").get<std::vector<double>>();
  return n;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << j.dump(1) << "\n";
}

}  // namespace

void save_checkpoint(const std::string& path, const InverseCheckpoint& ckpt) {
  json j;
  j["format"] = "invbasin-checkpoint";
  j["kind"] = "inverse";
  j["version"] = 1;
  j["seed"] = ckpt.seed;
  const ModelConfig& c = ckpt.model.config;
  j["model"] = {{"input_channels", c.input_channels},
                {"static_count", c.static_count},
                {"hidden_size", c.hidden_size},
                {"embedding_size", c.embedding_size},
                {"static_hidden", c.static_hidden},
                {"placement", placement_name(c.placement)},
                {"prior_std", c.prior_std},
                {"candidate_gate_sigmoid", c.candidate_gate_sigmoid}};
  json params = json::object();
  for_each_param(ckpt.model, [&](const std::string& name, const Tensor& t) {
    params[name] = tensor_to_json(t);
  });
  j["params"] = params;
  j["norm"] = norm_to_json(ckpt.norm);
  j["driver_names"] = ckpt.driver_names;
  j["static_names"] = ckpt.static_names;
  write_json_file(path, j);
}

InverseCheckpoint load_checkpoint(const std::string& path) {
  json j = read_json_file(path);
  if (j.value("kind", "") != "inverse") {
    throw DataError("'" + path + "' is not an inverse-model checkpoint");
  }
  InverseCheckpoint ckpt;
  const json& m = j.at("model");
  ModelConfig c;
  c.input_channels = m.at("input_channels").get<std::size_t>();
  c.static_count = m.at("static_count").get<std::size_t>();
  c.hidden_size = m.at("hidden_size").get<std::size_t>();
  c.embedding_size = m.at("embedding_size").get<std::size_t>();
  c.static_hidden = m.at("static_hidden").get<std::size_t>();
  c.placement = placement_from_name(m.at("placement").get<std::string>());
  c.prior_std = m.at("prior_std").get<double>();
  c.candidate_gate_sigmoid = m.at("candidate_gate_sigmoid").get<bool>();

  // Materialize with placeholder values, then overwrite from the file.
  Rng scratch(0);
  ckpt.model = init_inverse_model(c, scratch);
  const json& params = j.at("params");
  for_each_param(ckpt.model, [&](const std::string& name, Tensor& t) {
    if (!params.contains(name)) {
      throw DataError("checkpoint '" + path + "' is missing tensor '" + name +
                      "'");
    }
    Tensor loaded = tensor_from_json(params.at(name));
    if (!loaded.same_shape(t)) {
      throw DataError("checkpoint tensor '" + name + "' has shape " +
                      loaded.shape_string() + ", expected " +
                      t.shape_string());
    }
    t = std::move(loaded);
  });
  ckpt.seed = j.at("seed").get<std::uint64_t>();
  ckpt.norm = norm_from_json(j.at("norm"));
  ckpt.driver_names = j.at("driver_names").get<std::vector<std::string>>();
  ckpt.static_names = j.at("static_names").get<std::vector<std::string>>();
  return ckpt;
}

void save_forward_checkpoint(const std::string& path,
                             const ForwardCheckpoint& ckpt) {
  json j;
  j["format"] = "invbasin-checkpoint";
  j["kind"] = "forward";
  j["version"] = 1;
  j["seed"] = ckpt.seed;
  j["model"] = {{"input_size", ckpt.model.input_size},
                {"hidden_size", ckpt.model.hidden_size}};
  json params = json::object();
  for_each_param(ckpt.model, [&](const std::string& name, const Tensor& t) {
    params[name] = tensor_to_json(t);
  });
  j["params"] = params;
  j["norm"] = norm_to_json(ckpt.norm);
  j["statics_source"] = ckpt.statics_source;
  write_json_file(path, j);
}

ForwardCheckpoint load_forward_checkpoint(const std::string& path) {
  json j = read_json_file(path);
  if (j.value("kind", "") != "forward") {
    throw DataError("'" + path + "' is not a forward-model checkpoint");
  }
  ForwardCheckpoint ckpt;
  Rng scratch(0);
  ckpt.model = init_forward_model(j.at("model").at("input_size").get<std::size_t>(),
                                  j.at("model").at("hidden_size").get<std::size_t>(),
                                  scratch);
  const json& params = j.at("params");
  for_each_param(ckpt.model, [&](const std::string& name, Tensor& t) {
    if (!params.contains(name)) {
      throw DataError("checkpoint '" + path + "' is missing tensor '" + name +
                      "'");
    }
    t = tensor_from_json(params.at(name));
  });
  ckpt.seed = j.at("seed").get<std::uint64_t>();
  ckpt.norm = norm_from_json(j.at("norm"));
  ckpt.statics_source = j.at("statics_source").get<std::string>();
  return ckpt;
}

}  // namespace invbasin
