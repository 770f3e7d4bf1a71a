#include "triattn/serialize.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace triattn {

namespace {

using Json = nlohmann::ordered_json;

constexpr int kFormatVersion = 1;

Json matrixToJson(const Matrixd& m) {
  if (m.size() == 0) return nullptr;
  Json out;
  out["rows"] = m.rows();
  out["cols"] = m.cols();
  std::vector<double> flat(m.data(), m.data() + m.size());
  out["data"] = flat;
  return out;
}

Matrixd matrixFromJson(const Json& j, const char* what) {
  if (j.is_null()) return {};
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const std::vector<double> flat = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || Index(flat.size()) != rows * cols) {
    throw std::invalid_argument(std::string(what) +
                                ": data length does not match rows*cols");
  }
  Matrixd m(rows, cols);
  std::copy(flat.begin(), flat.end(), m.data());
  return m;
}

Json vectorToJson(const Vectord& v) {
  if (v.size() == 0) return nullptr;
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vectord vectorFromJson(const Json& j) {
  if (j.is_null()) return {};
  const std::vector<double> flat = j.get<std::vector<double>>();
  Vectord v(Index(flat.size()));
  std::copy(flat.begin(), flat.end(), v.data());
  return v;
}

Json tensorToJson(const Tensor3<double>& t) {
  if (t.size() == 0) return nullptr;
  Json out;
  out["dims"] = {t.dim1(), t.dim2(), t.dim3()};
  std::vector<double> flat(t.vec().data(), t.vec().data() + t.size());
  out["data"] = flat;
  return out;
}

Tensor3<double> tensorFromJson(const Json& j, const char* what) {
  if (j.is_null()) return {};
  const std::vector<Index> dims = j.at("dims").get<std::vector<Index>>();
  const std::vector<double> flat = j.at("data").get<std::vector<double>>();
  if (dims.size() != 3 || dims[0] < 0 || dims[1] < 0 || dims[2] < 0 ||
      Index(flat.size()) != dims[0] * dims[1] * dims[2]) {
    throw std::invalid_argument(std::string(what) +
                                ": data length does not match dims");
  }
  Tensor3<double> t(dims[0], dims[1], dims[2]);
  std::copy(flat.begin(), flat.end(), t.vec().data());
  return t;
}

template <typename Enum, typename Parse>
Enum parseEnumField(const Json& j, const char* key, Parse parse) {
  const std::string text = j.at(key).get<std::string>();
  const auto parsed = parse(text);
  if (!parsed) {
    throw std::invalid_argument("configFromJson: unknown " +
                                std::string(key) + " '" + text + "'");
  }
  return *parsed;
}

}  // namespace

std::string configToJson(const TanConfig& config) {
  Json j;
  j["mode"] = modeName(config.mode);
  j["variant"] = variantName(config.variant);
  j["integration"] = integrationName(config.integration);
  j["layers"] = config.layers;
  j["embed_dim"] = config.embed_dim;
  j["max_seq_len"] = config.max_seq_len;
  j["dropout_rate"] = config.dropout_rate;
  j["residual"] = config.residual;
  j["seed"] = config.seed;
  j["learning_rate"] = config.learning_rate;
  j["batch_size"] = config.batch_size;
  j["epochs"] = config.epochs;
  return j.dump(2) + "\n";
}

TanConfig configFromJson(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& err) {
    throw std::invalid_argument(std::string("configFromJson: ") + err.what());
  }
  if (!j.is_object()) {
    throw std::invalid_argument("configFromJson: top level must be an object");
  }
  TanConfig config;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "mode") {
        config.mode = parseEnumField<NetMode>(j, "mode", parseMode);
      } else if (key == "variant") {
        config.variant = parseEnumField<TriVariant>(j, "variant", parseVariant);
      } else if (key == "integration") {
        config.integration =
            parseEnumField<ValueIntegration>(j, "integration",
                                             parseIntegration);
      } else if (key == "layers") {
        config.layers = value.get<int>();
      } else if (key == "embed_dim") {
        config.embed_dim = value.get<Index>();
      } else if (key == "max_seq_len") {
        config.max_seq_len = value.get<Index>();
      } else if (key == "dropout_rate") {
        config.dropout_rate = value.get<double>();
      } else if (key == "residual") {
        config.residual = value.get<bool>();
      } else if (key == "seed") {
        config.seed = value.get<std::uint64_t>();
      } else if (key == "learning_rate") {
        config.learning_rate = value.get<double>();
      } else if (key == "batch_size") {
        config.batch_size = value.get<int>();
      } else if (key == "epochs") {
        config.epochs = value.get<int>();
      } else {
        throw std::invalid_argument("configFromJson: unknown key '" + key +
                                    "'");
      }
    }
  } catch (const Json::exception& err) {
    throw std::invalid_argument(std::string("configFromJson: ") + err.what());
  }
  return config;
}

std::string stateToJson(const TanState& state) {
  Json j;
  j["format_version"] = kFormatVersion;
  Json enc;
  enc["vocab_size"] = state.encoder.vocab_size;
  enc["embed_dim"] = state.encoder.embed_dim;
  enc["pad_id"] = state.encoder.pad_id;
  enc["cls_id"] = state.encoder.cls_id;
  enc["sep_id"] = state.encoder.sep_id;
  enc["table"] = matrixToJson(state.encoder.table);
  j["encoder"] = std::move(enc);
  Json layers = Json::array();
  for (const TriParams<double>& p : state.layers) {
    Json layer;
    layer["W"] = matrixToJson(p.W);
    layer["U"] = matrixToJson(p.U);
    layer["H"] = matrixToJson(p.H);
    layer["p"] = vectorToJson(p.p);
    layer["Wt"] = tensorToJson(p.Wt);
    layer["Uv"] = matrixToJson(p.Uv);
    layer["Hc"] = matrixToJson(p.Hc);
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  j["classifier_w"] = matrixToJson(state.classifier_w);
  j["classifier_b"] = vectorToJson(state.classifier_b);
  return j.dump(2) + "\n";
}

TanState stateFromJson(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& err) {
    throw std::invalid_argument(std::string("stateFromJson: ") + err.what());
  }
  TanState state;
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw std::invalid_argument("stateFromJson: unsupported format_version " +
                                  std::to_string(version));
    }
    const Json& enc = j.at("encoder");
    state.encoder.vocab_size = enc.at("vocab_size").get<Index>();
    state.encoder.embed_dim = enc.at("embed_dim").get<Index>();
    state.encoder.pad_id = enc.at("pad_id").get<int>();
    state.encoder.cls_id = enc.at("cls_id").get<int>();
    state.encoder.sep_id = enc.at("sep_id").get<int>();
    state.encoder.table = matrixFromJson(enc.at("table"), "encoder.table");
    if (state.encoder.table.rows() != state.encoder.embed_dim ||
        state.encoder.table.cols() != state.encoder.vocab_size) {
      throw std::invalid_argument(
          "stateFromJson: table shape does not match encoder dims");
    }
    for (const Json& layer : j.at("layers")) {
      TriParams<double> p;
      p.W = matrixFromJson(layer.at("W"), "layer.W");
      p.U = matrixFromJson(layer.at("U"), "layer.U");
      p.H = matrixFromJson(layer.at("H"), "layer.H");
      p.p = vectorFromJson(layer.at("p"));
      p.Wt = tensorFromJson(layer.at("Wt"), "layer.Wt");
      p.Uv = matrixFromJson(layer.at("Uv"), "layer.Uv");
      p.Hc = matrixFromJson(layer.at("Hc"), "layer.Hc");
      state.layers.push_back(std::move(p));
    }
    state.classifier_w =
        matrixFromJson(j.at("classifier_w"), "classifier_w");
    state.classifier_b = vectorFromJson(j.at("classifier_b"));
  } catch (const Json::exception& err) {
    throw std::invalid_argument(std::string("stateFromJson: ") + err.what());
  }
  return state;
}

void saveModel(const std::string& path, const TanState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("saveModel: cannot open " + path);
  }
  out << stateToJson(state);
  if (!out) {
    throw std::runtime_error("saveModel: write failed for " + path);
  }
}

TanState loadModel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("loadModel: cannot open " + path);
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return stateFromJson(text);
}

}  // namespace triattn
