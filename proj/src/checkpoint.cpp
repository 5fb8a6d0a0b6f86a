#include "sohot/checkpoint.hpp"

#include <fstream>
#include <string>

#include "sohot/errors.hpp"

namespace sohot {

namespace {

using nlohmann::json;

json matrix_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ParseError(0, "checkpoint array size does not match its shape");
  }
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

json stream_json(const StreamParams& p) {
  return json{{"w1", matrix_json(p.w1)}, {"b1", vector_json(p.b1)}, {"w2", matrix_json(p.w2)}, {"b2", vector_json(p.b2)}};
}

StreamParams stream_from(const json& j) {
  return {matrix_from(j.at("w1")), vector_from(j.at("b1")), matrix_from(j.at("w2")), vector_from(j.at("b2"))};
}

}  // namespace

json checkpoint_to_json(const Checkpoint& ckpt) {
  const TwoStreamModel& m = ckpt.model;
  json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["shape"] = {{"input_dim", m.shape.input_dim},
                  {"hidden", m.shape.hidden},
                  {"feature_dim", m.shape.feature_dim},
                  {"num_classes", m.shape.num_classes}};
  doc["hyper"] = {{"lambda", m.lambda}, {"lambda_star", m.lambda_star}, {"beta_prime", m.beta_prime},
                  {"tau", m.tau},       {"dual", m.dual}};
  doc["source_stream"] = stream_json(m.source);
  doc["target_stream"] = stream_json(m.target);
  doc["classifier"] = {{"w", matrix_json(m.w)}, {"b", vector_json(m.b)}};
  if (m.dual) doc["target_classifier"] = {{"w", matrix_json(m.w_star)}, {"b", vector_json(m.b_star)}};

  const AlignmentConfig& a = ckpt.align;
  json zeta = json::array();
  for (const auto& z : a.zeta) zeta.push_back(vector_json(z));
  doc["alignment"] = {{"num_classes", a.num_classes}, {"sigma1", a.sigma1}, {"sigma2", a.sigma2},
                      {"alpha1", a.alpha1},           {"alpha2", a.alpha2}, {"max_order", a.max_order},
                      {"weighted", a.weighted},       {"zeta", zeta},       {"zeta_bar", vector_json(a.zeta_bar)}};
  doc["config"] = ckpt.config;
  return doc;
}

Checkpoint checkpoint_from_json(const json& doc) {
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw ParseError(0, "unsupported checkpoint format version " + std::to_string(version));
    }
    Checkpoint ckpt;
    TwoStreamModel& m = ckpt.model;
    const json& shape = doc.at("shape");
    m.shape = {shape.at("input_dim").get<int>(), shape.at("hidden").get<int>(), shape.at("feature_dim").get<int>(),
               shape.at("num_classes").get<int>()};
    const json& hyper = doc.at("hyper");
    m.lambda = hyper.at("lambda").get<double>();
    m.lambda_star = hyper.at("lambda_star").get<double>();
    m.beta_prime = hyper.at("beta_prime").get<double>();
    m.tau = hyper.at("tau").get<double>();
    m.dual = hyper.at("dual").get<bool>();
    m.source = stream_from(doc.at("source_stream"));
    m.target = stream_from(doc.at("target_stream"));
    m.w = matrix_from(doc.at("classifier").at("w"));
    m.b = vector_from(doc.at("classifier").at("b"));
    if (m.dual) {
      m.w_star = matrix_from(doc.at("target_classifier").at("w"));
      m.b_star = vector_from(doc.at("target_classifier").at("b"));
    }
    m.validate();

    const json& a = doc.at("alignment");
    AlignmentConfig& cfg = ckpt.align;
    cfg.num_classes = a.at("num_classes").get<int>();
    cfg.sigma1 = a.at("sigma1").get<double>();
    cfg.sigma2 = a.at("sigma2").get<double>();
    cfg.alpha1 = a.at("alpha1").get<double>();
    cfg.alpha2 = a.at("alpha2").get<double>();
    cfg.max_order = a.at("max_order").get<int>();
    cfg.weighted = a.at("weighted").get<bool>();
    for (const auto& z : a.at("zeta")) cfg.zeta.push_back(vector_from(z));
    cfg.zeta_bar = vector_from(a.at("zeta_bar"));
    cfg.validate();
    ckpt.config = doc.value("config", json::object());
    return ckpt;
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("malformed checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(0, std::string("inconsistent checkpoint: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ParseError(0, std::string("inconsistent checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open " + path.string() + " for writing");
  out << checkpoint_to_json(checkpoint).dump(1) << '\n';
  if (!out) throw ArgumentError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace sohot
