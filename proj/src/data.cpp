#include "sohot/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

#include "sohot/errors.hpp"

namespace sohot {

namespace {

int max_label(const LabeledSet& set) {
  int top = -1;
  for (int y : set.labels) top = std::max(top, y);
  return top;
}

void sample_class(std::mt19937_64& rng, const Vector& mean, const Matrix& cov, int label, int count,
                  LabeledSet& out, Eigen::Index& col) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw ArgumentError("class covariance is not positive definite");
  const Matrix chol = llt.matrixL();
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(mean.size());
  for (int i = 0; i < count; ++i) {
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = normal(rng);
    out.inputs.col(col) = mean + chol * z;
    out.labels[static_cast<std::size_t>(col)] = label;
    ++col;
  }
}

LabeledSet sample_split(std::mt19937_64& rng, const ShiftSpec& spec, const std::vector<Vector>& means,
                        const std::vector<Matrix>& covs, int per_class) {
  LabeledSet set;
  set.inputs.resize(spec.input_dim, static_cast<Eigen::Index>(per_class) * spec.num_classes);
  set.labels.resize(static_cast<std::size_t>(per_class) * spec.num_classes);
  Eigen::Index col = 0;
  for (int c = 0; c < spec.num_classes; ++c) sample_class(rng, means[c], covs[c], c, per_class, set, col);
  return set;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

double parse_double(std::string_view text, std::size_t line_no, int column) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw ParseError(line_no, "feature f" + std::to_string(column) + " is not a finite number: '" +
                                  std::string(text) + "'");
  }
  return value;
}

void write_split(std::ostream& out, const char* domain, const char* split, const LabeledSet& set) {
  for (Eigen::Index n = 0; n < set.size(); ++n) {
    out << domain << ',' << split << ',' << set.labels[static_cast<std::size_t>(n)];
    for (Eigen::Index k = 0; k < set.dim(); ++k) out << ',' << format_double(set.inputs(k, n));
    out << '\n';
  }
}

}  // namespace

int DomainData::dim() const {
  for (const LabeledSet* set : {&source_train, &source_test, &target_train, &target_test}) {
    if (set->size() > 0) return static_cast<int>(set->dim());
  }
  return 0;
}

int DomainData::num_classes() const {
  int top = -1;
  for (const LabeledSet* set : {&source_train, &source_test, &target_train, &target_test}) {
    top = std::max(top, max_label(*set));
  }
  return top + 1;
}

void ShiftSpec::validate() const {
  if (num_classes < 1 || input_dim < 1) throw ArgumentError("shift spec needs classes >= 1 and dim >= 1");
  if (n_source_train < 0 || n_target_train < 0 || n_source_test < 0 || n_target_test < 0) {
    throw ArgumentError("sample counts must be non-negative");
  }
  const auto classes = static_cast<std::size_t>(num_classes);
  if (source_means.size() != classes || source_covs.size() != classes || rotation.size() != classes ||
      scale.size() != classes || mean_offset.size() != classes) {
    throw ArgumentError("shift spec needs one mean, covariance, rotation, scale and offset per class");
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (source_means[c].size() != input_dim || mean_offset[c].size() != input_dim || scale[c].size() != input_dim ||
        source_covs[c].rows() != input_dim || source_covs[c].cols() != input_dim) {
      throw ArgumentError("class " + std::to_string(c) + " parameters have the wrong dimension");
    }
    if (!source_means[c].allFinite() || !mean_offset[c].allFinite() || !source_covs[c].allFinite() ||
        !scale[c].allFinite()) {
      throw ArgumentError("class " + std::to_string(c) + " parameters must be finite");
    }
    if (!(rotation[c] >= 0.0 && rotation[c] < std::numbers::pi)) {
      throw ArgumentError("rotation angles must lie in [0, pi)");
    }
    if ((scale[c].array() <= 0.0).any()) throw ArgumentError("target scale must be positive");
    if (!source_covs[c].isApprox(source_covs[c].transpose(), 1e-12)) {
      throw ArgumentError("class " + std::to_string(c) + " covariance is not symmetric");
    }
    if (Eigen::LLT<Matrix>(source_covs[c]).info() != Eigen::Success) {
      throw ArgumentError("class " + std::to_string(c) + " covariance is not positive definite");
    }
  }
}

Matrix plane_rotation(int dim, double angle) {
  Matrix rot = Matrix::Identity(dim, dim);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (int plane = 0; plane + 1 < dim && plane <= 2; plane += 2) {
    rot(plane, plane) = c;
    rot(plane, plane + 1) = -s;
    rot(plane + 1, plane) = s;
    rot(plane + 1, plane + 1) = c;
  }
  return rot;
}

// Classes overlap along their long axes, so a few target samples are not
// enough to pin the target decision boundaries on their own.
constexpr double kMeanRadius = 0.8;

ShiftSpec make_shift_spec(const ShiftKnobs& knobs) {
  if (knobs.classes < 1 || knobs.dim < 1) throw ArgumentError("classes and dim must be >= 1");
  if (!(knobs.rot_deg >= 0.0 && knobs.rot_deg < 180.0)) throw ArgumentError("rotation must lie in [0, 180) degrees");
  if (!(knobs.scale > 0.0) || !std::isfinite(knobs.scale)) throw ArgumentError("scale must be positive");
  if (!std::isfinite(knobs.mean_shift) || knobs.mean_shift < 0.0) throw ArgumentError("mean shift must be >= 0");

  ShiftSpec spec;
  spec.num_classes = knobs.classes;
  spec.input_dim = knobs.dim;
  spec.n_source_train = knobs.n_src;
  spec.n_target_train = knobs.n_tgt;
  spec.n_source_test = knobs.n_test;
  spec.n_target_test = knobs.n_test;
  spec.seed = knobs.seed;

  Vector axis_var = Vector::Constant(knobs.dim, 0.03);
  axis_var(0) = 0.8;
  const double radians = knobs.rot_deg * std::numbers::pi / 180.0;
  for (int c = 0; c < knobs.classes; ++c) {
    const double phase = 2.0 * std::numbers::pi * c / knobs.classes;
    Vector mean = Vector::Zero(knobs.dim);
    Vector offset = Vector::Zero(knobs.dim);
    mean(0) = kMeanRadius * std::cos(phase);
    offset(0) = -knobs.mean_shift * std::sin(phase);
    if (knobs.dim > 1) {
      mean(1) = kMeanRadius * std::sin(phase);
      offset(1) = knobs.mean_shift * std::cos(phase);
    } else {
      offset(0) = knobs.mean_shift;
    }
    const Matrix orient = plane_rotation(knobs.dim, std::numbers::pi * c / knobs.classes);
    spec.source_means.push_back(mean);
    spec.source_covs.push_back(orient * axis_var.asDiagonal() * orient.transpose());
    spec.rotation.push_back(radians);
    spec.scale.push_back(Vector::Constant(knobs.dim, knobs.scale));
    spec.mean_offset.push_back(offset);
  }
  return spec;
}

DomainData generate(const ShiftSpec& spec) {
  spec.validate();
  std::vector<Vector> target_means;
  std::vector<Matrix> target_covs;
  for (int c = 0; c < spec.num_classes; ++c) {
    const Matrix rot = plane_rotation(spec.input_dim, spec.rotation[c]);
    const Vector root_scale = spec.scale[c].array().sqrt();
    Matrix cov = root_scale.asDiagonal() * rot * spec.source_covs[c] * rot.transpose() * root_scale.asDiagonal();
    cov = 0.5 * (cov + cov.transpose());
    target_means.push_back(spec.source_means[c] + spec.mean_offset[c]);
    target_covs.push_back(cov);
  }

  std::mt19937_64 rng(spec.seed);
  DomainData data;
  data.source_train = sample_split(rng, spec, spec.source_means, spec.source_covs, spec.n_source_train);
  data.source_test = sample_split(rng, spec, spec.source_means, spec.source_covs, spec.n_source_test);
  data.target_train = sample_split(rng, spec, target_means, target_covs, spec.n_target_train);
  data.target_test = sample_split(rng, spec, target_means, target_covs, spec.n_target_test);
  return data;
}

std::string format_double(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

void save_features(const DomainData& data, std::ostream& out) {
  const int dim = data.dim();
  out << "domain,split,label";
  for (int k = 0; k < dim; ++k) out << ",f" << k;
  out << '\n';
  write_split(out, "source", "train", data.source_train);
  write_split(out, "source", "test", data.source_test);
  write_split(out, "target", "train", data.target_train);
  write_split(out, "target", "test", data.target_test);
}

void save_features(const DomainData& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open " + path.string() + " for writing");
  save_features(data, out);
  if (!out) throw ArgumentError("failed writing " + path.string());
}

DomainData load_features(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw EmptyDatasetError("feature file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 4 || header[0] != "domain" || header[1] != "split" || header[2] != "label") {
    throw ParseError(1, "header must be domain,split,label,f0,...");
  }
  const int dim = static_cast<int>(header.size()) - 3;
  for (int k = 0; k < dim; ++k) {
    if (header[static_cast<std::size_t>(k) + 3] != "f" + std::to_string(k)) {
      throw ParseError(1, "expected column f" + std::to_string(k));
    }
  }

  std::vector<double> columns[4];
  std::vector<int> labels[4];
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw ParseError(line_no, "empty row");
    }
    const auto fields = split_fields(line);
    if (static_cast<int>(fields.size()) != dim + 3) {
      throw ParseError(line_no, "expected " + std::to_string(dim + 3) + " fields, found " +
                                    std::to_string(fields.size()));
    }
    int slot = 0;
    if (fields[0] == "source") {
      slot = 0;
    } else if (fields[0] == "target") {
      slot = 2;
    } else {
      throw ParseError(line_no, "unknown domain '" + std::string(fields[0]) + "'");
    }
    if (fields[1] == "test") {
      slot += 1;
    } else if (fields[1] != "train") {
      throw ParseError(line_no, "unknown split '" + std::string(fields[1]) + "'");
    }
    int label = 0;
    auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), label);
    if (fields[2].empty() || ec != std::errc() || ptr != fields[2].data() + fields[2].size() || label < 0) {
      throw ParseError(line_no, "label must be a non-negative integer");
    }
    labels[slot].push_back(label);
    for (int k = 0; k < dim; ++k) {
      columns[slot].push_back(parse_double(fields[static_cast<std::size_t>(k) + 3], line_no, k));
    }
  }

  DomainData data;
  LabeledSet* sets[4] = {&data.source_train, &data.source_test, &data.target_train, &data.target_test};
  std::size_t rows = 0;
  for (int s = 0; s < 4; ++s) {
    const auto n = static_cast<Eigen::Index>(labels[s].size());
    rows += labels[s].size();
    sets[s]->labels = std::move(labels[s]);
    sets[s]->inputs = Eigen::Map<const Matrix>(columns[s].data(), dim, n);
  }
  if (rows == 0) throw EmptyDatasetError("feature file has a header but no rows");
  return data;
}

DomainData load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  return load_features(in);
}

}  // namespace sohot
