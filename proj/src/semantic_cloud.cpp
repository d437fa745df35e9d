#include "shpc/semantic_cloud.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace shpc {

bool ClassCatalog::is_safe(int c) const { return std::find(safe.begin(), safe.end(), c) != safe.end(); }

void ClassCatalog::validate() const {
  const int C = size();
  if (C < 2) throw std::invalid_argument("class catalog needs at least 2 classes");
  std::vector<int> seen(static_cast<std::size_t>(C), 0);
  for (int c : safe) {
    if (c < 0 || c >= C) throw std::invalid_argument("safe class index out of range");
    seen[static_cast<std::size_t>(c)] += 1;
  }
  for (int c : unsafe) {
    if (c < 0 || c >= C) throw std::invalid_argument("unsafe class index out of range");
    seen[static_cast<std::size_t>(c)] += 2;
  }
  for (int s : seen) {
    if (s == 0) throw std::invalid_argument("safe and unsafe sets must cover every class");
    if (s != 1 && s != 2) throw std::invalid_argument("safe and unsafe sets must be disjoint");
  }
}

ClassCatalog ClassCatalog::from_safe_set(std::vector<std::string> names, std::vector<int> safe) {
  ClassCatalog cat;
  cat.names = std::move(names);
  std::sort(safe.begin(), safe.end());
  cat.safe = std::move(safe);
  for (int c = 0; c < cat.size(); ++c) {
    if (!cat.is_safe(c)) cat.unsafe.push_back(c);
  }
  cat.validate();
  return cat;
}

void SafetyParams::validate() const {
  if (!(theta_safe > 0.0 && theta_safe <= 1.0)) throw std::invalid_argument("theta_safe must lie in (0, 1]");
  if (!(theta_unsafe > 0.0 && theta_unsafe <= 1.0)) throw std::invalid_argument("theta_unsafe must lie in (0, 1]");
  if (!(w_sigma >= 0.0)) throw std::invalid_argument("w_sigma must be non-negative");
  if (!(1.0 - theta_safe < theta_unsafe)) {
    throw std::invalid_argument("thresholds violate 1 - theta_safe < theta_unsafe");
  }
}

const char* to_string(SafetyLabel label) {
  switch (label) {
    case SafetyLabel::Safe:
      return "safe";
    case SafetyLabel::Unsafe:
      return "unsafe";
    case SafetyLabel::Unclear:
      return "unclear";
  }
  return "?";
}

const char* to_string(FusionMode mode) {
  return mode == FusionMode::MeasurementNormalized ? "measurement_normalized" : "literal_paper";
}

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "measurement_normalized") return FusionMode::MeasurementNormalized;
  if (s == "literal_paper") return FusionMode::LiteralPaper;
  throw std::invalid_argument("unknown fusion mode '" + s + "'");
}

SafetyAggregate aggregate_safety(const Eigen::Ref<const Eigen::VectorXd>& probs,
                                 const Eigen::Ref<const Eigen::VectorXd>& uncerts, const ClassCatalog& catalog) {
  double ps = 0.0, pu = 0.0, vs = 0.0, vu = 0.0;
  for (int c : catalog.safe) {
    ps += probs[c];
    vs += uncerts[c] * uncerts[c];
  }
  for (int c : catalog.unsafe) {
    pu += probs[c];
    vu += uncerts[c] * uncerts[c];
  }
  return {ps, pu, std::min(std::sqrt(vs), std::sqrt(vu))};
}

SafetyAggregate aggregate_safety(const SemanticPoint& point, const ClassCatalog& catalog) {
  return aggregate_safety(point.probs, point.uncerts, catalog);
}

SafetyLabel classify_point(const Eigen::Ref<const Eigen::VectorXd>& probs,
                           const Eigen::Ref<const Eigen::VectorXd>& uncerts, const ClassCatalog& catalog,
                           const SafetyParams& params) {
  const SafetyAggregate a = aggregate_safety(probs, uncerts, catalog);
  const double margin = params.w_sigma * a.sigma;
  const bool safe = a.p_safe - margin >= params.theta_safe;
  const bool unsafe = a.p_unsafe - margin >= params.theta_unsafe;
  if (safe && unsafe) throw std::logic_error("safe and unsafe conditions both hold; thresholds invalid");
  if (safe) return SafetyLabel::Safe;
  if (unsafe) return SafetyLabel::Unsafe;
  return SafetyLabel::Unclear;
}

SafetyLabel classify_point(const SemanticPoint& point, const ClassCatalog& catalog, const SafetyParams& params) {
  return classify_point(point.probs, point.uncerts, catalog, params);
}

void FusionAccumulator::add(const Eigen::Ref<const Eigen::VectorXd>& probs,
                            const Eigen::Ref<const Eigen::VectorXd>& uncerts) {
  for (Eigen::Index c = 0; c < probs.size(); ++c) {
    const double s = std::max(uncerts[c], kSigmaFloor);
    const double w = 1.0 / (s * s);
    inv_var[c] += w;
    weighted[c] += w * probs[c];
  }
}

void FusionAccumulator::result(Eigen::Ref<Eigen::VectorXd> probs, Eigen::Ref<Eigen::VectorXd> uncerts) const {
  probs = weighted.cwiseQuotient(inv_var);
  probs /= probs.sum();
  uncerts = inv_var.cwiseSqrt().cwiseInverse();
}

namespace {

void check_measurement(const ClassMeasurement& m, Eigen::Index C) {
  if (m.probs.size() != C || m.uncerts.size() != C) {
    throw std::invalid_argument("measurement class count mismatch");
  }
}

ClassMeasurement fuse_literal(std::span<const ClassMeasurement> history) {
  const Eigen::Index C = history.front().probs.size();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(C);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(C);
  for (const ClassMeasurement& m : history) {
    const Eigen::VectorXd s = m.uncerts.cwiseMax(kSigmaFloor);
    const Eigen::VectorXd inv = s.cwiseProduct(s).cwiseInverse();
    const Eigen::VectorXd w = inv / inv.sum();  // normalized across classes
    p += w.cwiseProduct(m.probs);
    var += w.cwiseProduct(w).cwiseProduct(s).cwiseProduct(s);
  }
  return {p / p.sum(), var.cwiseSqrt()};
}

}  // namespace

ClassMeasurement fuse_class_measurements(std::span<const ClassMeasurement> history, FusionMode mode) {
  if (history.empty()) throw std::invalid_argument("cannot fuse an empty measurement history");
  const Eigen::Index C = history.front().probs.size();
  for (const auto& m : history) check_measurement(m, C);
  if (mode == FusionMode::LiteralPaper) return fuse_literal(history);
  if (history.size() == 1) return history.front();
  FusionAccumulator acc(static_cast<int>(C));
  for (const auto& m : history) acc.add(m.probs, m.uncerts);
  ClassMeasurement out{Eigen::VectorXd(C), Eigen::VectorXd(C)};
  acc.result(out.probs, out.uncerts);
  return out;
}

void ViewMeasurement::validate(int num_classes) const {
  const Eigen::Index n = static_cast<Eigen::Index>(width) * height;
  if (width <= 0 || height <= 0) throw std::invalid_argument("view has empty image");
  if (depth.rows() != height || depth.cols() != width) throw std::invalid_argument("depth map size mismatch");
  if (probs.rows() != num_classes || probs.cols() != n || uncerts.rows() != num_classes || uncerts.cols() != n) {
    throw std::invalid_argument("semantic map size mismatch");
  }
}

SemanticPointCloud SemanticPointCloud::init(const Eigen::Matrix3Xd& positions, ClassCatalog catalog, FusionMode mode) {
  catalog.validate();
  if (positions.cols() == 0) throw std::invalid_argument("cannot build a cloud from no points");
  if (!positions.allFinite()) throw std::invalid_argument("non-finite point coordinate");

  SemanticPointCloud cloud;
  const Eigen::Index N = positions.cols();
  const int C = catalog.size();
  cloud.catalog_ = std::move(catalog);
  cloud.mode_ = mode;
  cloud.positions_ = positions;
  cloud.probs_ = Eigen::MatrixXd::Constant(C, N, 1.0 / C);
  cloud.uncerts_ = Eigen::MatrixXd::Constant(C, N, kInitialSigma);
  cloud.counts_.assign(static_cast<std::size_t>(N), 0);
  cloud.index_ = KdTree(positions);

  const double prior_w = 1.0 / (kInitialSigma * kInitialSigma);
  if (mode == FusionMode::MeasurementNormalized) {
    cloud.inv_var_ = Eigen::MatrixXd::Constant(C, N, prior_w);
    cloud.weighted_ = Eigen::MatrixXd::Constant(C, N, prior_w / C);
  } else {
    cloud.history_.resize(static_cast<std::size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i) {
      cloud.history_[static_cast<std::size_t>(i)].push_back({cloud.probs_.col(i), cloud.uncerts_.col(i)});
    }
  }

  cloud.resolution_ = median_spacing(positions, cloud.index_);
  return cloud;
}

SemanticPoint SemanticPointCloud::point(std::size_t i) const {
  const auto col = static_cast<Eigen::Index>(i);
  return {positions_.col(col), probs_.col(col), uncerts_.col(col), counts_[i]};
}

int SemanticPointCloud::argmax_class(std::size_t i) const {
  Eigen::Index best = 0;
  probs_.col(static_cast<Eigen::Index>(i)).maxCoeff(&best);  // first maximum
  return static_cast<int>(best);
}

void SemanticPointCloud::set_state(std::size_t i, const Eigen::Ref<const Eigen::VectorXd>& probs,
                                   const Eigen::Ref<const Eigen::VectorXd>& uncerts, std::uint32_t measurement_count) {
  const auto col = static_cast<Eigen::Index>(i);
  if (probs.size() != num_classes() || uncerts.size() != num_classes()) {
    throw std::invalid_argument("state class count mismatch");
  }
  probs_.col(col) = probs;
  uncerts_.col(col) = uncerts;
  counts_[i] = measurement_count;
  if (mode_ == FusionMode::MeasurementNormalized) {
    FusionAccumulator acc(num_classes());
    acc.add(probs, uncerts);
    inv_var_.col(col) = acc.inv_var;
    weighted_.col(col) = acc.weighted;
  } else {
    history_[i].assign(1, ClassMeasurement{probs, uncerts});
  }
}

void SemanticPointCloud::refuse(std::size_t i) {
  const auto col = static_cast<Eigen::Index>(i);
  if (mode_ == FusionMode::MeasurementNormalized) {
    probs_.col(col) = weighted_.col(col).cwiseQuotient(inv_var_.col(col));
    probs_.col(col) /= probs_.col(col).sum();
    uncerts_.col(col) = inv_var_.col(col).cwiseSqrt().cwiseInverse();
  } else {
    const ClassMeasurement fused = fuse_class_measurements(history_[i], mode_);
    probs_.col(col) = fused.probs;
    uncerts_.col(col) = fused.uncerts;
  }
}

IntegrationReport SemanticPointCloud::integrate_view(const ViewMeasurement& view, double merge_radius) {
  view.validate(num_classes());
  IntegrationReport report;
  const double r2 = merge_radius * merge_radius;
  std::vector<std::size_t> touched;

  for (int row = 0; row < view.height; ++row) {
    for (int col = 0; col < view.width; ++col) {
      if (!view.valid_pixel(col, row)) {
        ++report.discarded;
        continue;
      }
      const Eigen::Vector3d m =
          backproject_pixel(col + 0.5, row + 0.5, view.depth(row, col), view.K, view.pose);
      const auto nn = index_.nearest(m);
      if (!nn || !(nn->dist2 <= r2)) {
        ++report.discarded;
        continue;
      }
      const std::size_t i = nn->index;
      const Eigen::Index pix = static_cast<Eigen::Index>(row) * view.width + col;
      if (mode_ == FusionMode::MeasurementNormalized) {
        for (int c = 0; c < num_classes(); ++c) {
          const double s = std::max(view.uncerts(c, pix), kSigmaFloor);
          const double w = 1.0 / (s * s);
          inv_var_(c, static_cast<Eigen::Index>(i)) += w;
          weighted_(c, static_cast<Eigen::Index>(i)) += w * view.probs(c, pix);
        }
      } else {
        history_[i].push_back({view.probs.col(pix), view.uncerts.col(pix)});
      }
      ++counts_[i];
      touched.push_back(i);
      ++report.merged;
    }
  }

  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  for (std::size_t i : touched) refuse(i);
  return report;
}

IntegrationReport integrate_view(SemanticPointCloud& cloud, const ViewMeasurement& view, double merge_radius,
                                 FusionMode mode) {
  if (mode != cloud.fusion_mode()) throw std::logic_error("fusion mode differs from the cloud's mode");
  return cloud.integrate_view(view, merge_radius);
}

std::size_t SafetyPartition::count(SafetyLabel label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

std::vector<std::size_t> SafetyPartition::indices(SafetyLabel label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) out.push_back(i);
  }
  return out;
}

SafetyPartition partition_cloud(const SemanticPointCloud& cloud, const SafetyParams& params) {
  params.validate();
  SafetyPartition part;
  part.labels.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    part.labels[i] = classify_point(cloud.probs().col(col), cloud.uncerts().col(col), cloud.catalog(), params);
  }
  return part;
}

// --- SHPC1 serialization ----------------------------------------------------

namespace {

constexpr char kMagic[5] = {'S', 'H', 'P', 'C', '1'};

template <typename T>
void put(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  U bits = std::bit_cast<U>(value);
  char bytes[sizeof(T)];
  for (std::size_t b = 0; b < sizeof(T); ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  out.write(bytes, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw std::runtime_error("truncated SHPC1 stream");
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) bits |= static_cast<U>(bytes[b]) << (8 * b);
  return std::bit_cast<T>(bits);
}

}  // namespace

void write_cloud(std::ostream& out, const SemanticPointCloud& cloud) {
  const ClassCatalog& cat = cloud.catalog();
  out.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(out, cloud.size());
  put<std::uint16_t>(out, static_cast<std::uint16_t>(cat.size()));
  for (const std::string& name : cat.names) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  // Safe-set membership is needed to rebuild the catalog: one byte per class.
  for (int c = 0; c < cat.size(); ++c) out.put(cat.is_safe(c) ? 1 : 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    for (int k = 0; k < 3; ++k) put<double>(out, cloud.positions()(k, col));
    for (int c = 0; c < cat.size(); ++c) put<float>(out, static_cast<float>(cloud.probs()(c, col)));
    for (int c = 0; c < cat.size(); ++c) put<float>(out, static_cast<float>(cloud.uncerts()(c, col)));
    put<std::uint32_t>(out, cloud.measurement_count(i));
  }
  if (!out) throw std::runtime_error("failed writing SHPC1 stream");
}

SemanticPointCloud read_cloud(std::istream& in) {
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0) throw std::runtime_error("not an SHPC1 cloud");
  const auto n = get<std::uint64_t>(in);
  const auto C = get<std::uint16_t>(in);
  std::vector<std::string> names(C);
  for (auto& name : names) {
    const auto len = get<std::uint16_t>(in);
    name.resize(len);
    if (!in.read(name.data(), len)) throw std::runtime_error("truncated SHPC1 class name");
  }
  std::vector<int> safe;
  for (int c = 0; c < C; ++c) {
    const int flag = in.get();
    if (flag == std::char_traits<char>::eof()) throw std::runtime_error("truncated SHPC1 header");
    if (flag) safe.push_back(c);
  }
  if (n == 0) throw std::runtime_error("SHPC1 cloud has no points");

  Eigen::Matrix3Xd pos(3, static_cast<Eigen::Index>(n));
  Eigen::MatrixXd probs(C, static_cast<Eigen::Index>(n));
  Eigen::MatrixXd unc(C, static_cast<Eigen::Index>(n));
  std::vector<std::uint32_t> counts(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    for (int k = 0; k < 3; ++k) pos(k, col) = get<double>(in);
    for (int c = 0; c < C; ++c) probs(c, col) = get<float>(in);
    for (int c = 0; c < C; ++c) unc(c, col) = get<float>(in);
    counts[i] = get<std::uint32_t>(in);
  }
  SemanticPointCloud cloud = SemanticPointCloud::init(pos, ClassCatalog::from_safe_set(std::move(names), safe));
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    if (counts[i] > 0) cloud.set_state(i, probs.col(col), unc.col(col), counts[i]);
  }
  return cloud;
}

void save_cloud(const std::string& path, const SemanticPointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_cloud(out, cloud);
}

SemanticPointCloud load_cloud(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_cloud(in);
}

}  // namespace shpc
