#include "jstn/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace jstn {

namespace fs = std::filesystem;
using nlohmann::json;

const char* domain_role_name(DomainRole r) {
  switch (r) {
    case DomainRole::SN: return "SN";
    case DomainRole::SI: return "SI";
    case DomainRole::TL: return "TL";
    case DomainRole::TU: return "TU";
    case DomainRole::T: return "T";
  }
  return "?";
}

DomainRole parse_domain_role(const std::string& s) {
  if (s == "SN") return DomainRole::SN;
  if (s == "SI") return DomainRole::SI;
  if (s == "TL") return DomainRole::TL;
  if (s == "TU") return DomainRole::TU;
  if (s == "T") return DomainRole::T;
  throw DataError("unknown domain role: '" + s + "'");
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& cell, long row,
                    const std::string& column) {
  const std::string t = trim(cell);
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || t.empty()) {
    throw DataError("non-numeric value '" + cell + "' at row " +
                    std::to_string(row) + ", column '" + column + "'");
  }
  return v;
}

}  // namespace

DomainDataset load_csv(const std::string& path, const CsvSchema& schema,
                       const std::string& name, DomainRole role) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV file: " + path);

  const auto header = split_line(line, schema.delimiter);
  std::map<std::string, int> col_index;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string h = trim(header[i]);
    if (col_index.count(h)) {
      throw DataError("duplicate header name '" + h + "' in " + path);
    }
    col_index[h] = static_cast<int>(i);
  }

  const bool want_labels = !schema.label_column.empty();
  int label_col = -1;
  if (want_labels) {
    auto it = col_index.find(schema.label_column);
    if (it == col_index.end()) {
      throw DataError("missing label column '" + schema.label_column +
                      "' in " + path);
    }
    label_col = it->second;
  } else if (role != DomainRole::TU) {
    throw DataError("role " + std::string(domain_role_name(role)) +
                    " requires a label column (" + path + ")");
  }

  std::vector<int> feat_cols;
  for (const auto& fc : schema.feature_columns) {
    auto it = col_index.find(fc);
    if (it == col_index.end()) {
      throw DataError("missing feature column '" + fc + "' in " + path);
    }
    feat_cols.push_back(it->second);
  }
  if (feat_cols.empty()) throw DataError("no feature columns given for " + path);

  std::vector<std::vector<double>> rows_values;
  std::vector<int> labels;
  long row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line, schema.delimiter);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row_no) + " has " +
                      std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(header.size()) + " (" + path + ")");
    }
    std::vector<double> vals;
    vals.reserve(feat_cols.size());
    for (std::size_t i = 0; i < feat_cols.size(); ++i) {
      vals.push_back(parse_number(cells[static_cast<std::size_t>(feat_cols[i])],
                                  row_no, schema.feature_columns[i]));
    }
    rows_values.push_back(std::move(vals));
    if (want_labels) {
      const std::string raw = trim(cells[static_cast<std::size_t>(label_col)]);
      auto it = schema.class_map.find(raw);
      if (it == schema.class_map.end()) {
        throw DataError("unmapped label '" + raw + "' at row " +
                        std::to_string(row_no) + " (" + path + ")");
      }
      labels.push_back(it->second);
    }
  }
  if (rows_values.empty()) throw DataError("no data rows in " + path);

  DomainDataset ds;
  ds.name = name;
  ds.role = role;
  ds.X = Matrix(static_cast<Eigen::Index>(rows_values.size()),
                static_cast<Eigen::Index>(feat_cols.size()));
  for (std::size_t r = 0; r < rows_values.size(); ++r) {
    for (std::size_t c = 0; c < rows_values[r].size(); ++c) {
      ds.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows_values[r][c];
    }
  }
  if (role == DomainRole::TU) {
    ds.y_eval = std::move(labels);
  } else {
    ds.y = std::move(labels);
  }
  return ds;
}

void save_csv(const DomainDataset& ds, const std::string& path,
              const CsvSchema& schema) {
  if (static_cast<Eigen::Index>(schema.feature_columns.size()) != ds.dim()) {
    throw UsageError("save_csv: schema feature count does not match dataset");
  }
  std::map<int, std::string> id_to_name;
  for (const auto& [name, id] : schema.class_map) {
    if (!id_to_name.count(id)) id_to_name[id] = name;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write CSV: " + path);
  const bool with_labels = !ds.y.empty() || !ds.y_eval.empty();
  for (std::size_t i = 0; i < schema.feature_columns.size(); ++i) {
    out << schema.feature_columns[i];
    if (i + 1 < schema.feature_columns.size() || with_labels) {
      out << schema.delimiter;
    }
  }
  if (with_labels) out << schema.label_column;
  out << "\n";
  const std::vector<int>& labels = ds.y.empty() ? ds.y_eval : ds.y;
  for (Eigen::Index r = 0; r < ds.n(); ++r) {
    for (Eigen::Index c = 0; c < ds.dim(); ++c) {
      out << double_to_str(ds.X(r, c));
      if (c + 1 < ds.dim() || with_labels) out << schema.delimiter;
    }
    if (with_labels) {
      auto it = id_to_name.find(labels[static_cast<std::size_t>(r)]);
      if (it == id_to_name.end()) {
        throw DataError("save_csv: class id " +
                        std::to_string(labels[static_cast<std::size_t>(r)]) +
                        " missing from class map");
      }
      out << it->second;
    }
    out << "\n";
  }
}

NormStats compute_norm_stats(const DomainDataset& ds) {
  if (ds.n() == 0) throw DataError("compute_norm_stats: empty dataset");
  NormStats st;
  st.mean = ds.X.colwise().mean();
  st.std = Vector(ds.dim());
  for (Eigen::Index c = 0; c < ds.dim(); ++c) {
    const double var =
        (ds.X.col(c).array() - st.mean(c)).square().sum() /
        static_cast<double>(ds.n());
    const double sd = std::sqrt(var);
    st.std(c) = sd > 0.0 ? sd : 1.0;
  }
  return st;
}

void apply_norm(const NormStats& stats, DomainDataset& ds) {
  if (stats.mean.size() != ds.dim()) {
    throw DimensionError("apply_norm: stats width " +
                         std::to_string(stats.mean.size()) + " vs data " +
                         std::to_string(ds.dim()));
  }
  for (Eigen::Index c = 0; c < ds.dim(); ++c) {
    ds.X.col(c) = (ds.X.col(c).array() - stats.mean(c)) / stats.std(c);
  }
  ds.feature_mean = stats.mean;
  ds.feature_std = stats.std;
  ds.normalized = true;
}

namespace {

DomainDataset take_rows(const DomainDataset& src,
                        const std::vector<int>& indices, DomainRole role,
                        bool labels_to_eval) {
  DomainDataset out;
  out.name = src.name;
  out.role = role;
  out.X = Matrix(static_cast<Eigen::Index>(indices.size()), src.dim());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = src.X.row(indices[i]);
  }
  const std::vector<int>& labels = src.y.empty() ? src.y_eval : src.y;
  if (!labels.empty()) {
    auto& dst = labels_to_eval ? out.y_eval : out.y;
    dst.reserve(indices.size());
    for (int i : indices) dst.push_back(labels[static_cast<std::size_t>(i)]);
  }
  out.feature_mean = src.feature_mean;
  out.feature_std = src.feature_std;
  out.normalized = src.normalized;
  return out;
}

// Largest-remainder apportionment of `total` over strata proportional to
// their sizes; deterministic, preserves proportions within one instance.
std::vector<long> apportion(const std::vector<long>& sizes, long total) {
  const long n = std::accumulate(sizes.begin(), sizes.end(), 0L);
  std::vector<long> quota(sizes.size(), 0);
  if (n == 0 || total <= 0) return quota;
  std::vector<std::pair<double, std::size_t>> remainders;
  long assigned = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const double share = static_cast<double>(sizes[k]) *
                         static_cast<double>(total) / static_cast<double>(n);
    quota[k] = static_cast<long>(std::floor(share));
    assigned += quota[k];
    remainders.push_back({share - std::floor(share), k});
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i) {
    quota[remainders[i].second] += 1;
    ++assigned;
  }
  return quota;
}

}  // namespace

std::pair<DomainDataset, DomainDataset> split_target(
    const DomainDataset& full, const SplitSpec& spec) {
  if (spec.ratio_labeled <= 0 || spec.ratio_unlabeled <= 0) {
    throw ParameterError("split_target: ratio parts must be positive");
  }
  const std::vector<int>& labels = full.y.empty() ? full.y_eval : full.y;
  if (labels.empty()) {
    throw DataError("split_target: target labels required for splitting");
  }
  const long n = full.n();
  const long total_tl = std::lround(
      static_cast<double>(n) * spec.ratio_labeled /
      static_cast<double>(spec.ratio_labeled + spec.ratio_unlabeled));

  Rng rng(mix_seed(spec.seed, 0x73706c6974ULL));  // "split" stream
  std::vector<int> tl_idx, tu_idx;

  if (spec.stratified) {
    const int num_classes = *std::max_element(labels.begin(), labels.end());
    std::vector<std::vector<int>> by_class(
        static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      by_class[static_cast<std::size_t>(labels[i] - 1)].push_back(
          static_cast<int>(i));
    }
    std::vector<long> sizes;
    for (const auto& v : by_class) sizes.push_back(static_cast<long>(v.size()));
    const auto quota = apportion(sizes, total_tl);
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      auto& idx = by_class[k];
      if (idx.empty()) continue;
      if (quota[k] == 0) {
        warn("split_target: class " + std::to_string(k + 1) +
             " receives no labelled instance at this ratio");
      }
      rng.shuffle(idx);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        (static_cast<long>(i) < quota[k] ? tl_idx : tu_idx).push_back(idx[i]);
      }
    }
  } else {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    tl_idx.assign(idx.begin(), idx.begin() + total_tl);
    tu_idx.assign(idx.begin() + total_tl, idx.end());
  }
  std::sort(tl_idx.begin(), tl_idx.end());
  std::sort(tu_idx.begin(), tu_idx.end());

  DomainDataset tl = take_rows(full, tl_idx, DomainRole::TL, false);
  DomainDataset tu = take_rows(full, tu_idx, DomainRole::TU, true);
  tl.name = full.name + "_tl";
  tu.name = full.name + "_tu";
  return {std::move(tl), std::move(tu)};
}

DomainDataset subsample_stratified(const DomainDataset& ds, long n_keep,
                                   std::uint64_t seed) {
  if (n_keep <= 0) throw ParameterError("subsample: n_keep must be positive");
  if (n_keep >= ds.n()) return ds;
  Rng rng(mix_seed(seed, 0x737562ULL));  // "sub" stream
  const std::vector<int>& labels = ds.y.empty() ? ds.y_eval : ds.y;
  std::vector<int> keep;
  if (labels.empty()) {
    std::vector<int> idx(static_cast<std::size_t>(ds.n()));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    keep.assign(idx.begin(), idx.begin() + n_keep);
  } else {
    const int num_classes = *std::max_element(labels.begin(), labels.end());
    std::vector<std::vector<int>> by_class(
        static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      by_class[static_cast<std::size_t>(labels[i] - 1)].push_back(
          static_cast<int>(i));
    }
    std::vector<long> sizes;
    for (const auto& v : by_class) sizes.push_back(static_cast<long>(v.size()));
    const auto quota = apportion(sizes, n_keep);
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      auto& idx = by_class[k];
      rng.shuffle(idx);
      for (long i = 0; i < quota[k] && i < static_cast<long>(idx.size()); ++i) {
        keep.push_back(idx[static_cast<std::size_t>(i)]);
      }
    }
  }
  std::sort(keep.begin(), keep.end());
  DomainDataset out = take_rows(ds, keep, ds.role, ds.y.empty());
  out.name = ds.name;
  return out;
}

void SynthSpec::validate() const {
  if (num_classes < 2) throw ParameterError("synth: need at least 2 classes");
  if (per_class_sn <= 0 || per_class_si <= 0 || per_class_t <= 0) {
    throw ParameterError("synth: per-class counts must be positive");
  }
  if (d_sn <= 0 || d_si <= 0 || d_t <= 0 || latent_dim <= 0) {
    throw ParameterError("synth: dimensions must be positive");
  }
  if (latent_dim > std::min({d_sn, d_si, d_t})) {
    throw ParameterError("synth: latent_dim must not exceed any domain dim");
  }
  if (separation < 0 || cluster_std < 0 || class_jitter < 0 ||
      domain_shift < 0 || feature_noise < 0) {
    throw ParameterError("synth: scales must be non-negative");
  }
}

namespace {

// d_latent x d_out with orthonormal rows, so latent distances are preserved.
Matrix orthonormal_map(int d_latent, int d_out, Rng& rng) {
  Matrix m(d_latent, d_out);
  for (int r = 0; r < d_latent; ++r) {
    for (int c = 0; c < d_out; ++c) m(r, c) = rng.gaussian();
    for (int p = 0; p < r; ++p) {
      m.row(r) -= m.row(r).dot(m.row(p)) * m.row(p);
    }
    const double norm = m.row(r).norm();
    if (norm < 1e-12) {
      // Degenerate draw; retry the row.
      --r;
      continue;
    }
    m.row(r) /= norm;
  }
  return m;
}

DomainDataset synth_domain(const SynthSpec& spec, const Matrix& centers,
                           int d_out, int per_class, const std::string& name,
                           DomainRole role, Rng& rng) {
  const int k = spec.num_classes;
  const Eigen::Index n = static_cast<Eigen::Index>(k) * per_class;
  const Matrix map = orthonormal_map(spec.latent_dim, d_out, rng);

  Eigen::RowVectorXd shift = Eigen::RowVectorXd::Zero(d_out);
  for (int c = 0; c < d_out; ++c) {
    shift(c) = spec.domain_shift * rng.gaussian();
  }
  // Domain-specific per-class latent offsets (conditional shift).
  Matrix jitter = Matrix::Zero(k, spec.latent_dim);
  for (int kk = 0; kk < k; ++kk) {
    for (int c = 0; c < spec.latent_dim; ++c) {
      jitter(kk, c) = spec.class_jitter * rng.gaussian();
    }
  }

  DomainDataset ds;
  ds.name = name;
  ds.role = role;
  ds.X = Matrix(n, d_out);
  ds.y.reserve(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (int kk = 0; kk < k; ++kk) {
    for (int i = 0; i < per_class; ++i, ++row) {
      Eigen::RowVectorXd z = centers.row(kk) + jitter.row(kk);
      for (int c = 0; c < spec.latent_dim; ++c) {
        z(c) += spec.cluster_std * rng.gaussian();
      }
      Eigen::RowVectorXd x = z * map + shift;
      for (int c = 0; c < d_out; ++c) {
        x(c) += spec.feature_noise * rng.gaussian();
      }
      ds.X.row(row) = x;
      ds.y.push_back(kk + 1);
    }
  }
  return ds;
}

}  // namespace

SynthResult synth_domains(const SynthSpec& spec) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, 0x73796e7468ULL));  // "synth" stream

  Matrix centers(spec.num_classes, spec.latent_dim);
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int c = 0; c < spec.latent_dim; ++c) centers(k, c) = rng.gaussian();
  }
  double min_dist = std::numeric_limits<double>::infinity();
  for (int a = 0; a < spec.num_classes; ++a) {
    for (int b = a + 1; b < spec.num_classes; ++b) {
      min_dist = std::min(min_dist, (centers.row(a) - centers.row(b)).norm());
    }
  }
  const double unit = spec.cluster_std > 0.0 ? spec.cluster_std : 1.0;
  const double target = spec.separation * unit;
  if (min_dist > 0.0 && target > 0.0) {
    centers *= target / min_dist;
  }

  SynthResult out;
  out.latent_centers = centers;
  out.sn = synth_domain(spec, centers, spec.d_sn, spec.per_class_sn,
                        "synth_sn", DomainRole::SN, rng);
  out.si = synth_domain(spec, centers, spec.d_si, spec.per_class_si,
                        "synth_si", DomainRole::SI, rng);
  out.target_full = synth_domain(spec, centers, spec.d_t, spec.per_class_t,
                                 "synth_target", DomainRole::T, rng);
  return out;
}

SynthSpec preset_synth(const std::string& name, std::uint64_t seed) {
  SynthSpec s;
  s.seed = seed;
  if (name == "separable") {
    s.separation = 3.0;
    s.cluster_std = 1.0;
    s.class_jitter = 0.25;
    s.domain_shift = 1.0;
    s.feature_noise = 0.6;
  } else if (name == "hard") {
    s.per_class_sn = 120;
    s.per_class_si = 60;
    s.per_class_t = 120;
    s.separation = 2.4;
    s.cluster_std = 1.0;
    s.class_jitter = 0.55;
    s.domain_shift = 1.5;
    s.feature_noise = 0.9;
  } else if (name == "toy") {
    s.per_class_sn = 20;
    s.per_class_si = 20;
    s.per_class_t = 20;
    s.separation = 4.0;
    s.cluster_std = 1.0;
    s.class_jitter = 0.2;
    s.domain_shift = 0.5;
    s.feature_noise = 0.3;
  } else {
    throw ParameterError("unknown synth preset: '" + name + "'");
  }
  return s;
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("manifest parse error in " + path + ": " + e.what());
  }
  Manifest m;
  if (!j.contains("class_map") || !j["class_map"].is_object()) {
    throw DataError("manifest missing class_map object");
  }
  for (const auto& [name, id] : j["class_map"].items()) {
    if (!id.is_number_integer() || id.get<int>() < 1) {
      throw DataError("class_map entry '" + name +
                      "' must map to a positive integer");
    }
    m.class_map[name] = id.get<int>();
  }
  if (!j.contains("domains") || !j["domains"].is_array()) {
    throw DataError("manifest missing domains array");
  }
  const fs::path base = fs::path(path).parent_path();
  for (const auto& d : j["domains"]) {
    ManifestDomain md;
    md.path = d.at("path").get<std::string>();
    if (fs::path(md.path).is_relative()) {
      md.path = (base / md.path).string();
    }
    md.role = parse_domain_role(d.at("role").get<std::string>());
    if (d.contains("label_column")) {
      md.label_column = d["label_column"].get<std::string>();
    }
    md.feature_columns =
        d.at("feature_columns").get<std::vector<std::string>>();
    if (d.contains("delimiter")) {
      const std::string delim = d["delimiter"].get<std::string>();
      if (delim.size() != 1) {
        throw DataError("delimiter must be a single character");
      }
      md.delimiter = delim[0];
    }
    if (d.contains("subsample")) md.subsample = d["subsample"].get<long>();
    m.domains.push_back(std::move(md));
  }
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  json j;
  j["class_map"] = json::object();
  for (const auto& [name, id] : m.class_map) j["class_map"][name] = id;
  j["domains"] = json::array();
  for (const auto& d : m.domains) {
    json jd;
    jd["path"] = d.path;
    jd["role"] = domain_role_name(d.role);
    if (!d.label_column.empty()) jd["label_column"] = d.label_column;
    jd["feature_columns"] = d.feature_columns;
    if (d.delimiter != ',') jd["delimiter"] = std::string(1, d.delimiter);
    if (d.subsample > 0) jd["subsample"] = d.subsample;
    j["domains"].push_back(std::move(jd));
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

namespace {

int class_count(const std::map<std::string, int>& class_map) {
  int k = 0;
  for (const auto& [name, id] : class_map) k = std::max(k, id);
  if (k < 2) throw DataError("class map must define at least 2 classes");
  return k;
}

void normalize_target_pair(DomainDataset& tl, DomainDataset& tu) {
  // One scale for the whole target domain: TL and TU share E_T.
  DomainDataset joint;
  joint.X = Matrix(tl.n() + tu.n(), tl.dim());
  joint.X.topRows(tl.n()) = tl.X;
  joint.X.bottomRows(tu.n()) = tu.X;
  const NormStats st = compute_norm_stats(joint);
  apply_norm(st, tl);
  apply_norm(st, tu);
}

}  // namespace

DomainBundle load_bundle(const Manifest& m, const SplitSpec& split,
                         bool normalize) {
  CsvSchema base;
  base.class_map = m.class_map;

  DomainBundle b;
  b.num_classes = class_count(m.class_map);
  bool have_sn = false, have_si = false, have_tl = false, have_tu = false,
       have_t = false;

  for (const auto& d : m.domains) {
    CsvSchema schema = base;
    schema.label_column = d.label_column;
    schema.feature_columns = d.feature_columns;
    schema.delimiter = d.delimiter;
    DomainDataset ds = load_csv(d.path, schema,
                                fs::path(d.path).stem().string(), d.role);
    if (d.subsample > 0) {
      ds = subsample_stratified(ds, d.subsample, split.seed);
    }
    switch (d.role) {
      case DomainRole::SN:
        b.sn = std::move(ds);
        have_sn = true;
        break;
      case DomainRole::SI:
        b.si = std::move(ds);
        have_si = true;
        break;
      case DomainRole::TL:
        b.tl = std::move(ds);
        have_tl = true;
        break;
      case DomainRole::TU:
        b.tu = std::move(ds);
        have_tu = true;
        break;
      case DomainRole::T: {
        auto [tl, tu] = split_target(ds, split);
        b.tl = std::move(tl);
        b.tu = std::move(tu);
        have_t = true;
        break;
      }
    }
  }
  if (!have_sn) throw DataError("manifest provides no SN domain");
  if (!have_si) throw DataError("manifest provides no SI domain");
  if (!(have_t || (have_tl && have_tu))) {
    throw DataError("manifest must provide a T domain or both TL and TU");
  }
  if (have_t && (have_tl || have_tu)) {
    throw DataError("manifest mixes a T domain with explicit TL/TU");
  }
  if (b.si.n() >= b.sn.n()) {
    warn("source II domain is not smaller than source NI (" +
         std::to_string(b.si.n()) + " >= " + std::to_string(b.sn.n()) + ")");
  }
  for (const DomainDataset* ds : {&b.sn, &b.si, &b.tl}) {
    for (int y : ds->y) {
      if (y < 1 || y > b.num_classes) {
        throw DataError("label " + std::to_string(y) + " in " + ds->name +
                        " outside class map range");
      }
    }
  }
  if (normalize) {
    apply_norm(compute_norm_stats(b.sn), b.sn);
    apply_norm(compute_norm_stats(b.si), b.si);
    normalize_target_pair(b.tl, b.tu);
  }
  return b;
}

DomainBundle bundle_from_synth(const SynthResult& synth, const SplitSpec& split,
                               bool normalize) {
  DomainBundle b;
  b.sn = synth.sn;
  b.si = synth.si;
  b.num_classes = 0;
  for (int y : synth.sn.y) b.num_classes = std::max(b.num_classes, y);
  auto [tl, tu] = split_target(synth.target_full, split);
  b.tl = std::move(tl);
  b.tu = std::move(tu);
  if (normalize) {
    apply_norm(compute_norm_stats(b.sn), b.sn);
    apply_norm(compute_norm_stats(b.si), b.si);
    normalize_target_pair(b.tl, b.tu);
  }
  return b;
}

}  // namespace jstn
