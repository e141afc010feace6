#include "jstn/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace jstn {

const char* role_name(Role r) {
  switch (r) {
    case Role::SN: return "SN";
    case Role::SI: return "SI";
    case Role::T: return "T";
  }
  return "?";
}

void ModelSpec::validate() const {
  if (d_sn <= 0 || d_si <= 0 || d_t <= 0 || hidden <= 0 || d_c <= 0 ||
      num_classes <= 0) {
    throw ParameterError("model spec: all dimensions must be positive");
  }
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ParameterError("model spec: LeakyReLU slope must be in (0,1)");
  }
}

namespace {

// Scaled-uniform init, bound gain / sqrt(fan_in); biases zero.
Matrix uniform_init(int rows, int cols, double bound, Rng& rng) {
  Matrix w(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) w(r, c) = rng.uniform(-bound, bound);
  }
  return w;
}

EncoderParams init_encoder(int d_in, int hidden, int d_c, double gain,
                           Rng& rng) {
  EncoderParams e;
  e.w1 = ad::parameter(uniform_init(d_in, hidden, gain / std::sqrt(d_in), rng));
  e.b1 = ad::parameter(Matrix::Zero(1, hidden));
  e.w2 =
      ad::parameter(uniform_init(hidden, d_c, gain / std::sqrt(hidden), rng));
  e.b2 = ad::parameter(Matrix::Zero(1, d_c));
  return e;
}

AffineParams init_affine(int d_in, int d_out, double gain, Rng& rng) {
  AffineParams a;
  a.w = ad::parameter(uniform_init(d_in, d_out, gain / std::sqrt(d_in), rng));
  a.b = ad::parameter(Matrix::Zero(1, d_out));
  return a;
}

}  // namespace

JstnModel JstnModel::init(const ModelSpec& spec, const InitSpec& init) {
  spec.validate();
  Rng rng(mix_seed(init.seed, 0x6d6f64656cULL));  // "model" stream
  JstnModel m;
  m.spec_ = spec;
  m.e_sn_ = init_encoder(spec.d_sn, spec.hidden, spec.d_c, init.gain, rng);
  m.e_si_ = init_encoder(spec.d_si, spec.hidden, spec.d_c, init.gain, rng);
  m.e_t_ = init_encoder(spec.d_t, spec.hidden, spec.d_c, init.gain, rng);
  m.classifier_ = init_affine(spec.d_c, spec.num_classes, init.gain, rng);
  m.discriminator_ = init_affine(spec.d_c, 1, init.gain, rng);
  return m;
}

const EncoderParams& JstnModel::encoder(Role r) const {
  switch (r) {
    case Role::SN: return e_sn_;
    case Role::SI: return e_si_;
    case Role::T: return e_t_;
  }
  throw UsageError("unknown role");
}

NodePtr JstnModel::encode(const NodePtr& x, Role role) const {
  const int d_in = role == Role::SN   ? spec_.d_sn
                   : role == Role::SI ? spec_.d_si
                                      : spec_.d_t;
  if (x->cols() != d_in) {
    throw DimensionError(std::string("encode: role ") + role_name(role) +
                         " expects width " + std::to_string(d_in) + ", got " +
                         std::to_string(x->cols()));
  }
  const EncoderParams& e = encoder(role);
  NodePtr h = ad::leaky_relu(ad::add(ad::matmul(x, e.w1), e.b1), spec_.slope);
  return ad::add(ad::matmul(h, e.w2), e.b2);
}

NodePtr JstnModel::classify(const NodePtr& f) const {
  if (f->cols() != spec_.d_c) {
    throw DimensionError("classify: expects width " +
                         std::to_string(spec_.d_c) + ", got " +
                         std::to_string(f->cols()));
  }
  return ad::add(ad::matmul(f, classifier_.w), classifier_.b);
}

NodePtr JstnModel::discriminate(const NodePtr& f) const {
  if (f->cols() != spec_.d_c) {
    throw DimensionError("discriminate: expects width " +
                         std::to_string(spec_.d_c) + ", got " +
                         std::to_string(f->cols()));
  }
  return ad::sigmoid(ad::add(ad::matmul(f, discriminator_.w),
                             discriminator_.b));
}

std::vector<NodePtr> JstnModel::parameters() const {
  std::vector<NodePtr> ps;
  for (const EncoderParams* e : {&e_sn_, &e_si_, &e_t_}) {
    ps.insert(ps.end(), {e->w1, e->b1, e->w2, e->b2});
  }
  ps.insert(ps.end(), {classifier_.w, classifier_.b, discriminator_.w,
                       discriminator_.b});
  return ps;
}

std::vector<NodePtr> JstnModel::encoder_params(Role r) const {
  const EncoderParams& e = encoder(r);
  return {e.w1, e.b1, e.w2, e.b2};
}

std::vector<NodePtr> JstnModel::classifier_params() const {
  return {classifier_.w, classifier_.b};
}

std::vector<NodePtr> JstnModel::discriminator_params() const {
  return {discriminator_.w, discriminator_.b};
}

namespace {

struct NamedTensor {
  const char* name;
  const NodePtr* node;
};

std::vector<NamedTensor> tensor_table(const EncoderParams& sn,
                                      const EncoderParams& si,
                                      const EncoderParams& t,
                                      const AffineParams& c,
                                      const AffineParams& d) {
  return {
      {"e_sn.w1", &sn.w1}, {"e_sn.b1", &sn.b1}, {"e_sn.w2", &sn.w2},
      {"e_sn.b2", &sn.b2}, {"e_si.w1", &si.w1}, {"e_si.b1", &si.b1},
      {"e_si.w2", &si.w2}, {"e_si.b2", &si.b2}, {"e_t.w1", &t.w1},
      {"e_t.b1", &t.b1},   {"e_t.w2", &t.w2},   {"e_t.b2", &t.b2},
      {"c.w", &c.w},       {"c.b", &c.b},       {"d.w", &d.w},
      {"d.b", &d.b},
  };
}

}  // namespace

void JstnModel::save(const std::string& path, std::uint64_t config_hash) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << "JSTN-CKPT v1\n";
  out << "config_hash " << std::hex << config_hash << std::dec << "\n";
  out << "spec " << spec_.d_sn << " " << spec_.d_si << " " << spec_.d_t << " "
      << spec_.hidden << " " << spec_.d_c << " " << spec_.num_classes << " "
      << double_to_hex(spec_.slope) << "\n";
  for (const auto& [name, node] : tensor_table(e_sn_, e_si_, e_t_,
                                               classifier_, discriminator_)) {
    const Matrix& m = (*node)->values;
    out << "tensor " << name << " " << m.rows() << " " << m.cols() << "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        out << double_to_hex(m(r, c)) << (c + 1 == m.cols() ? "" : " ");
      }
      out << "\n";
    }
  }
  if (!out) throw DataError("short write to checkpoint: " + path);
}

JstnModel JstnModel::load(const std::string& path,
                          std::uint64_t* config_hash_out) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "JSTN-CKPT v1") {
    throw DataError("not a JSTN checkpoint: " + path);
  }
  std::string word;
  std::uint64_t hash = 0;
  in >> word >> std::hex >> hash >> std::dec;
  if (word != "config_hash") throw DataError("checkpoint missing config_hash");
  if (config_hash_out) *config_hash_out = hash;

  JstnModel m;
  std::string slope_hex;
  in >> word;
  if (word != "spec") throw DataError("checkpoint missing spec line");
  in >> m.spec_.d_sn >> m.spec_.d_si >> m.spec_.d_t >> m.spec_.hidden >>
      m.spec_.d_c >> m.spec_.num_classes >> slope_hex;
  m.spec_.slope = hex_to_double(slope_hex);
  m.spec_.validate();

  // Allocate parameter nodes, then fill from the named tensor records.
  m.e_sn_ = {ad::parameter(Matrix::Zero(m.spec_.d_sn, m.spec_.hidden)),
             ad::parameter(Matrix::Zero(1, m.spec_.hidden)),
             ad::parameter(Matrix::Zero(m.spec_.hidden, m.spec_.d_c)),
             ad::parameter(Matrix::Zero(1, m.spec_.d_c))};
  m.e_si_ = {ad::parameter(Matrix::Zero(m.spec_.d_si, m.spec_.hidden)),
             ad::parameter(Matrix::Zero(1, m.spec_.hidden)),
             ad::parameter(Matrix::Zero(m.spec_.hidden, m.spec_.d_c)),
             ad::parameter(Matrix::Zero(1, m.spec_.d_c))};
  m.e_t_ = {ad::parameter(Matrix::Zero(m.spec_.d_t, m.spec_.hidden)),
            ad::parameter(Matrix::Zero(1, m.spec_.hidden)),
            ad::parameter(Matrix::Zero(m.spec_.hidden, m.spec_.d_c)),
            ad::parameter(Matrix::Zero(1, m.spec_.d_c))};
  m.classifier_ = {ad::parameter(Matrix::Zero(m.spec_.d_c,
                                              m.spec_.num_classes)),
                   ad::parameter(Matrix::Zero(1, m.spec_.num_classes))};
  m.discriminator_ = {ad::parameter(Matrix::Zero(m.spec_.d_c, 1)),
                      ad::parameter(Matrix::Zero(1, 1))};

  std::map<std::string, NodePtr> by_name;
  for (const auto& [name, node] : tensor_table(m.e_sn_, m.e_si_, m.e_t_,
                                               m.classifier_,
                                               m.discriminator_)) {
    by_name[name] = *node;
  }

  std::string tag, name, value;
  while (in >> tag) {
    if (tag != "tensor") throw DataError("unexpected record: " + tag);
    Eigen::Index rows = 0, cols = 0;
    in >> name >> rows >> cols;
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("unknown tensor: " + name);
    Matrix& dst = it->second->values;
    if (dst.rows() != rows || dst.cols() != cols) {
      throw DataError("tensor " + name + " has shape " +
                      std::to_string(rows) + "x" + std::to_string(cols) +
                      ", expected " + shape_str(dst));
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (!(in >> value)) throw DataError("truncated tensor: " + name);
        dst(r, c) = hex_to_double(value);
      }
    }
  }
  return m;
}

}  // namespace jstn
