#include "jstn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace jstn {

namespace {

struct Field {
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ParameterError("config: bad numeric value for " + key + ": '" + v +
                         "'");
  }
  return out;
}

long parse_long(const std::string& key, const std::string& v) {
  long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ParameterError("config: bad integer value for " + key + ": '" + v +
                         "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParameterError("config: bad boolean value for " + key + ": '" + v +
                       "'");
}

#define DOUBLE_FIELD(name)                                                  \
  {#name,                                                                   \
   {[](const TrainConfig& c) { return double_to_str(c.name); },             \
    [](TrainConfig& c, const std::string& v) {                              \
      c.name = parse_double(#name, v);                                      \
    }}}

#define INT_FIELD(name)                                                     \
  {#name,                                                                   \
   {[](const TrainConfig& c) { return std::to_string(c.name); },            \
    [](TrainConfig& c, const std::string& v) {                              \
      c.name = static_cast<int>(parse_long(#name, v));                      \
    }}}

#define BOOL_FIELD(name)                                                    \
  {#name,                                                                   \
   {[](const TrainConfig& c) { return c.name ? "true" : "false"; },         \
    [](TrainConfig& c, const std::string& v) {                              \
      c.name = parse_bool(#name, v);                                        \
    }}}

// Echo order is the declaration order here; keep it stable, the echo file is
// a provenance artifact.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      DOUBLE_FIELD(alpha),
      DOUBLE_FIELD(beta),
      DOUBLE_FIELD(lambda),
      DOUBLE_FIELD(gamma),
      DOUBLE_FIELD(eta),
      DOUBLE_FIELD(t1),
      DOUBLE_FIELD(t2),
      INT_FIELD(d_c),
      INT_FIELD(hidden),
      INT_FIELD(r_reps),
      DOUBLE_FIELD(leaky_slope),
      INT_FIELD(epochs),
      DOUBLE_FIELD(lr),
      DOUBLE_FIELD(adam_beta1),
      DOUBLE_FIELD(adam_beta2),
      DOUBLE_FIELD(adam_eps),
      {"seed",
       {[](const TrainConfig& c) { return std::to_string(c.seed); },
        [](TrainConfig& c, const std::string& v) {
          c.seed = static_cast<std::uint64_t>(parse_long("seed", v));
        }}},
      INT_FIELD(minibatch),
      {"ratio",
       {[](const TrainConfig& c) {
          return std::to_string(c.ratio_labeled) + ":" +
                 std::to_string(c.ratio_unlabeled);
        },
        [](TrainConfig& c, const std::string& v) {
          const auto pos = v.find(':');
          if (pos == std::string::npos) {
            throw ParameterError("config: ratio must look like '1:10', got '" +
                                 v + "'");
          }
          c.ratio_labeled =
              static_cast<int>(parse_long("ratio", v.substr(0, pos)));
          c.ratio_unlabeled =
              static_cast<int>(parse_long("ratio", v.substr(pos + 1)));
        }}},
      BOOL_FIELD(stratified),
      BOOL_FIELD(no_weighting),
      BOOL_FIELD(no_plr),
      BOOL_FIELD(sni_only),
      BOOL_FIELD(sii_only),
      BOOL_FIELD(target_only),
      BOOL_FIELD(literal_paper_normalization),
      INT_FIELD(checkpoint_every),
      INT_FIELD(eval_interim_every),
      BOOL_FIELD(log_timing),
      INT_FIELD(kmeans_max_iter),
      DOUBLE_FIELD(kmeans_tol),
  };
  return table;
}

#undef DOUBLE_FIELD
#undef INT_FIELD
#undef BOOL_FIELD

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ParameterError("config: alpha must be in [0,1]");
  }
  for (auto [name, v] : {std::pair<const char*, double>{"beta", beta},
                         {"lambda", lambda},
                         {"gamma", gamma},
                         {"eta", eta},
                         {"lr", lr}}) {
    if (v < 0.0) {
      throw ParameterError(std::string("config: ") + name +
                           " must be non-negative");
    }
  }
  if (!(t1 > 0.0) || !(t2 > 0.0)) {
    throw ParameterError("config: temperatures must be positive");
  }
  if (d_c <= 0 || hidden <= 0 || r_reps <= 0 || epochs <= 0) {
    throw ParameterError("config: d_c, hidden, r_reps, epochs must be positive");
  }
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
    throw ParameterError("config: leaky_slope must be in (0,1)");
  }
  if (ratio_labeled <= 0 || ratio_unlabeled <= 0) {
    throw ParameterError("config: ratio parts must be positive");
  }
  if (sni_only && sii_only) {
    throw ParameterError("config: sni_only and sii_only are exclusive");
  }
  if (minibatch < 0 || checkpoint_every < 0 || eval_interim_every < 0) {
    throw ParameterError("config: counters must be non-negative");
  }
}

void TrainConfig::apply_override(const std::string& key,
                                 const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(*this, value);
      return;
    }
  }
  throw ParameterError("config: unknown key '" + key + "'");
}

std::string TrainConfig::echo() const {
  std::ostringstream os;
  for (const auto& [name, field] : fields()) {
    os << name << " = " << field.get(*this) << "\n";
  }
  return os.str();
}

TrainConfig TrainConfig::parse_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParameterError("config line " + std::to_string(line_no) +
                           ": expected 'key = value'");
    }
    cfg.apply_override(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str());
}

}  // namespace jstn
