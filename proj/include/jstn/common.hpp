#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace jstn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these onto exit codes: ParameterError and
// UsageError -> 1, DataError -> 2, NumericError -> 3.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct ParameterError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct UsageError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};

std::string shape_str(const Matrix& m);

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// distribution transforms below are hand-rolled because the std:: ones are
// implementation-defined and we promise bit-identical runs for a given seed.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via Box-Muller with a cached spare.
  double gaussian();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64; used to derive independent stream seeds from (seed, tag) pairs.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// ---------------------------------------------------------------------------
// Bit-exact double <-> text (C99 hexfloat). Used by checkpoints.
// ---------------------------------------------------------------------------

std::string double_to_hex(double x);
double hex_to_double(const std::string& s);

// Shortest round-trip decimal, used where files should stay human-readable.
std::string double_to_str(double x);

// ---------------------------------------------------------------------------
// Logging. stdout carries progress, stderr carries warnings; machine
// consumers read files, never either stream.
// ---------------------------------------------------------------------------

int& verbosity();  // 0 = quiet, 1 = normal (default), 2 = debug
void warn(const std::string& msg);
void info(const std::string& msg);
void debug(const std::string& msg);

// FNV-1a, used for config provenance hashes.
std::uint64_t fnv1a(const std::string& s);

}  // namespace jstn
