#pragma once

#include "jstn/autodiff.hpp"
#include "jstn/common.hpp"

#include <string>
#include <vector>

namespace jstn {

using ad::NodePtr;

// Which encoder an instance routes through. T covers both the labelled and
// unlabelled halves of the target domain.
enum class Role { SN, SI, T };

const char* role_name(Role r);

struct ModelSpec {
  int d_sn = 0;   // source NI input width
  int d_si = 0;   // source II input width
  int d_t = 0;    // target input width
  int hidden = 128;
  int d_c = 3;    // common feature subspace width
  int num_classes = 5;
  double slope = 0.01;  // LeakyReLU negative slope

  void validate() const;
};

struct InitSpec {
  std::uint64_t seed = 0;
  double gain = 1.0;
};

struct EncoderParams {
  NodePtr w1, b1, w2, b2;
};

struct AffineParams {
  NodePtr w, b;
};

// Three per-domain encoders into a shared d_c-dimensional subspace, a shared
// K-way classifier and a binary domain discriminator. Encoders are
// affine -> LeakyReLU -> affine; classifier and discriminator are single
// affine layers.
class JstnModel {
 public:
  static JstnModel init(const ModelSpec& spec, const InitSpec& init);

  // n x d_c features for a batch whose width matches the role's input dim.
  NodePtr encode(const NodePtr& x, Role role) const;
  // Raw n x K logits; callers apply temperature softmax as needed.
  NodePtr classify(const NodePtr& f) const;
  // n x 1 sigmoid probability of being a source instance.
  NodePtr discriminate(const NodePtr& f) const;

  const ModelSpec& spec() const { return spec_; }

  std::vector<NodePtr> parameters() const;          // everything
  std::vector<NodePtr> encoder_params(Role r) const;
  std::vector<NodePtr> classifier_params() const;
  std::vector<NodePtr> discriminator_params() const;

  // Checkpoint text format: shape headers plus hexfloat payloads, so the
  // round-trip is bit-exact. config_hash ties a dump to the run that made it.
  void save(const std::string& path, std::uint64_t config_hash) const;
  static JstnModel load(const std::string& path,
                        std::uint64_t* config_hash_out = nullptr);

 private:
  JstnModel() = default;

  ModelSpec spec_;
  EncoderParams e_sn_, e_si_, e_t_;
  AffineParams classifier_, discriminator_;

  const EncoderParams& encoder(Role r) const;
};

}  // namespace jstn
