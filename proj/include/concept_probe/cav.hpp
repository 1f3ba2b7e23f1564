#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "concept_probe/diffnet.hpp"
#include "concept_probe/linalg.hpp"
#include "concept_probe/synthdata.hpp"
#include "concept_probe/tensor.hpp"

namespace cprobe::cav {

using diffnet::Model;
using linalg::Vector;

enum class Method { baseline, adversarial, orthogonal_adversarial };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

/// Numeric failure while building a CAV. Subclasses name the failure.
class CavError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

class DegenerateDataError : public CavError {
 public:
    using CavError::CavError;
};

class CentroidCollapseError : public CavError {
 public:
    using CavError::CavError;
};

class NoComplementError : public CavError {
 public:
    using CavError::CavError;
};

/// Linear accuracy below 0.5: the classifier is anti-concept.
class RejectedCavError : public CavError {
 public:
    using CavError::CavError;
};

/// The default adversarial step grid.
inline constexpr double kEpsilonGrid[] = {0.1, 0.01, 0.005, 0.001, 0.0001};

struct Hyper {
    double epsilon = 0.01;
    std::size_t n_draws = 10;
    std::size_t n_gso_instances = 3;
    std::size_t K = 30;  // concept examples
    std::size_t L = 30;  // non-concept examples per draw
};

struct Cav {
    Vector direction;  // unit norm
    std::string layer;
    Method method = Method::baseline;
    Hyper hyper;
    std::uint64_t seed = 0;
    double train_accuracy = 0.0;
};

struct ActivationSet {
    std::vector<Vector> positives;
    std::vector<Vector> negatives;
    std::string layer;
};

/// x + epsilon * sign(d logit_k / d x), k = argmax of the model on x, with
/// sign(0) = 0. Raises the predicted-class logit. Not clipped.
Tensor perturb_adversarial(const Model& model, const Tensor& x, double epsilon);

ActivationSet collect_activations(const Model& model, std::span<const Tensor> concept_examples,
                                  std::span<const Tensor> randoms, std::string_view layer, double epsilon,
                                  bool adversarial);

struct LinearFit {
    Vector coefficients;
    double bias = 0.0;
    double accuracy = 0.0;
    std::size_t epochs = 0;

    /// 1 for the positive side, 0 otherwise.
    int predict(std::span<const double> x) const;
};

/// Perceptron-loss SGD with constant learning rate 1.0, at most 1000 epochs,
/// stopping at zero training error. Positives are labeled 1, negatives 0.
///
/// The intercept is learned as the weight of a constant feature equal to the
/// RMS norm of the training vectors, so rescaling every activation by c > 0
/// rescales the learned hyperplane by c and leaves every decision unchanged.
LinearFit train_linear(const ActivationSet& acts, std::uint64_t seed);

/// unit(-u).
Vector cav_from_coefficients(std::span<const double> u);

/// Mean of the unit-normalized coefficient vectors, negated and
/// renormalized. Throws CentroidCollapseError when the mean is near zero.
Vector centroid_direction(const std::vector<Vector>& coefficients);

/// Random inputs and linear-training seed for draw `draw` of a build.
std::uint64_t draw_seed(std::uint64_t seed, std::string_view purpose, std::size_t draw);

Cav build_baseline_cav(const Model& model, const synthdata::ConceptSet& concept_set, std::string_view layer,
                       const Hyper& hyper, std::uint64_t seed);

Cav build_adversarial_cav(const Model& model, const synthdata::ConceptSet& concept_set, std::string_view layer,
                          const Hyper& hyper, std::uint64_t seed);

/// Produces L candidate activation vectors for one orthogonalization instance.
using CandidateSource = std::function<std::vector<Vector>(std::size_t instance)>;

/// Two-step Gram-Schmidt sampling of non-concept activations. For each
/// instance, candidates are projected off span(cact), orthonormalized into a
/// non-concept basis, and L Gaussian combinations of that basis are drawn and
/// rescaled to the median norm of cact. L of the pooled samples are returned.
std::vector<Vector> sample_non_concept_basis(const std::vector<Vector>& cact, std::size_t L,
                                             std::size_t n_instances, std::uint64_t seed,
                                             const CandidateSource& source);

/// Same, with standard-normal candidate vectors in activation space.
std::vector<Vector> sample_non_concept_basis(const std::vector<Vector>& cact, std::size_t L,
                                             std::size_t n_instances, std::uint64_t seed);

Cav build_orthogonal_adversarial_cav(const Model& model, const synthdata::ConceptSet& concept_set,
                                     std::string_view layer, const Hyper& hyper, std::uint64_t seed);

Cav build_cav(Method method, const Model& model, const synthdata::ConceptSet& concept_set, std::string_view layer,
              const Hyper& hyper, std::uint64_t seed);

/// Writes `<stem>.json` (metadata) and `<stem>.ten` (direction, float32).
void save_cav(const std::filesystem::path& stem, const Cav& cav);
/// Loads and renormalizes the direction in float64.
Cav load_cav(const std::filesystem::path& json_path);

}  // namespace cprobe::cav
