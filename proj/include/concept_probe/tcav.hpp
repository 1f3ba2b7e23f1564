#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "concept_probe/cav.hpp"
#include "concept_probe/dataset.hpp"
#include "concept_probe/diffnet.hpp"

namespace cprobe::tcav {

using cav::Cav;
using diffnet::Model;

class EvaluationError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// Sign applied to raw sensitivities before ranking: concept score =
/// sign * S. CAV directions are stored negated (unit(-u)), so the default
/// ranks by descending -S.
inline constexpr double kDefaultComparatorSign = -1.0;

struct SensitivityRecord {
    std::size_t image_id = 0;
    std::size_t class_k = 0;
    double score = 0.0;  // raw S
    bool is_target = false;
};

/// grad_logit_wrt_activation(x, cav.layer, k) . cav.direction
double sensitivity(const Model& model, const Cav& cav, const Tensor& x, std::size_t k);

/// R-precision in percent: with T targets, the share of targets among the T
/// highest scores. Ties are broken by lower index first.
double top_t_recall(std::span<const double> scores, const std::vector<bool>& is_target);

struct RecallResult {
    double recall_percent = 0.0;
    std::vector<SensitivityRecord> records;
};

/// Scores every test image against its predicted class and ranks by
/// comparator_sign * S. Throws EvaluationError when no image is a target.
RecallResult evaluate_recall(const Model& model, const Cav& cav, const ImageSet& testset,
                             const std::set<std::size_t>& target_classes,
                             double comparator_sign = kDefaultComparatorSign);

struct Aggregates {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1)
    double min = 0.0;
    double max = 0.0;
    std::size_t n = 0;
};

Aggregates aggregate(std::span<const double> values);

struct SeedRecall {
    std::uint64_t seed = 0;
    std::optional<double> recall_percent;  // empty when the build failed
    double train_accuracy = 0.0;
    std::string error;
};

struct SweepReport {
    cav::Method method = cav::Method::baseline;
    std::string concept_name;
    cav::Hyper hyper;
    std::vector<SeedRecall> per_seed;
    Aggregates aggregates;  // over successful seeds
    std::string std_kind = "sample";

    std::vector<double> recalls() const;
};

/// One CAV per seed, each evaluated for recall. Seeds run on up to `jobs`
/// threads; results are stored in seed-list order. A seed whose build fails
/// is recorded with its error.
SweepReport seed_sweep(const Model& model, const synthdata::ConceptSet& concept_set, cav::Method method,
                       const cav::Hyper& hyper, std::string_view layer, std::span<const std::uint64_t> seeds,
                       const ImageSet& testset, double comparator_sign = kDefaultComparatorSign,
                       std::size_t jobs = 1);

/// Untargeted iterative sign attack: x <- x - eps * sign(d logit_k0 / d x),
/// k0 the original prediction. Returns every state starting with x; stops at
/// the first misclassification or after max_steps steps.
std::vector<Tensor> iterative_attack(const Model& model, const Tensor& x, double epsilon_step,
                                     std::size_t max_steps);

struct CurvePoint {
    double level = 0.0;  // cumulative perturbation, step * epsilon_step
    double mean_distance = 0.0;
    double frac_misclassified = 0.0;
};

struct AttackCurve {
    cav::Method method = cav::Method::baseline;
    std::vector<CurvePoint> steps;
};

/// Mean distance (negated concept score, -comparator_sign * S, with k the
/// original prediction) between each CAV and the attacked test set at every
/// perturbation level. Images that misclassify are frozen at their final
/// state. The curve ends at the level where every image has misclassified,
/// or at max_steps. All returned curves share the same levels.
std::vector<AttackCurve> attack_distance_curves(const Model& model, std::span<const Cav> cavs,
                                                const ImageSet& testset, double epsilon_step,
                                                std::size_t max_steps,
                                                double comparator_sign = kDefaultComparatorSign);

AttackCurve attack_distance_curve(const Model& model, const Cav& cav, const ImageSet& testset,
                                  double epsilon_step, std::size_t max_steps,
                                  double comparator_sign = kDefaultComparatorSign);

}  // namespace cprobe::tcav
