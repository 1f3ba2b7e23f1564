#include "concept_probe/tcav.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

namespace cprobe::tcav {

double sensitivity(const Model& model, const Cav& cav, const Tensor& x, std::size_t k) {
    return linalg::dot(model.grad_logit_wrt_activation(x, cav.layer, k), cav.direction);
}

double top_t_recall(std::span<const double> scores, const std::vector<bool>& is_target) {
    if (scores.size() != is_target.size()) {
        throw std::invalid_argument("top_t_recall: scores and targets differ in length");
    }
    const auto T = static_cast<std::size_t>(std::count(is_target.begin(), is_target.end(), true));
    if (T == 0) {
        throw EvaluationError("recall is undefined without target images");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t hits = 0;
    for (std::size_t r = 0; r < T; ++r) {
        hits += is_target[order[r]] ? 1 : 0;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(T);
}

RecallResult evaluate_recall(const Model& model, const Cav& cav, const ImageSet& testset,
                             const std::set<std::size_t>& target_classes, double comparator_sign) {
    if (testset.images.empty()) {
        throw EvaluationError("evaluate_recall: empty test set");
    }
    RecallResult result;
    std::vector<double> ranked;
    std::vector<bool> targets;
    for (std::size_t i = 0; i < testset.images.size(); ++i) {
        const Tensor& x = testset.images[i];
        SensitivityRecord rec;
        rec.image_id = testset.ids.empty() ? i : testset.ids[i];
        rec.class_k = model.predict(x);
        rec.score = sensitivity(model, cav, x, rec.class_k);
        rec.is_target = target_classes.contains(testset.labels[i]);
        if (!std::isfinite(rec.score)) {
            throw EvaluationError("non-finite sensitivity for image " + std::to_string(rec.image_id));
        }
        ranked.push_back(comparator_sign * rec.score);
        targets.push_back(rec.is_target);
        result.records.push_back(rec);
    }
    result.recall_percent = top_t_recall(ranked, targets);
    return result;
}

Aggregates aggregate(std::span<const double> values) {
    Aggregates a;
    a.n = values.size();
    if (values.empty()) {
        a.mean = a.std = a.min = a.max = std::numeric_limits<double>::quiet_NaN();
        return a;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(a.n);
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = a.n > 1 ? std::sqrt(ss / static_cast<double>(a.n - 1)) : 0.0;
    a.min = *std::min_element(values.begin(), values.end());
    a.max = *std::max_element(values.begin(), values.end());
    return a;
}

std::vector<double> SweepReport::recalls() const {
    std::vector<double> out;
    for (const auto& s : per_seed) {
        if (s.recall_percent) {
            out.push_back(*s.recall_percent);
        }
    }
    return out;
}

SweepReport seed_sweep(const Model& model, const synthdata::ConceptSet& concept_set, cav::Method method,
                       const cav::Hyper& hyper, std::string_view layer, std::span<const std::uint64_t> seeds,
                       const ImageSet& testset, double comparator_sign, std::size_t jobs) {
    if (seeds.size() < 2) {
        throw std::invalid_argument("seed_sweep needs at least 2 seeds");
    }
    SweepReport report;
    report.method = method;
    report.concept_name = concept_set.name;
    report.hyper = hyper;
    report.hyper.K = concept_set.examples.size();
    report.per_seed.resize(seeds.size());

    auto run_one = [&](std::size_t i) {
        SeedRecall& out = report.per_seed[i];
        out.seed = seeds[i];
        try {
            const Cav c = cav::build_cav(method, model, concept_set, layer, hyper, seeds[i]);
            out.train_accuracy = c.train_accuracy;
            out.recall_percent = evaluate_recall(model, c, testset, concept_set.target_classes, comparator_sign)
                                     .recall_percent;
        } catch (const cav::CavError& e) {
            out.error = e.what();
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, seeds.size()));
    if (workers == 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex failure_mutex;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < seeds.size(); i = next++) {
                    try {
                        run_one(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }
    const auto values = report.recalls();
    report.aggregates = aggregate(values);
    return report;
}

// ---------------------------------------------------------------------------

std::vector<Tensor> iterative_attack(const Model& model, const Tensor& x, double epsilon_step,
                                     std::size_t max_steps) {
    if (!(epsilon_step > 0.0)) {
        throw std::invalid_argument("iterative_attack: epsilon_step must be positive");
    }
    std::vector<Tensor> states{x};
    const std::size_t original = model.predict(x);
    const auto step = static_cast<float>(epsilon_step);
    for (std::size_t s = 0; s < max_steps; ++s) {
        const Tensor& cur = states.back();
        const Tensor grad = model.grad_logit_wrt_input(cur, original);
        Tensor next = cur;
        for (std::size_t i = 0; i < next.size(); ++i) {
            if (grad[i] > 0.0f) {
                next[i] -= step;
            } else if (grad[i] < 0.0f) {
                next[i] += step;
            }
        }
        const bool flipped = model.predict(next) != original;
        states.push_back(std::move(next));
        if (flipped) {
            break;
        }
    }
    return states;
}

std::vector<AttackCurve> attack_distance_curves(const Model& model, std::span<const Cav> cavs,
                                                const ImageSet& testset, double epsilon_step,
                                                std::size_t max_steps, double comparator_sign) {
    if (testset.images.empty()) {
        throw EvaluationError("attack_distance_curve: empty test set");
    }
    if (cavs.empty()) {
        return {};
    }
    const std::string& layer = cavs.front().layer;
    for (const auto& c : cavs) {
        if (c.layer != layer) {
            throw std::invalid_argument("attack_distance_curves: CAVs must share one layer");
        }
    }
    const std::size_t n = testset.images.size();
    // distances[c][i][s]: distance of image i at trajectory step s to CAV c.
    std::vector<std::vector<std::vector<double>>> distances(cavs.size(), std::vector<std::vector<double>>(n));
    std::vector<std::size_t> length(n);
    std::vector<bool> flipped(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = model.predict(testset.images[i]);
        const auto states = iterative_attack(model, testset.images[i], epsilon_step, max_steps);
        length[i] = states.size();
        flipped[i] = model.predict(states.back()) != k;
        for (const auto& st : states) {
            const auto grad = model.grad_logit_wrt_activation(st, layer, k);
            for (std::size_t c = 0; c < cavs.size(); ++c) {
                const double s = linalg::dot(grad, cavs[c].direction);
                distances[c][i].push_back(-comparator_sign * s);
            }
        }
    }
    std::size_t levels = max_steps + 1;
    if (std::all_of(flipped.begin(), flipped.end(), [](bool f) { return f; })) {
        levels = *std::max_element(length.begin(), length.end());
    }

    std::vector<AttackCurve> curves(cavs.size());
    for (std::size_t c = 0; c < cavs.size(); ++c) {
        curves[c].method = cavs[c].method;
        for (std::size_t l = 0; l < levels; ++l) {
            CurvePoint p;
            p.level = static_cast<double>(l) * epsilon_step;
            std::size_t mis = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t s = std::min(l, length[i] - 1);
                p.mean_distance += distances[c][i][s];
                mis += (flipped[i] && l >= length[i] - 1) ? 1 : 0;
            }
            p.mean_distance /= static_cast<double>(n);
            p.frac_misclassified = static_cast<double>(mis) / static_cast<double>(n);
            curves[c].steps.push_back(p);
        }
    }
    return curves;
}

AttackCurve attack_distance_curve(const Model& model, const Cav& cav, const ImageSet& testset,
                                  double epsilon_step, std::size_t max_steps, double comparator_sign) {
    return attack_distance_curves(model, std::span<const Cav>(&cav, 1), testset, epsilon_step, max_steps,
                                  comparator_sign)
        .front();
}

}  // namespace cprobe::tcav
