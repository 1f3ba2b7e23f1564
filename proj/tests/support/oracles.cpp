#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "concept_probe/rng.hpp"

namespace testing_support {

using cprobe::diffnet::Architecture;
using cprobe::diffnet::LayerSpec;

Tensor random_image(const cprobe::Shape& shape, std::uint64_t seed) {
    cprobe::Rng rng(seed);
    Tensor t(shape);
    for (auto& v : t.data()) {
        v = static_cast<float>(rng.uniform());
    }
    return t;
}

std::vector<Architecture> per_kind_architectures() {
    return {
        {{6, 6, 2}, {LayerSpec::conv2d("conv", 3, 3), LayerSpec::flatten("flat"), LayerSpec::dense("logits", 3)}},
        {{6, 6, 2},
         {LayerSpec::conv2d("conv", 3, 3, 2), LayerSpec::flatten("flat"), LayerSpec::dense("logits", 3)}},
        {{10}, {LayerSpec::dense("fc", 8), LayerSpec::dense("logits", 3)}},
        {{10}, {LayerSpec::dense("fc", 8), LayerSpec::relu("relu"), LayerSpec::dense("logits", 3)}},
        {{6, 6, 2}, {LayerSpec::maxpool2d("pool", 2), LayerSpec::flatten("flat"), LayerSpec::dense("logits", 3)}},
        {{4, 4, 2}, {LayerSpec::flatten("flat"), LayerSpec::dense("logits", 3)}},
    };
}

std::size_t brute_force_top_t(std::span<const double> scores, const std::vector<bool>& is_target) {
    const std::size_t n = scores.size();
    const auto t = static_cast<std::size_t>(std::count(is_target.begin(), is_target.end(), true));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_target[i]) {
            continue;
        }
        std::size_t ahead = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) {
                ++ahead;
            }
        }
        hits += ahead < t ? 1 : 0;
    }
    return hits;
}

bool Slopes::straddles_kink() const {
    return std::abs(forward - backward) > 1e-6 * (std::abs(forward) + std::abs(backward)) + 1e-9;
}

Slopes input_slopes(const Model& model, const Tensor& x, std::size_t k, std::size_t i, double h) {
    Tensor plus = x, minus = x;
    plus[i] = static_cast<float>(x[i] + h);
    minus[i] = static_cast<float>(x[i] - h);
    // Use the steps actually representable in float32.
    const double up = static_cast<double>(plus[i]) - static_cast<double>(x[i]);
    const double down = static_cast<double>(x[i]) - static_cast<double>(minus[i]);
    const double base = model.forward(x)[k];
    return {(model.forward(plus)[k] - base) / up, (base - model.forward(minus)[k]) / down};
}

Slopes activation_slopes(const Model& model, const Tensor& x, std::string_view layer, std::size_t k,
                         std::size_t i, double h) {
    auto a = model.activation_at(x, layer);
    const double base = model.forward_from(layer, a)[k];
    const double v = a[i];
    a[i] = v + h;
    const double up = model.forward_from(layer, a)[k];
    a[i] = v - h;
    const double down = model.forward_from(layer, a)[k];
    return {(up - base) / h, (base - down) / h};
}

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / (std::abs(analytic) + 1e-6);
}

GradientReport gradient_report(const Model& model, const Tensor& x, std::uint64_t seed, std::size_t coords) {
    cprobe::Rng rng(seed);
    GradientReport r;
    auto fail = [&](const std::string& what) {
        if (r.failed++ == 0) {
            r.first_failure = what;
        }
    };
    // Draws coordinates until `coords` differentiable ones have been checked.
    auto check = [&](std::size_t size, const std::string& where, const auto& analytic, const auto& slopes) {
        std::size_t done = 0;
        for (std::size_t draw = 0; draw < 10 * coords && done < coords; ++draw) {
            const auto i = rng.below(size);
            const Slopes s = slopes(i);
            if (s.straddles_kink()) {
                ++r.skipped;
                continue;
            }
            const double e = relative_error(analytic(i), s.central());
            ++r.checked;
            ++done;
            r.worst = std::max(r.worst, e);
            if (!(e < 1e-2)) {
                fail(where + "[" + std::to_string(i) + "]: analytic " + std::to_string(analytic(i)) + " numeric " +
                     std::to_string(s.central()));
            }
        }
        if (done < coords) {
            fail(where + ": only " + std::to_string(done) + " differentiable coordinates found");
        }
    };
    for (std::size_t k = 0; k < model.num_classes(); ++k) {
        const std::string cls = " class " + std::to_string(k);
        const Tensor g = model.grad_logit_wrt_input(x, k);
        check(
            x.size(), "input" + cls, [&](std::size_t i) { return static_cast<double>(g[i]); },
            [&](std::size_t i) { return input_slopes(model, x, k, i, 1e-3); });
        for (std::size_t li = 0; li + 1 < model.layers().size(); ++li) {
            const auto& name = model.layers()[li].spec.name;
            const auto ga = model.grad_logit_wrt_activation(x, name, k);
            check(
                ga.size(), name + cls, [&](std::size_t i) { return ga[i]; },
                [&](std::size_t i) { return activation_slopes(model, x, name, k, i, 1e-3); });
        }
    }
    return r;
}

bool separable_2d(const std::vector<Point2>& positives, const std::vector<Point2>& negatives) {
    std::vector<Point2> all = positives;
    all.insert(all.end(), negatives.begin(), negatives.end());
    std::vector<double> critical = {0.0};
    for (std::size_t i = 0; i < all.size(); ++i) {
        for (std::size_t j = i + 1; j < all.size(); ++j) {
            const double dx = all[i].x - all[j].x, dy = all[i].y - all[j].y;
            if (dx == 0.0 && dy == 0.0) {
                continue;
            }
            const double perp = std::atan2(dx, -dy);
            for (double a : {perp, perp + std::numbers::pi}) {
                critical.push_back(std::remainder(a, 2.0 * std::numbers::pi) + std::numbers::pi);
            }
        }
    }
    std::sort(critical.begin(), critical.end());
    critical.push_back(critical.front() + 2.0 * std::numbers::pi);
    for (std::size_t c = 0; c + 1 < critical.size(); ++c) {
        // Arc midpoints plus the critical directions themselves.
        for (double theta : {0.5 * (critical[c] + critical[c + 1]), critical[c]}) {
            const double wx = std::cos(theta), wy = std::sin(theta);
            double pos_min = INFINITY, neg_max = -INFINITY;
            for (const auto& p : positives) pos_min = std::min(pos_min, wx * p.x + wy * p.y);
            for (const auto& p : negatives) neg_max = std::max(neg_max, wx * p.x + wy * p.y);
            if (pos_min > neg_max) {
                return true;
            }
        }
    }
    return false;
}

}  // namespace testing_support
