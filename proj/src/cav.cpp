#include "concept_probe/cav.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "concept_probe/rng.hpp"
#include "json.hpp"

namespace cprobe::cav {

using nlohmann::json;

std::string_view method_name(Method m) {
    switch (m) {
        case Method::baseline: return "baseline";
        case Method::adversarial: return "adversarial";
        case Method::orthogonal_adversarial: return "orthogonal_adversarial";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    if (name == "baseline" || name == "tcav") return Method::baseline;
    if (name == "adversarial" || name == "a-tcav") return Method::adversarial;
    if (name == "orthogonal_adversarial" || name == "oa-tcav") return Method::orthogonal_adversarial;
    throw std::invalid_argument("unknown CAV method '" + std::string(name) + "'");
}

Tensor perturb_adversarial(const Model& model, const Tensor& x, double epsilon) {
    if (epsilon == 0.0) {
        return x;
    }
    const Tensor grad = model.grad_logit_wrt_input(x, model.predict(x));
    Tensor out = x;
    const auto step = static_cast<float>(epsilon);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float g = grad[i];
        if (g > 0.0f) {
            out[i] += step;
        } else if (g < 0.0f) {
            out[i] -= step;
        }
    }
    return out;
}

namespace {

std::vector<Vector> activations(const Model& model, std::span<const Tensor> inputs, std::string_view layer,
                                double epsilon, bool adversarial) {
    std::vector<Vector> out;
    out.reserve(inputs.size());
    for (const auto& x : inputs) {
        out.push_back(adversarial ? model.activation_at(perturb_adversarial(model, x, epsilon), layer)
                                  : model.activation_at(x, layer));
    }
    return out;
}

}  // namespace

ActivationSet collect_activations(const Model& model, std::span<const Tensor> concept_examples,
                                  std::span<const Tensor> randoms, std::string_view layer, double epsilon,
                                  bool adversarial) {
    if (adversarial && !(epsilon > 0.0)) {
        throw std::invalid_argument("collect_activations: adversarial collection needs epsilon > 0");
    }
    return ActivationSet{activations(model, concept_examples, layer, epsilon, adversarial),
                         activations(model, randoms, layer, epsilon, adversarial), std::string(layer)};
}

// ---------------------------------------------------------------------------

int LinearFit::predict(std::span<const double> x) const {
    return linalg::dot(coefficients, x) + bias > 0.0 ? 1 : 0;
}

LinearFit train_linear(const ActivationSet& acts, std::uint64_t seed) {
    if (acts.positives.empty() || acts.negatives.empty()) {
        throw DegenerateDataError("train_linear: both classes need at least one example");
    }
    std::vector<const Vector*> xs;
    std::vector<double> ys;
    for (const auto& p : acts.positives) {
        xs.push_back(&p);
        ys.push_back(1.0);
    }
    for (const auto& n : acts.negatives) {
        xs.push_back(&n);
        ys.push_back(-1.0);
    }
    const std::size_t dim = xs.front()->size();
    bool all_same = true;
    double sq = 0.0;
    for (const auto* x : xs) {
        if (x->size() != dim) {
            throw linalg::DimensionError("train_linear: activation lengths differ");
        }
        all_same = all_same && *x == *xs.front();
        sq += linalg::dot(*x, *x);
    }
    if (all_same) {
        throw DegenerateDataError("train_linear: every input is identical across both classes");
    }
    const double bias_feature = std::sqrt(sq / static_cast<double>(xs.size()));

    constexpr double kLearningRate = 1.0;
    constexpr std::size_t kMaxEpochs = 1000;
    Vector w(dim, 0.0);
    double wb = 0.0;
    auto margin = [&](std::size_t i) { return ys[i] * (linalg::dot(w, *xs[i]) + wb * bias_feature); };

    Rng rng = Rng(seed).derive("perceptron");
    std::size_t epoch = 0;
    while (epoch < kMaxEpochs) {
        ++epoch;
        for (auto i : rng.permutation(xs.size())) {
            if (margin(i) <= 0.0) {
                linalg::axpy(kLearningRate * ys[i], *xs[i], w);
                wb += kLearningRate * ys[i] * bias_feature;
            }
        }
        std::size_t mistakes = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            mistakes += margin(i) <= 0.0 ? 1 : 0;
        }
        if (mistakes == 0) {
            break;
        }
    }
    LinearFit fit{std::move(w), wb * bias_feature, 0.0, epoch};
    std::size_t correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        correct += fit.predict(*xs[i]) == (ys[i] > 0.0 ? 1 : 0) ? 1 : 0;
    }
    fit.accuracy = static_cast<double>(correct) / static_cast<double>(xs.size());
    return fit;
}

Vector cav_from_coefficients(std::span<const double> u) {
    if (!(linalg::norm(u) > 1e-12)) {
        throw DegenerateDataError("cav_from_coefficients: coefficient vector is zero");
    }
    return linalg::unit(linalg::scaled(u, -1.0));
}

Vector centroid_direction(const std::vector<Vector>& coefficients) {
    if (coefficients.empty()) {
        throw std::invalid_argument("centroid_direction: no coefficient vectors");
    }
    std::vector<Vector> units;
    for (const auto& u : coefficients) {
        units.push_back(linalg::unit(u));
    }
    const Vector centroid = linalg::mean(units);
    if (!(linalg::norm(centroid) > 1e-8)) {
        throw CentroidCollapseError("multi-draw centroid collapsed to a near-zero vector");
    }
    return cav_from_coefficients(centroid);
}

std::uint64_t draw_seed(std::uint64_t seed, std::string_view purpose, std::size_t draw) {
    return Rng(seed).derive(purpose, draw).next_u64();
}

// ---------------------------------------------------------------------------

namespace {

void check_accuracy(const Cav& cav) {
    if (cav.train_accuracy < 0.5) {
        std::ostringstream os;
        os << method_name(cav.method) << " CAV rejected: linear accuracy " << cav.train_accuracy << " < 0.5";
        throw RejectedCavError(os.str());
    }
}

std::vector<Tensor> draw_randoms(const Model& model, const Hyper& hyper, std::uint64_t seed, std::size_t draw) {
    return synthdata::generate_random_inputs(hyper.L, model.input_shape(), draw_seed(seed, "randoms", draw));
}

Cav centroid_cav(const std::vector<Vector>& coefficients, const std::vector<double>& accuracies) {
    Cav cav;
    cav.direction = centroid_direction(coefficients);
    double acc = 0.0;
    for (double a : accuracies) acc += a;
    cav.train_accuracy = acc / static_cast<double>(accuracies.size());
    return cav;
}

template <typename NegativesFor>
Cav multi_draw(const std::vector<Vector>& cact, std::string_view layer, Method method,
               const Hyper& hyper, std::uint64_t seed, NegativesFor&& negatives_for) {
    if (hyper.n_draws == 0) {
        throw std::invalid_argument("n_draws must be at least 1");
    }
    std::vector<Vector> coefficients;
    std::vector<double> accuracies;
    for (std::size_t d = 0; d < hyper.n_draws; ++d) {
        ActivationSet acts{cact, negatives_for(d), std::string(layer)};
        const LinearFit fit = train_linear(acts, draw_seed(seed, "linear", d));
        if (!(linalg::norm(fit.coefficients) > 1e-12)) {
            throw DegenerateDataError("linear model learned a zero coefficient vector");
        }
        coefficients.push_back(fit.coefficients);
        accuracies.push_back(fit.accuracy);
    }
    Cav cav = centroid_cav(coefficients, accuracies);
    cav.layer = std::string(layer);
    cav.method = method;
    cav.hyper = hyper;
    cav.seed = seed;
    check_accuracy(cav);
    return cav;
}

Hyper with_counts(Hyper hyper, const synthdata::ConceptSet& concept_set) {
    hyper.K = concept_set.examples.size();
    return hyper;
}

}  // namespace

Cav build_baseline_cav(const Model& model, const synthdata::ConceptSet& concept_set, std::string_view layer,
                       const Hyper& hyper_in, std::uint64_t seed) {
    Hyper hyper = with_counts(hyper_in, concept_set);
    const auto randoms = draw_randoms(model, hyper, seed, 0);
    const ActivationSet acts = collect_activations(model, concept_set.examples, randoms, layer, 0.0, false);
    const LinearFit fit = train_linear(acts, draw_seed(seed, "linear", 0));
    Cav cav;
    cav.direction = cav_from_coefficients(fit.coefficients);
    cav.layer = std::string(layer);
    cav.method = Method::baseline;
    hyper.n_draws = 1;
    cav.hyper = hyper;
    cav.seed = seed;
    cav.train_accuracy = fit.accuracy;
    check_accuracy(cav);
    return cav;
}

Cav build_adversarial_cav(const Model& model, const synthdata::ConceptSet& concept_set, std::string_view layer,
                          const Hyper& hyper_in, std::uint64_t seed) {
    const Hyper hyper = with_counts(hyper_in, concept_set);
    if (!(hyper.epsilon > 0.0)) {
        throw std::invalid_argument("adversarial CAV needs epsilon > 0");
    }
    // Perturbation is a deterministic function of the model, so concept
    // examples are perturbed once and shared by every draw.
    const auto cact = activations(model, concept_set.examples, layer, hyper.epsilon, true);
    return multi_draw(cact, layer, Method::adversarial, hyper, seed, [&](std::size_t d) {
        return activations(model, draw_randoms(model, hyper, seed, d), layer, hyper.epsilon, true);
    });
}

std::vector<Vector> sample_non_concept_basis(const std::vector<Vector>& cact, std::size_t L,
                                             std::size_t n_instances, std::uint64_t seed,
                                             const CandidateSource& source) {
    if (cact.empty()) {
        throw DegenerateDataError("sample_non_concept_basis: no concept activations");
    }
    if (n_instances == 0 || L == 0) {
        throw std::invalid_argument("sample_non_concept_basis: L and n_instances must be positive");
    }
    const std::size_t ambient = cact.front().size();
    linalg::OrthoBasis concept_basis;
    try {
        concept_basis = linalg::gram_schmidt(cact);
    } catch (const linalg::DegenerateError&) {
        concept_basis = linalg::OrthoBasis{{}, ambient};
    }
    if (concept_basis.dim() >= ambient) {
        throw NoComplementError("concept activations span the whole activation space");
    }

    std::vector<double> norms;
    for (const auto& c : cact) {
        norms.push_back(linalg::norm(c));
    }
    std::sort(norms.begin(), norms.end());
    const std::size_t mid = norms.size() / 2;
    const double median = norms.size() % 2 ? norms[mid] : 0.5 * (norms[mid - 1] + norms[mid]);
    const double target_norm = median > 0.0 ? median : 1.0;

    Rng rng = Rng(seed).derive("non-concept-sample");
    std::vector<Vector> pool;
    for (std::size_t inst = 0; inst < n_instances; ++inst) {
        std::vector<Vector> residuals;
        for (const auto& q : source(inst)) {
            residuals.push_back(linalg::project_out(concept_basis, q));
        }
        linalg::OrthoBasis non_concept;
        try {
            non_concept = linalg::gram_schmidt(residuals);
        } catch (const linalg::DegenerateError&) {
            throw NoComplementError("candidates have no component outside the concept span");
        }
        for (std::size_t s = 0; s < L; ++s) {
            Vector v(ambient, 0.0);
            for (const auto& b : non_concept.vectors) {
                linalg::axpy(rng.normal(), b, v);
            }
            // The basis is orthogonal to the concept span up to rounding; a
            // final projection pins that down.
            v = linalg::project_out(concept_basis, v);
            const double n = linalg::norm(v);
            if (!(n > 0.0)) {
                continue;
            }
            pool.push_back(linalg::scaled(v, target_norm / n));
        }
    }
    if (pool.size() < L) {
        throw NoComplementError("non-concept sampling produced too few vectors");
    }
    std::vector<Vector> out;
    const auto order = rng.permutation(pool.size());
    for (std::size_t i = 0; i < L; ++i) {
        out.push_back(std::move(pool[order[i]]));
    }
    return out;
}

std::vector<Vector> sample_non_concept_basis(const std::vector<Vector>& cact, std::size_t L,
                                             std::size_t n_instances, std::uint64_t seed) {
    if (cact.empty()) {
        throw DegenerateDataError("sample_non_concept_basis: no concept activations");
    }
    const std::size_t m = cact.front().size();
    const Rng root(seed);
    return sample_non_concept_basis(cact, L, n_instances, seed, [&](std::size_t inst) {
        Rng rng = root.derive("gaussian-candidates", inst);
        std::vector<Vector> out(L, Vector(m));
        for (auto& v : out) {
            for (auto& x : v) x = rng.normal();
        }
        return out;
    });
}

Cav build_orthogonal_adversarial_cav(const Model& model, const synthdata::ConceptSet& concept_set,
                                     std::string_view layer, const Hyper& hyper_in, std::uint64_t seed) {
    const Hyper hyper = with_counts(hyper_in, concept_set);
    if (!(hyper.epsilon > 0.0)) {
        throw std::invalid_argument("orthogonal adversarial CAV needs epsilon > 0");
    }
    const auto cact = activations(model, concept_set.examples, layer, hyper.epsilon, true);
    return multi_draw(cact, layer, Method::orthogonal_adversarial, hyper, seed, [&](std::size_t d) {
        // Each orthogonalization instance starts from its own adversarially
        // perturbed random inputs.
        const auto source = [&](std::size_t inst) {
            const auto randoms = synthdata::generate_random_inputs(
                hyper.L, model.input_shape(), draw_seed(draw_seed(seed, "gso", d), "instance", inst));
            return activations(model, randoms, layer, hyper.epsilon, true);
        };
        return sample_non_concept_basis(cact, hyper.L, hyper.n_gso_instances, draw_seed(seed, "sample", d),
                                        source);
    });
}

Cav build_cav(Method method, const Model& model, const synthdata::ConceptSet& concept_set, std::string_view layer,
              const Hyper& hyper, std::uint64_t seed) {
    switch (method) {
        case Method::baseline: return build_baseline_cav(model, concept_set, layer, hyper, seed);
        case Method::adversarial: return build_adversarial_cav(model, concept_set, layer, hyper, seed);
        case Method::orthogonal_adversarial:
            return build_orthogonal_adversarial_cav(model, concept_set, layer, hyper, seed);
    }
    throw std::invalid_argument("unknown method");
}

// ---------------------------------------------------------------------------

void save_cav(const std::filesystem::path& stem, const Cav& cav) {
    std::filesystem::path ten = stem;
    ten += ".ten";
    std::filesystem::path meta = stem;
    meta += ".json";
    const std::size_t n = cav.direction.size();
    save_tensor(ten, Tensor({n}, std::vector<float>(cav.direction.begin(), cav.direction.end())));
    const json j = {
        {"method", method_name(cav.method)},
        {"layer", cav.layer},
        {"hyper",
         {{"epsilon", cav.hyper.epsilon},
          {"n_draws", cav.hyper.n_draws},
          {"n_gso_instances", cav.hyper.n_gso_instances},
          {"K", cav.hyper.K},
          {"L", cav.hyper.L}}},
        {"seed", cav.seed},
        {"train_accuracy", cav.train_accuracy},
        {"direction_file", ten.filename().string()},
    };
    std::ofstream out(meta, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + meta.string());
    }
    out << j.dump(2) << '\n';
}

Cav load_cav(const std::filesystem::path& json_path) {
    std::ifstream in(json_path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + json_path.string());
    }
    try {
        const json j = json::parse(in);
        Cav cav;
        cav.method = parse_method(j.at("method").get<std::string>());
        cav.layer = j.at("layer").get<std::string>();
        const auto& h = j.at("hyper");
        cav.hyper.epsilon = h.at("epsilon").get<double>();
        cav.hyper.n_draws = h.at("n_draws").get<std::size_t>();
        cav.hyper.n_gso_instances = h.at("n_gso_instances").get<std::size_t>();
        cav.hyper.K = h.at("K").get<std::size_t>();
        cav.hyper.L = h.at("L").get<std::size_t>();
        cav.seed = j.at("seed").get<std::uint64_t>();
        cav.train_accuracy = j.at("train_accuracy").get<double>();
        const Tensor t = load_tensor(json_path.parent_path() / j.at("direction_file").get<std::string>());
        cav.direction = linalg::unit(Vector(t.data().begin(), t.data().end()));
        return cav;
    } catch (const json::exception& e) {
        throw FormatError(json_path.string() + ": " + e.what());
    }
}

}  // namespace cprobe::cav
