#include "concept_probe/diffnet.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "concept_probe/rng.hpp"

namespace cprobe::diffnet {

std::string_view kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::dense: return "dense";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::flatten: return "flatten";
    }
    return "?";
}

LayerKind parse_kind(std::string_view name) {
    for (auto k : {LayerKind::conv2d, LayerKind::dense, LayerKind::relu, LayerKind::maxpool2d,
                   LayerKind::flatten}) {
        if (kind_name(k) == name) {
            return k;
        }
    }
    throw UnknownLayerError("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::conv2d(std::string name, std::size_t channels, std::size_t kernel,
                            std::size_t stride, bool bias) {
    return {LayerKind::conv2d, std::move(name), channels, kernel, stride, bias};
}

LayerSpec LayerSpec::dense(std::string name, std::size_t units, bool bias) {
    return {LayerKind::dense, std::move(name), units, 0, 1, bias};
}

LayerSpec LayerSpec::relu(std::string name) {
    return {LayerKind::relu, std::move(name), 0, 0, 1, false};
}

LayerSpec LayerSpec::maxpool2d(std::string name, std::size_t window) {
    return {LayerKind::maxpool2d, std::move(name), 0, window, window, false};
}

LayerSpec LayerSpec::flatten(std::string name) {
    return {LayerKind::flatten, std::move(name), 0, 0, 1, false};
}

Architecture toy_cnn(std::size_t num_classes, Shape input_shape) {
    return Architecture{
        std::move(input_shape),
        {
            LayerSpec::conv2d("conv1", 8, 3),
            LayerSpec::relu("relu1"),
            LayerSpec::maxpool2d("pool1", 2),
            LayerSpec::conv2d("conv2", 16, 3),
            LayerSpec::relu("relu2"),
            LayerSpec::maxpool2d("pool2", 2),
            LayerSpec::flatten(std::string(kBottleneck)),
            LayerSpec::dense("fc1", 64),
            LayerSpec::relu("relu3"),
            LayerSpec::dense("logits", num_classes),
        }};
}

namespace {

bool has_params(LayerKind k) {
    return k == LayerKind::conv2d || k == LayerKind::dense;
}

std::size_t fan_in(const Layer& l) {
    if (l.spec.kind == LayerKind::conv2d) {
        return l.spec.kernel * l.spec.kernel * l.in_shape[2];
    }
    return l.in_size();
}

// ---------------------------------------------------------------------------
// Per-kind kernels. Activations are float64; parameters float32.

void conv_forward(const Layer& l, std::span<const double> in, std::span<double> out) {
    const std::size_t H = l.in_shape[0], W = l.in_shape[1], C = l.in_shape[2];
    const std::size_t OH = l.out_shape[0], OW = l.out_shape[1], O = l.out_shape[2];
    const std::size_t K = l.spec.kernel, S = l.spec.stride;
    const auto pad = static_cast<std::ptrdiff_t>(K / 2);
    std::vector<double> w(l.weights.begin(), l.weights.end());
    for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
            double* o = &out[(oh * OW + ow) * O];
            for (std::size_t oc = 0; oc < O; ++oc) {
                o[oc] = l.bias.empty() ? 0.0 : static_cast<double>(l.bias[oc]);
            }
            for (std::size_t kh = 0; kh < K; ++kh) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * S + kh) - pad;
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t kw = 0; kw < K; ++kw) {
                    const auto iw = static_cast<std::ptrdiff_t>(ow * S + kw) - pad;
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                    const double* x = &in[(static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)) * C];
                    const double* wk = &w[(kh * K + kw) * C * O];
                    for (std::size_t ic = 0; ic < C; ++ic) {
                        const double xv = x[ic];
                        const double* wr = wk + ic * O;
                        for (std::size_t oc = 0; oc < O; ++oc) {
                            o[oc] += xv * wr[oc];
                        }
                    }
                }
            }
        }
    }
}

void conv_backward(const Layer& l, std::span<const double> in, std::span<const double> gout,
                   std::span<double> gin, std::vector<double>* gw, std::vector<double>* gb) {
    const std::size_t H = l.in_shape[0], W = l.in_shape[1], C = l.in_shape[2];
    const std::size_t OH = l.out_shape[0], OW = l.out_shape[1], O = l.out_shape[2];
    const std::size_t K = l.spec.kernel, S = l.spec.stride;
    const auto pad = static_cast<std::ptrdiff_t>(K / 2);
    std::vector<double> w(l.weights.begin(), l.weights.end());
    std::fill(gin.begin(), gin.end(), 0.0);
    for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
            const double* g = &gout[(oh * OW + ow) * O];
            if (gb) {
                for (std::size_t oc = 0; oc < O; ++oc) {
                    (*gb)[oc] += g[oc];
                }
            }
            for (std::size_t kh = 0; kh < K; ++kh) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * S + kh) - pad;
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t kw = 0; kw < K; ++kw) {
                    const auto iw = static_cast<std::ptrdiff_t>(ow * S + kw) - pad;
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                    const std::size_t base = (static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)) * C;
                    const std::size_t wbase = (kh * K + kw) * C * O;
                    for (std::size_t ic = 0; ic < C; ++ic) {
                        const double* wr = &w[wbase + ic * O];
                        double acc = 0.0;
                        for (std::size_t oc = 0; oc < O; ++oc) {
                            acc += wr[oc] * g[oc];
                        }
                        gin[base + ic] += acc;
                        if (gw) {
                            const double xv = in[base + ic];
                            double* gwr = &(*gw)[wbase + ic * O];
                            for (std::size_t oc = 0; oc < O; ++oc) {
                                gwr[oc] += xv * g[oc];
                            }
                        }
                    }
                }
            }
        }
    }
}

void dense_forward(const Layer& l, std::span<const double> in, std::span<double> out) {
    const std::size_t N = l.in_size();
    for (std::size_t o = 0; o < out.size(); ++o) {
        const float* w = &l.weights[o * N];
        double acc = l.bias.empty() ? 0.0 : static_cast<double>(l.bias[o]);
        for (std::size_t i = 0; i < N; ++i) {
            acc += static_cast<double>(w[i]) * in[i];
        }
        out[o] = acc;
    }
}

void dense_backward(const Layer& l, std::span<const double> in, std::span<const double> gout,
                    std::span<double> gin, std::vector<double>* gw, std::vector<double>* gb) {
    const std::size_t N = l.in_size();
    std::fill(gin.begin(), gin.end(), 0.0);
    for (std::size_t o = 0; o < gout.size(); ++o) {
        const double g = gout[o];
        if (g == 0.0) continue;
        const float* w = &l.weights[o * N];
        for (std::size_t i = 0; i < N; ++i) {
            gin[i] += static_cast<double>(w[i]) * g;
        }
        if (gw) {
            double* gwr = &(*gw)[o * N];
            for (std::size_t i = 0; i < N; ++i) {
                gwr[i] += in[i] * g;
            }
        }
        if (gb) {
            (*gb)[o] += g;
        }
    }
}

// Index into `in` of the window maximum for each pooled output; the first
// maximum in scan order wins ties.
std::size_t pool_argmax(const Layer& l, std::span<const double> in, std::size_t oh, std::size_t ow,
                        std::size_t c) {
    const std::size_t W = l.in_shape[1], C = l.in_shape[2];
    const std::size_t K = l.spec.kernel, S = l.spec.stride;
    std::size_t best = (oh * S * W + ow * S) * C + c;
    for (std::size_t kh = 0; kh < K; ++kh) {
        for (std::size_t kw = 0; kw < K; ++kw) {
            const std::size_t idx = ((oh * S + kh) * W + (ow * S + kw)) * C + c;
            if (in[idx] > in[best]) {
                best = idx;
            }
        }
    }
    return best;
}

void pool_forward(const Layer& l, std::span<const double> in, std::span<double> out) {
    const std::size_t OH = l.out_shape[0], OW = l.out_shape[1], C = l.out_shape[2];
    for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow)
            for (std::size_t c = 0; c < C; ++c)
                out[(oh * OW + ow) * C + c] = in[pool_argmax(l, in, oh, ow, c)];
}

void pool_backward(const Layer& l, std::span<const double> in, std::span<const double> gout,
                   std::span<double> gin) {
    const std::size_t OH = l.out_shape[0], OW = l.out_shape[1], C = l.out_shape[2];
    std::fill(gin.begin(), gin.end(), 0.0);
    for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow)
            for (std::size_t c = 0; c < C; ++c)
                gin[pool_argmax(l, in, oh, ow, c)] += gout[(oh * OW + ow) * C + c];
}

void layer_forward(const Layer& l, std::span<const double> in, std::span<double> out) {
    switch (l.spec.kind) {
        case LayerKind::conv2d: conv_forward(l, in, out); break;
        case LayerKind::dense: dense_forward(l, in, out); break;
        case LayerKind::maxpool2d: pool_forward(l, in, out); break;
        case LayerKind::relu:
            for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
            break;
        case LayerKind::flatten: std::copy(in.begin(), in.end(), out.begin()); break;
    }
}

void layer_backward(const Layer& l, std::span<const double> in, std::span<const double> gout,
                    std::span<double> gin, std::vector<double>* gw, std::vector<double>* gb) {
    switch (l.spec.kind) {
        case LayerKind::conv2d: conv_backward(l, in, gout, gin, gw, gb); break;
        case LayerKind::dense: dense_backward(l, in, gout, gin, gw, gb); break;
        case LayerKind::maxpool2d: pool_backward(l, in, gout, gin); break;
        case LayerKind::relu:
            for (std::size_t i = 0; i < in.size(); ++i) gin[i] = in[i] > 0.0 ? gout[i] : 0.0;
            break;
        case LayerKind::flatten: std::copy(gout.begin(), gout.end(), gin.begin()); break;
    }
}

Vector to_double(const Tensor& x) {
    return Vector(x.data().begin(), x.data().end());
}

}  // namespace

// ---------------------------------------------------------------------------

Model Model::resolve(const Architecture& arch) {
    if (arch.input_shape.empty() || shape_size(arch.input_shape) == 0) {
        throw ArchitectureError("input shape must be non-empty");
    }
    if (arch.layers.empty()) {
        throw ArchitectureError("architecture has no layers");
    }
    Model m;
    m.input_shape_ = arch.input_shape;
    std::set<std::string> names;
    Shape shape = arch.input_shape;
    for (const auto& spec : arch.layers) {
        if (spec.name.empty() || !names.insert(spec.name).second) {
            throw ArchitectureError("layer names must be unique and non-empty: '" + spec.name + "'");
        }
        Layer l;
        l.spec = spec;
        l.in_shape = shape;
        switch (spec.kind) {
            case LayerKind::conv2d: {
                if (shape.size() != 3 || spec.units == 0 || spec.kernel == 0 || spec.stride == 0) {
                    throw ArchitectureError("conv2d '" + spec.name + "' needs HxWxC input and positive params");
                }
                const std::size_t pad = spec.kernel / 2;
                const auto extent = [&](std::size_t n) {
                    return (n + 2 * pad - spec.kernel) / spec.stride + 1;
                };
                l.out_shape = {extent(shape[0]), extent(shape[1]), spec.units};
                l.weights.assign(spec.kernel * spec.kernel * shape[2] * spec.units, 0.0f);
                break;
            }
            case LayerKind::dense:
                if (spec.units == 0) {
                    throw ArchitectureError("dense '" + spec.name + "' needs units > 0");
                }
                l.out_shape = {spec.units};
                l.weights.assign(spec.units * shape_size(shape), 0.0f);
                break;
            case LayerKind::maxpool2d:
                if (shape.size() != 3 || spec.kernel == 0 || shape[0] < spec.kernel ||
                    shape[1] < spec.kernel) {
                    throw ArchitectureError("maxpool2d '" + spec.name + "' window does not fit input " +
                                            shape_string(shape));
                }
                l.out_shape = {(shape[0] - spec.kernel) / spec.stride + 1,
                               (shape[1] - spec.kernel) / spec.stride + 1, shape[2]};
                break;
            case LayerKind::relu: l.out_shape = shape; break;
            case LayerKind::flatten: l.out_shape = {shape_size(shape)}; break;
        }
        if (has_params(spec.kind) && spec.bias) {
            l.bias.assign(spec.units, 0.0f);
        }
        shape = l.out_shape;
        m.layers_.push_back(std::move(l));
    }
    if (shape.size() != 1 || shape[0] < 2) {
        throw ArchitectureError("final layer must output a logit vector with >= 2 classes, got " +
                                shape_string(shape));
    }
    m.num_classes_ = shape[0];
    return m;
}

Model Model::zeros(const Architecture& arch) {
    return resolve(arch);
}

Model Model::init(const Architecture& arch, std::uint64_t seed) {
    Model m = resolve(arch);
    const Rng root(seed);
    for (std::size_t i = 0; i < m.layers_.size(); ++i) {
        auto& l = m.layers_[i];
        if (!has_params(l.spec.kind)) continue;
        Rng rng = root.derive("init", i);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in(l)));
        for (auto& w : l.weights) {
            w = static_cast<float>(rng.uniform(-bound, bound));
        }
    }
    m.meta_.seed = seed;
    return m;
}

Architecture Model::architecture() const {
    Architecture arch{input_shape_, {}};
    for (const auto& l : layers_) {
        arch.layers.push_back(l.spec);
    }
    return arch;
}

std::size_t Model::layer_index(std::string_view name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].spec.name == name) {
            return i;
        }
    }
    throw UnknownLayerError("unknown layer '" + std::string(name) + "'");
}

void Model::check_input(const Tensor& x) const {
    if (x.shape() != input_shape_) {
        throw ShapeError("input shape " + shape_string(x.shape()) + " does not match model input " +
                         shape_string(input_shape_));
    }
}

void Model::check_class(std::size_t k) const {
    if (k >= num_classes_) {
        throw std::out_of_range("class index " + std::to_string(k) + " out of range [0, " +
                                std::to_string(num_classes_) + ")");
    }
}

// trace[0] is the input to layer `first`; trace[j + 1] is the output of layer
// first + j.
std::vector<Vector> Model::trace(std::span<const double> input, std::size_t first,
                                 std::size_t last) const {
    std::vector<Vector> t;
    t.reserve(last - first + 2);
    t.emplace_back(input.begin(), input.end());
    for (std::size_t i = first; i <= last; ++i) {
        Vector out(layers_[i].out_size());
        layer_forward(layers_[i], t.back(), out);
        t.push_back(std::move(out));
    }
    return t;
}

Vector Model::backward(const std::vector<Vector>& t, std::size_t first, std::size_t last, Vector grad,
                       ParamGrads* grads) const {
    for (std::size_t i = last + 1; i-- > first;) {
        const auto& l = layers_[i];
        Vector gin(l.in_size());
        std::vector<double>* gw = grads && has_params(l.spec.kind) ? &grads->weights[i] : nullptr;
        std::vector<double>* gb = grads && !l.bias.empty() ? &grads->bias[i] : nullptr;
        layer_backward(l, t[i - first], grad, gin, gw, gb);
        grad = std::move(gin);
    }
    return grad;
}

Vector Model::forward(const Tensor& x) const {
    check_input(x);
    return trace(to_double(x), 0, layers_.size() - 1).back();
}

std::size_t Model::predict(const Tensor& x) const {
    const Vector logits = forward(x);
    return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

Vector Model::activation_at(const Tensor& x, std::string_view layer) const {
    const std::size_t idx = layer_index(layer);
    check_input(x);
    return trace(to_double(x), 0, idx).back();
}

Vector Model::forward_from(std::string_view layer, std::span<const double> activation) const {
    const std::size_t idx = layer_index(layer);
    if (activation.size() != layers_[idx].out_size()) {
        throw ShapeError("activation length " + std::to_string(activation.size()) +
                         " does not match layer '" + std::string(layer) + "' output " +
                         shape_string(layers_[idx].out_shape));
    }
    if (idx + 1 == layers_.size()) {
        return Vector(activation.begin(), activation.end());
    }
    return trace(activation, idx + 1, layers_.size() - 1).back();
}

Tensor Model::grad_logit_wrt_input(const Tensor& x, std::size_t k) const {
    check_input(x);
    check_class(k);
    const std::size_t last = layers_.size() - 1;
    const auto t = trace(to_double(x), 0, last);
    Vector seed(num_classes_, 0.0);
    seed[k] = 1.0;
    const Vector g = backward(t, 0, last, std::move(seed), nullptr);
    std::vector<float> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        out[i] = static_cast<float>(g[i]);
    }
    return Tensor(x.shape(), std::move(out));
}

Vector Model::grad_logit_wrt_activation(const Tensor& x, std::string_view layer, std::size_t k) const {
    const std::size_t idx = layer_index(layer);
    const std::size_t last = layers_.size() - 1;
    if (idx >= last) {
        throw std::invalid_argument("layer '" + std::string(layer) +
                                    "' does not precede the logits");
    }
    check_input(x);
    check_class(k);
    const Vector act = trace(to_double(x), 0, idx).back();
    const auto t = trace(act, idx + 1, last);
    Vector seed(num_classes_, 0.0);
    seed[k] = 1.0;
    return backward(t, idx + 1, last, std::move(seed), nullptr);
}

Model::ParamGrads Model::make_param_grads() const {
    ParamGrads g;
    for (const auto& l : layers_) {
        g.weights.emplace_back(l.weights.size(), 0.0);
        g.bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
}

double Model::accumulate_loss_grad(const Tensor& x, std::size_t label, ParamGrads& grads) const {
    check_input(x);
    check_class(label);
    const std::size_t last = layers_.size() - 1;
    const auto t = trace(to_double(x), 0, last);
    const Vector& logits = t.back();
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    Vector g(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) {
        g[c] = std::exp(logits[c] - mx) / z - (c == label ? 1.0 : 0.0);
    }
    backward(t, 0, last, std::move(g), &grads);
    return std::log(z) + mx - logits[label];
}

// ---------------------------------------------------------------------------

std::pair<double, double> evaluate(const Model& model, const LabeledDataset& dataset, Split split) {
    const auto idx = dataset.indices(split);
    if (idx.empty()) {
        return {0.0, 0.0};
    }
    double loss = 0.0;
    std::size_t correct = 0;
    for (auto i : idx) {
        const Vector logits = model.forward(dataset.images[i]);
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double v : logits) z += std::exp(v - mx);
        loss += std::log(z) + mx - logits[dataset.labels[i]];
        const auto pred = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
        correct += pred == dataset.labels[i] ? 1 : 0;
    }
    const auto n = static_cast<double>(idx.size());
    return {loss / n, static_cast<double>(correct) / n};
}

TrainResult train(const Architecture& arch, const TrainConfig& config, const LabeledDataset& dataset,
                  std::uint64_t seed) {
    const auto train_idx = dataset.indices(Split::train);
    if (train_idx.empty()) {
        throw std::invalid_argument("train: dataset has no training images");
    }
    if (config.batch_size == 0) {
        throw std::invalid_argument("train: batch_size must be positive");
    }
    Model model = Model::init(arch, seed);
    for (auto label : dataset.labels) {
        if (label >= model.num_classes()) {
            throw std::invalid_argument("train: label " + std::to_string(label) + " outside [0, " +
                                        std::to_string(model.num_classes()) + ")");
        }
    }

    const Rng root(seed);
    auto velocity = model.make_param_grads();
    TrainResult result{model, {}};
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng order_rng = root.derive("epoch-order", epoch);
        std::vector<std::size_t> order = train_idx;
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            auto grads = model.make_param_grads();
            for (std::size_t j = start; j < end; ++j) {
                epoch_loss += model.accumulate_loss_grad(dataset.images[order[j]], dataset.labels[order[j]], grads);
            }
            if (!std::isfinite(epoch_loss)) {
                throw TrainingError("training loss became non-finite at epoch " + std::to_string(epoch + 1),
                                    epoch + 1);
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            auto& layers = model.mutable_layers();
            for (std::size_t li = 0; li < layers.size(); ++li) {
                auto step = [&](std::vector<float>& params, std::vector<double>& vel,
                                const std::vector<double>& g) {
                    for (std::size_t p = 0; p < params.size(); ++p) {
                        vel[p] = config.momentum * vel[p] - config.learning_rate * g[p] * scale;
                        params[p] = static_cast<float>(static_cast<double>(params[p]) + vel[p]);
                    }
                };
                step(layers[li].weights, velocity.weights[li], grads.weights[li]);
                step(layers[li].bias, velocity.bias[li], grads.bias[li]);
            }
        }
        EpochStats stats;
        stats.epoch = epoch + 1;
        std::tie(stats.train_loss, stats.train_accuracy) = evaluate(model, dataset, Split::train);
        std::tie(stats.valid_loss, stats.valid_accuracy) = evaluate(model, dataset, Split::valid);
        std::tie(stats.test_loss, stats.test_accuracy) = evaluate(model, dataset, Split::test);
        if (!std::isfinite(stats.train_loss)) {
            throw TrainingError("training loss became non-finite at epoch " + std::to_string(epoch + 1),
                                epoch + 1);
        }
        result.log.push_back(stats);
    }
    TrainingMeta meta;
    meta.seed = seed;
    meta.epochs = config.epochs;
    if (!result.log.empty()) {
        meta.train_accuracy = result.log.back().train_accuracy;
        meta.valid_accuracy = result.log.back().valid_accuracy;
    }
    model.set_training_meta(meta);
    result.model = std::move(model);
    return result;
}

}  // namespace cprobe::diffnet
