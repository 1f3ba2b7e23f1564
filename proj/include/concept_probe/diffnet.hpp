#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "concept_probe/dataset.hpp"
#include "concept_probe/linalg.hpp"
#include "concept_probe/tensor.hpp"

namespace cprobe::diffnet {

using linalg::Vector;

enum class LayerKind { conv2d, dense, relu, maxpool2d, flatten };

std::string_view kind_name(LayerKind kind);
LayerKind parse_kind(std::string_view name);

class UnknownLayerError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

class ArchitectureError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

/// Loss went non-finite during training.
class TrainingError : public std::runtime_error {
 public:
    TrainingError(const std::string& what, std::size_t epoch)
        : std::runtime_error(what), epoch_(epoch) {}
    std::size_t epoch() const { return epoch_; }

 private:
    std::size_t epoch_;
};

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::string name;
    std::size_t units = 0;   // conv2d: output channels, dense: output units
    std::size_t kernel = 0;  // conv2d: square kernel size, maxpool2d: window
    std::size_t stride = 1;  // conv2d and maxpool2d
    bool bias = true;

    static LayerSpec conv2d(std::string name, std::size_t channels, std::size_t kernel,
                            std::size_t stride = 1, bool bias = true);
    static LayerSpec dense(std::string name, std::size_t units, bool bias = true);
    static LayerSpec relu(std::string name);
    static LayerSpec maxpool2d(std::string name, std::size_t window);
    static LayerSpec flatten(std::string name);
};

struct Architecture {
    Shape input_shape;
    std::vector<LayerSpec> layers;
};

/// conv 3x3x8, relu, maxpool, conv 3x3x16, relu, maxpool, flatten, dense 64,
/// relu, dense num_classes. The flatten layer is named "bottleneck".
Architecture toy_cnn(std::size_t num_classes, Shape input_shape = {32, 32, 1});

inline constexpr std::string_view kBottleneck = "bottleneck";

/// A layer with resolved shapes and its parameters. Convolution weights are
/// stored [kh][kw][in][out]; dense weights [out][in], so row k of the final
/// dense layer holds the weights into logit k.
struct Layer {
    LayerSpec spec;
    Shape in_shape;
    Shape out_shape;
    std::vector<float> weights;
    std::vector<float> bias;

    std::size_t in_size() const { return shape_size(in_shape); }
    std::size_t out_size() const { return shape_size(out_shape); }
};

struct TrainingMeta {
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    double train_accuracy = 0.0;
    double valid_accuracy = 0.0;
};

/// Per-epoch row of the training log. Accuracies are fractions in [0, 1].
struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double valid_loss = 0.0;
    double valid_accuracy = 0.0;
    double test_loss = 0.0;
    double test_accuracy = 0.0;
};

class Model {
 public:
    /// Resolves shapes and initializes weights He-uniform from `seed`
    /// (U(-b, b) with b = sqrt(6 / fan_in)); biases start at zero.
    static Model init(const Architecture& arch, std::uint64_t seed);

    /// Resolves shapes; every parameter is zero.
    static Model zeros(const Architecture& arch);

    const Shape& input_shape() const { return input_shape_; }
    std::size_t num_classes() const { return num_classes_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& mutable_layers() { return layers_; }
    Architecture architecture() const;

    const TrainingMeta& training_meta() const { return meta_; }
    void set_training_meta(const TrainingMeta& meta) { meta_ = meta; }

    std::size_t layer_index(std::string_view name) const;
    const Layer& layer(std::string_view name) const { return layers_[layer_index(name)]; }

    /// Pre-softmax logits.
    Vector forward(const Tensor& x) const;
    std::size_t predict(const Tensor& x) const;

    /// Output of `layer`, flattened row-major.
    Vector activation_at(const Tensor& x, std::string_view layer) const;

    /// Runs the layers after `layer` on a (flattened) activation of that layer.
    Vector forward_from(std::string_view layer, std::span<const double> activation) const;

    /// d logit_k / d x, same shape as x.
    Tensor grad_logit_wrt_input(const Tensor& x, std::size_t k) const;

    /// d logit_k / d (flattened output of `layer`). `layer` must precede the
    /// final layer.
    Vector grad_logit_wrt_activation(const Tensor& x, std::string_view layer, std::size_t k) const;

    /// Sum of a softmax cross-entropy gradient over a batch, used by training.
    /// Returns the summed loss; grads are laid out like the parameters.
    struct ParamGrads {
        std::vector<std::vector<double>> weights;
        std::vector<std::vector<double>> bias;
    };
    ParamGrads make_param_grads() const;
    double accumulate_loss_grad(const Tensor& x, std::size_t label, ParamGrads& grads) const;

 private:
    Model() = default;
    static Model resolve(const Architecture& arch);

    void check_input(const Tensor& x) const;
    void check_class(std::size_t k) const;
    std::vector<Vector> trace(std::span<const double> input, std::size_t first,
                              std::size_t last) const;
    // Backpropagates grad at the output of layer `last` down to the input of
    // layer `first`. Parameter gradients are accumulated into grads if given.
    Vector backward(const std::vector<Vector>& trace, std::size_t first, std::size_t last,
                    Vector grad, ParamGrads* grads) const;

    Shape input_shape_;
    std::size_t num_classes_ = 0;
    std::vector<Layer> layers_;
    TrainingMeta meta_;
};

struct TrainConfig {
    std::size_t epochs = 12;
    std::size_t batch_size = 16;
    double learning_rate = 0.01;
    double momentum = 0.9;
};

struct TrainResult {
    Model model;
    std::vector<EpochStats> log;
};

/// Minibatch SGD with momentum on softmax cross-entropy over the train split.
/// Deterministic for a given seed. Throws TrainingError on a non-finite loss.
TrainResult train(const Architecture& arch, const TrainConfig& config,
                  const LabeledDataset& dataset, std::uint64_t seed);

/// Mean cross-entropy and accuracy of the model on a split.
std::pair<double, double> evaluate(const Model& model, const LabeledDataset& dataset, Split split);

// Model files: "CPNN", u32 version, u64 header length, header JSON, then the
// float32 little-endian weight and bias blocks in layer order.
inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);
std::string model_header_json(const Model& model);

}  // namespace cprobe::diffnet
