#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "concept_probe/dataset.hpp"
#include "concept_probe/tensor.hpp"

namespace cprobe::synthdata {

class RecipeError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

/// Shapes: "circle", "triangle", "square". Textures: "plain", "stripes",
/// "checker".
struct ClassRecipe {
    std::string name;
    std::string shape;
    std::string texture;
};

/// A concept is one attribute value ("shape" or "texture") shared by several
/// classes.
struct ConceptRecipe {
    std::string name;
    std::string attribute;
    std::string value;
};

struct DatasetRecipe {
    std::size_t image_size = 32;
    std::vector<ClassRecipe> classes;
    std::vector<ConceptRecipe> concepts;
    std::size_t n_train = 300;  // per class
    std::size_t n_valid = 50;
    std::size_t n_test = 50;
};

/// Four classes {striped-circle, plain-circle, striped-triangle,
/// plain-triangle} with concepts "stripes" (classes 0, 2), "circle" (0, 1)
/// and "triangle" (2, 3).
DatasetRecipe default_recipe();

/// Throws RecipeError unless there are >= 4 classes, attribute values are
/// known, and every concept is shared by >= 2 classes.
void validate_recipe(const DatasetRecipe& recipe);

std::set<std::size_t> concept_classes(const DatasetRecipe& recipe, const std::string& concept_name);

Shape image_shape(const DatasetRecipe& recipe);

LabeledDataset generate_dataset(const DatasetRecipe& recipe, std::uint64_t seed);

struct ConceptSet {
    std::string name;
    std::vector<Tensor> examples;
    std::set<std::size_t> target_classes;
};

inline constexpr std::size_t kMinConceptExamples = 10;

/// K images showing the concept out of class context: texture concepts as a
/// textured patch on a noise background, shape concepts as a lone shape with
/// a randomly chosen fill texture on a noise background.
ConceptSet generate_concept_set(const DatasetRecipe& recipe, const std::string& concept_name,
                                std::size_t count, std::uint64_t seed);

/// L i.i.d. U[0, 1] tensors.
std::vector<Tensor> generate_random_inputs(std::size_t count, const Shape& shape, std::uint64_t seed);

}  // namespace cprobe::synthdata
