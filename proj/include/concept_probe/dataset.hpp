#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "concept_probe/tensor.hpp"

namespace cprobe {

enum class Split { train, valid, test };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

/// Labeled images tagged with their split. Concept membership is stored as
/// the set of classes each concept covers, so ground truth for any image is
/// `concept_classes.at(name).contains(labels[i])`.
struct LabeledDataset {
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    std::vector<Split> splits;
    std::vector<std::string> class_names;
    std::map<std::string, std::set<std::size_t>> concept_classes;

    std::size_t size() const { return images.size(); }
    std::size_t num_classes() const { return class_names.size(); }

    /// Indices of the images in one split, in storage order.
    std::vector<std::size_t> indices(Split s) const;

    bool is_concept_member(std::string_view concept_name, std::size_t image_index) const;
};

/// A split materialized as parallel vectors, the shape evaluation code wants.
struct ImageSet {
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    std::vector<std::size_t> ids;  // index into the source dataset
};

ImageSet select_split(const LabeledDataset& ds, Split s);

}  // namespace cprobe
