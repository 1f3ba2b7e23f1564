#include <gtest/gtest.h>

#include <algorithm>

#include "concept_probe/linalg.hpp"
#include "concept_probe/synthdata.hpp"
#include "support/world.hpp"

using namespace cprobe;
using namespace cprobe::synthdata;
using testing_support::default_world;

TEST(Recipe, DefaultConceptMembership) {
    const auto r = default_recipe();
    validate_recipe(r);
    EXPECT_EQ(concept_classes(r, "stripes"), (std::set<std::size_t>{0, 2}));
    EXPECT_EQ(concept_classes(r, "circle"), (std::set<std::size_t>{0, 1}));
    EXPECT_EQ(concept_classes(r, "triangle"), (std::set<std::size_t>{2, 3}));
    EXPECT_THROW(concept_classes(r, "fins"), RecipeError);
}

TEST(Recipe, InvalidRecipesRejected) {
    auto few = default_recipe();
    few.classes.pop_back();
    EXPECT_THROW(validate_recipe(few), RecipeError);

    auto bad_shape = default_recipe();
    bad_shape.classes[0].shape = "hexagon";
    EXPECT_THROW(validate_recipe(bad_shape), RecipeError);

    auto lonely = default_recipe();
    lonely.concepts.push_back({"square", "shape", "square"});
    EXPECT_THROW(validate_recipe(lonely), RecipeError);

    EXPECT_THROW(generate_dataset(few, 0), RecipeError);
}

TEST(Dataset, DefaultCounts) {
    const auto& ds = default_world().bundle.dataset;
    ASSERT_EQ(ds.num_classes(), 4u);
    EXPECT_EQ(ds.size(), 1600u);
    for (std::size_t c = 0; c < 4; ++c) {
        std::map<Split, int> per_split;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.labels[i] == c) ++per_split[ds.splits[i]];
        }
        EXPECT_EQ(per_split[Split::train], 300);
        EXPECT_EQ(per_split[Split::valid], 50);
        EXPECT_EQ(per_split[Split::test], 50);
    }
}

TEST(Dataset, PixelRangeAndShape) {
    const auto& ds = default_world().bundle.dataset;
    float lo = 1.0f, hi = 0.0f;
    for (const auto& img : ds.images) {
        ASSERT_EQ(img.shape(), (Shape{32, 32, 1}));
        for (float v : img.data()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    EXPECT_GE(lo, 0.0f);
    EXPECT_LE(hi, 1.0f);
}

TEST(Dataset, DeterministicAndSeedSensitive) {
    auto r = default_recipe();
    r.n_train = 4;
    r.n_valid = 2;
    r.n_test = 2;
    const auto a = generate_dataset(r, 5), b = generate_dataset(r, 5), c = generate_dataset(r, 6);
    EXPECT_EQ(a.images, b.images);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(a.images, c.images);
}

TEST(Dataset, GroundTruthMembershipStored) {
    const auto& ds = default_world().bundle.dataset;
    for (auto i : ds.indices(Split::test)) {
        EXPECT_EQ(ds.is_concept_member("stripes", i), ds.labels[i] == 0 || ds.labels[i] == 2);
        EXPECT_EQ(ds.is_concept_member("circle", i), ds.labels[i] <= 1);
    }
}

TEST(ConceptSets, DisjointFromTestImages) {
    const auto& w = default_world();
    const auto stripes = generate_concept_set(default_recipe(), "stripes", 30, 1);
    ASSERT_EQ(stripes.examples.size(), 30u);
    EXPECT_EQ(stripes.target_classes, (std::set<std::size_t>{0, 2}));
    for (const auto& e : stripes.examples) {
        for (const auto& t : w.test.images) {
            ASSERT_FALSE(e == t);
        }
    }
}

TEST(ConceptSets, SeedSensitiveAndValidated) {
    const auto r = default_recipe();
    const auto a = generate_concept_set(r, "circle", 30, 1), b = generate_concept_set(r, "circle", 30, 2);
    EXPECT_NE(a.examples, b.examples);
    EXPECT_EQ(a.examples, generate_concept_set(r, "circle", 30, 1).examples);
    EXPECT_THROW(generate_concept_set(r, "fins", 30, 1), RecipeError);
    EXPECT_THROW(generate_concept_set(r, "circle", 5, 1), RecipeError);
}

TEST(ConceptSets, BottleneckMeansSeparatedByGoldenMargin) {
    const auto& w = default_world();
    auto mean_activation = [&](const ConceptSet& cs) {
        std::vector<linalg::Vector> acts;
        for (const auto& e : cs.examples) acts.push_back(w.model.activation_at(e, diffnet::kBottleneck));
        return linalg::mean(acts);
    };
    const double margin =
        linalg::norm(linalg::subtract(mean_activation(w.concept_set("circle")), mean_activation(w.concept_set("stripes"))));
    EXPECT_GT(margin, 0.0);
    EXPECT_NEAR(margin, testing_support::golden("concept_margin_circle_vs_stripes"), 1e-9);
}

TEST(RandomInputs, RangeDeterminismAndMean) {
    const auto a = generate_random_inputs(50, {32, 32, 1}, 5);
    ASSERT_EQ(a.size(), 50u);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& t : a) {
        ASSERT_EQ(t.shape(), (Shape{32, 32, 1}));
        for (float v : t.data()) {
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
            sum += v;
            ++n;
        }
    }
    EXPECT_NEAR(sum / static_cast<double>(n), 0.5, 0.02);
    EXPECT_EQ(a, generate_random_inputs(50, {32, 32, 1}, 5));
}
