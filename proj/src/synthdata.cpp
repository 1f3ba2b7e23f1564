#include "concept_probe/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "concept_probe/rng.hpp"

namespace cprobe::synthdata {

namespace {

constexpr double kPi = std::numbers::pi;

const std::vector<std::string> kShapes = {"circle", "triangle", "square"};
const std::vector<std::string> kTextures = {"plain", "stripes", "checker"};

bool known(const std::vector<std::string>& values, const std::string& v) {
    return std::find(values.begin(), values.end(), v) != values.end();
}

struct ShapeParams {
    std::string kind;
    double cx, cy, radius, angle;
};

struct TextureParams {
    std::string kind;
    double fg, dark, period, angle, phase;
};

bool inside(const ShapeParams& s, double px, double py) {
    const double dx = px - s.cx, dy = py - s.cy;
    if (s.kind == "circle") {
        return dx * dx + dy * dy <= s.radius * s.radius;
    }
    // Rotate into the shape frame.
    const double c = std::cos(-s.angle), sn = std::sin(-s.angle);
    const double x = c * dx - sn * dy, y = sn * dx + c * dy;
    if (s.kind == "square") {
        const double h = s.radius * 0.8;
        return std::abs(x) <= h && std::abs(y) <= h;
    }
    // Equilateral triangle with circumradius `radius`: intersection of three
    // half-planes at distance radius / 2 from the center.
    for (int i = 0; i < 3; ++i) {
        const double a = kPi / 2.0 + 2.0 * kPi * i / 3.0 + kPi;
        if (x * std::cos(a) + y * std::sin(a) > s.radius / 2.0) {
            return false;
        }
    }
    return true;
}

double texture_value(const TextureParams& t, double px, double py) {
    if (t.kind == "plain") {
        return t.fg;
    }
    const double u = px * std::cos(t.angle) + py * std::sin(t.angle);
    if (t.kind == "stripes") {
        return std::sin(2.0 * kPi * u / t.period + t.phase) >= 0.0 ? t.fg : t.dark;
    }
    const double v = -px * std::sin(t.angle) + py * std::cos(t.angle);
    const auto cu = static_cast<long>(std::floor(u / t.period + t.phase));
    const auto cv = static_cast<long>(std::floor(v / t.period));
    return ((cu + cv) % 2 == 0) ? t.fg : t.dark;
}

TextureParams random_texture(const std::string& kind, Rng& rng) {
    TextureParams t;
    t.kind = kind;
    t.fg = rng.uniform(0.65, 1.0);
    t.dark = rng.uniform(0.0, 0.15);
    t.period = kind == "checker" ? rng.uniform(3.0, 5.0) : rng.uniform(4.0, 7.0);
    t.angle = rng.uniform(0.0, kPi);
    t.phase = rng.uniform(0.0, 2.0 * kPi);
    return t;
}

// Background: base level, a linear ramp, and pixel noise of random strength.
std::vector<double> scene_background(std::size_t n, Rng& rng) {
    const double base = rng.uniform(0.05, 0.4);
    const double ramp = rng.uniform(0.0, 0.2);
    const double dir = rng.uniform(0.0, 2.0 * kPi);
    const double noise = rng.uniform(0.0, 0.3);
    std::vector<double> bg(n * n);
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            const double u = (static_cast<double>(x) * std::cos(dir) + static_cast<double>(y) * std::sin(dir)) /
                             static_cast<double>(n);
            bg[y * n + x] = base + ramp * u + noise * rng.uniform(-1.0, 1.0);
        }
    }
    return bg;
}

// Flat noise background used for out-of-context concept examples.
std::vector<double> noise_background(std::size_t n, Rng& rng) {
    const double base = rng.uniform(0.1, 0.4);
    std::vector<double> bg(n * n);
    for (auto& v : bg) {
        v = base + rng.uniform(-0.3, 0.3);
    }
    return bg;
}

// Composites a textured region over the background with 4x4 supersampled
// coverage.
template <typename Inside>
Tensor composite(std::size_t n, const std::vector<double>& bg, const TextureParams& tex, Inside&& in) {
    Tensor img({n, n, 1});
    constexpr int kSub = 4;
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSub; ++sy) {
                for (int sx = 0; sx < kSub; ++sx) {
                    const double px = static_cast<double>(x) + (sx + 0.5) / kSub;
                    const double py = static_cast<double>(y) + (sy + 0.5) / kSub;
                    hits += in(px, py) ? 1 : 0;
                }
            }
            const double cov = hits / static_cast<double>(kSub * kSub);
            const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
            const double v = (1.0 - cov) * bg[y * n + x] + cov * texture_value(tex, px, py);
            img[y * n + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return img;
}

ShapeParams random_shape(const std::string& kind, std::size_t n, Rng& rng) {
    ShapeParams s;
    s.kind = kind;
    const double size = static_cast<double>(n);
    s.radius = rng.uniform(0.22, 0.34) * size;
    const double margin = s.radius + 1.0;
    s.cx = rng.uniform(margin, size - margin);
    s.cy = rng.uniform(margin, size - margin);
    s.angle = rng.uniform(0.0, 2.0 * kPi);
    return s;
}

Tensor render_scene(const ClassRecipe& cls, std::size_t n, Rng& rng) {
    const auto bg = scene_background(n, rng);
    const auto shape = random_shape(cls.shape, n, rng);
    const auto tex = random_texture(cls.texture, rng);
    return composite(n, bg, tex, [&](double x, double y) { return inside(shape, x, y); });
}

Tensor render_concept(const ConceptRecipe& c, std::size_t n, Rng& rng) {
    const auto bg = noise_background(n, rng);
    const double size = static_cast<double>(n);
    if (c.attribute == "texture") {
        const auto tex = random_texture(c.value, rng);
        const double w = rng.uniform(0.45, 0.8) * size, h = rng.uniform(0.45, 0.8) * size;
        const double x0 = rng.uniform(0.0, size - w), y0 = rng.uniform(0.0, size - h);
        return composite(n, bg, tex, [&](double x, double y) {
            return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h;
        });
    }
    // Shape concepts take a fill drawn from every texture so that no single
    // texture rides along with the shape.
    const auto shape = random_shape(c.value, n, rng);
    const auto tex = random_texture(kTextures[rng.below(kTextures.size())], rng);
    return composite(n, bg, tex, [&](double x, double y) { return inside(shape, x, y); });
}

const ConceptRecipe& find_concept(const DatasetRecipe& recipe, const std::string& name) {
    for (const auto& c : recipe.concepts) {
        if (c.name == name) {
            return c;
        }
    }
    throw RecipeError("unknown concept '" + name + "'");
}

}  // namespace

DatasetRecipe default_recipe() {
    DatasetRecipe r;
    r.classes = {
        {"striped-circle", "circle", "stripes"},
        {"plain-circle", "circle", "plain"},
        {"striped-triangle", "triangle", "stripes"},
        {"plain-triangle", "triangle", "plain"},
    };
    r.concepts = {
        {"stripes", "texture", "stripes"},
        {"circle", "shape", "circle"},
        {"triangle", "shape", "triangle"},
    };
    return r;
}

void validate_recipe(const DatasetRecipe& recipe) {
    if (recipe.image_size < 8) {
        throw RecipeError("image_size must be at least 8");
    }
    if (recipe.classes.size() < 4) {
        throw RecipeError("recipe needs at least 4 classes, got " + std::to_string(recipe.classes.size()));
    }
    if (recipe.n_train == 0 || recipe.n_valid == 0 || recipe.n_test == 0) {
        throw RecipeError("every split needs at least one image per class");
    }
    std::set<std::string> names;
    for (const auto& c : recipe.classes) {
        if (!names.insert(c.name).second) {
            throw RecipeError("duplicate class name '" + c.name + "'");
        }
        if (!known(kShapes, c.shape)) {
            throw RecipeError("class '" + c.name + "': unknown shape '" + c.shape + "'");
        }
        if (!known(kTextures, c.texture)) {
            throw RecipeError("class '" + c.name + "': unknown texture '" + c.texture + "'");
        }
    }
    std::set<std::string> concept_names;
    for (const auto& c : recipe.concepts) {
        if (!concept_names.insert(c.name).second) {
            throw RecipeError("duplicate concept name '" + c.name + "'");
        }
        if (c.attribute != "shape" && c.attribute != "texture") {
            throw RecipeError("concept '" + c.name + "': attribute must be 'shape' or 'texture'");
        }
        if (!known(c.attribute == "shape" ? kShapes : kTextures, c.value)) {
            throw RecipeError("concept '" + c.name + "': unknown " + c.attribute + " '" + c.value + "'");
        }
        if (concept_classes(recipe, c.name).size() < 2) {
            throw RecipeError("concept '" + c.name + "' must be shared by at least 2 classes");
        }
    }
}

std::set<std::size_t> concept_classes(const DatasetRecipe& recipe, const std::string& concept_name) {
    const auto& c = find_concept(recipe, concept_name);
    std::set<std::size_t> out;
    for (std::size_t i = 0; i < recipe.classes.size(); ++i) {
        const auto& cls = recipe.classes[i];
        if ((c.attribute == "shape" ? cls.shape : cls.texture) == c.value) {
            out.insert(i);
        }
    }
    return out;
}

Shape image_shape(const DatasetRecipe& recipe) {
    return {recipe.image_size, recipe.image_size, 1};
}

LabeledDataset generate_dataset(const DatasetRecipe& recipe, std::uint64_t seed) {
    validate_recipe(recipe);
    LabeledDataset ds;
    for (const auto& c : recipe.classes) {
        ds.class_names.push_back(c.name);
    }
    for (const auto& c : recipe.concepts) {
        ds.concept_classes[c.name] = concept_classes(recipe, c.name);
    }
    const Rng root = Rng(seed).derive("dataset");
    const std::pair<Split, std::size_t> plan[] = {
        {Split::train, recipe.n_train}, {Split::valid, recipe.n_valid}, {Split::test, recipe.n_test}};
    for (const auto& [split, count] : plan) {
        for (std::size_t cls = 0; cls < recipe.classes.size(); ++cls) {
            Rng rng = root.derive(split_name(split), cls);
            for (std::size_t i = 0; i < count; ++i) {
                ds.images.push_back(render_scene(recipe.classes[cls], recipe.image_size, rng));
                ds.labels.push_back(cls);
                ds.splits.push_back(split);
            }
        }
    }
    return ds;
}

ConceptSet generate_concept_set(const DatasetRecipe& recipe, const std::string& concept_name,
                                std::size_t count, std::uint64_t seed) {
    const auto& c = find_concept(recipe, concept_name);
    if (count < kMinConceptExamples) {
        throw RecipeError("concept sets need at least " + std::to_string(kMinConceptExamples) + " examples");
    }
    ConceptSet set;
    set.name = c.name;
    set.target_classes = concept_classes(recipe, c.name);
    Rng rng = Rng(seed).derive("concept:" + c.name);
    for (std::size_t i = 0; i < count; ++i) {
        set.examples.push_back(render_concept(c, recipe.image_size, rng));
    }
    return set;
}

std::vector<Tensor> generate_random_inputs(std::size_t count, const Shape& shape, std::uint64_t seed) {
    Rng rng = Rng(seed).derive("random-inputs");
    std::vector<Tensor> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Tensor t(shape);
        for (auto& v : t.data()) {
            v = static_cast<float>(rng.uniform());
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace cprobe::synthdata
