#include <cstring>
#include <fstream>

#include "concept_probe/diffnet.hpp"
#include "json.hpp"

namespace cprobe::diffnet {

using nlohmann::json;

namespace {

json layer_json(const Layer& l) {
    json j = {{"name", l.spec.name},
              {"kind", kind_name(l.spec.kind)},
              {"in_shape", l.in_shape},
              {"out_shape", l.out_shape}};
    switch (l.spec.kind) {
        case LayerKind::conv2d:
            j["channels"] = l.spec.units;
            j["kernel"] = l.spec.kernel;
            j["stride"] = l.spec.stride;
            j["bias"] = l.spec.bias;
            j["weight_layout"] = "kh,kw,in,out";
            break;
        case LayerKind::dense:
            j["units"] = l.spec.units;
            j["bias"] = l.spec.bias;
            j["weight_layout"] = "out,in";
            break;
        case LayerKind::maxpool2d:
            j["window"] = l.spec.kernel;
            break;
        default: break;
    }
    return j;
}

LayerSpec spec_from_json(const json& j) {
    const std::string name = j.at("name").get<std::string>();
    switch (parse_kind(j.at("kind").get<std::string>())) {
        case LayerKind::conv2d:
            return LayerSpec::conv2d(name, j.at("channels").get<std::size_t>(), j.at("kernel").get<std::size_t>(),
                                     j.at("stride").get<std::size_t>(), j.at("bias").get<bool>());
        case LayerKind::dense:
            return LayerSpec::dense(name, j.at("units").get<std::size_t>(), j.at("bias").get<bool>());
        case LayerKind::maxpool2d: return LayerSpec::maxpool2d(name, j.at("window").get<std::size_t>());
        case LayerKind::relu: return LayerSpec::relu(name);
        case LayerKind::flatten: return LayerSpec::flatten(name);
    }
    throw FormatError("unreachable layer kind");
}

}  // namespace

std::string model_header_json(const Model& model) {
    json layers = json::array();
    for (const auto& l : model.layers()) {
        layers.push_back(layer_json(l));
    }
    const auto& meta = model.training_meta();
    json header = {
        {"format", "CPNN"},
        {"input_shape", model.input_shape()},
        {"num_classes", model.num_classes()},
        {"layers", layers},
        {"training_meta",
         {{"seed", meta.seed},
          {"epochs", meta.epochs},
          {"train_accuracy", meta.train_accuracy},
          {"valid_accuracy", meta.valid_accuracy}}},
    };
    return header.dump();
}

void save_model(const std::filesystem::path& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    const std::string header = model_header_json(model);
    out.write("CPNN", 4);
    le::put_u32(out, kModelFormatVersion);
    le::put_u64(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& l : model.layers()) {
        le::put_f32(out, l.weights);
        le::put_f32(out, l.bias);
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::string where = path.string() + ": ";
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "CPNN", 4) != 0) {
        throw FormatError(where + "bad magic (expected CPNN)");
    }
    try {
        const auto version = le::get_u32(in);
        if (version != kModelFormatVersion) {
            throw FormatError("unsupported model format version " + std::to_string(version));
        }
        const auto len = le::get_u64(in);
        if (len > (1u << 26)) {
            throw FormatError("implausible header length");
        }
        std::string text(len, '\0');
        if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
            throw FormatError("truncated header");
        }
        const json header = json::parse(text);
        Architecture arch;
        arch.input_shape = header.at("input_shape").get<Shape>();
        for (const auto& lj : header.at("layers")) {
            arch.layers.push_back(spec_from_json(lj));
        }
        Model model = Model::zeros(arch);
        if (model.num_classes() != header.at("num_classes").get<std::size_t>()) {
            throw FormatError("num_classes disagrees with layer shapes");
        }
        for (auto& l : model.mutable_layers()) {
            le::get_f32(in, l.weights);
            le::get_f32(in, l.bias);
        }
        const auto& mj = header.at("training_meta");
        TrainingMeta meta;
        meta.seed = mj.at("seed").get<std::uint64_t>();
        meta.epochs = mj.at("epochs").get<std::size_t>();
        meta.train_accuracy = mj.at("train_accuracy").get<double>();
        meta.valid_accuracy = mj.at("valid_accuracy").get<double>();
        model.set_training_meta(meta);
        return model;
    } catch (const json::exception& e) {
        throw FormatError(where + "bad header: " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(where + e.what());
    } catch (const ArchitectureError& e) {
        throw FormatError(where + e.what());
    }
}

}  // namespace cprobe::diffnet
