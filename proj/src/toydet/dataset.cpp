#include "irgsfda/toydet/dataset.hpp"

#include <cstdio>
#include <fstream>

#include "irgsfda/numerics/tensor_io.hpp"
#include "json.hpp"

namespace irgsfda::toydet {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string scene_file(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%06zu.bin", i);
    return std::string("scenes/") + buf;
}

json domain_json(const DomainSpec& d) {
    return {{"name", d.name},
            {"brightness", d.brightness},
            {"contrast", d.contrast},
            {"noise_sigma", d.noise_sigma},
            {"fog_alpha", d.fog_alpha}};
}

DomainSpec domain_from(const json& j) {
    DomainSpec d;
    d.name = j.at("name").get<std::string>();
    d.brightness = j.at("brightness").get<double>();
    d.contrast = j.at("contrast").get<double>();
    d.noise_sigma = j.at("noise_sigma").get<double>();
    d.fog_alpha = j.at("fog_alpha").get<double>();
    return d;
}

}  // namespace

void save_dataset(const fs::path& dir, const Dataset& data) {
    fs::create_directories(dir / "scenes");
    json scenes = json::array();
    for (std::size_t i = 0; i < data.scenes.size(); ++i) {
        const auto& s = data.scenes[i];
        json objects = json::array();
        for (const auto& o : s.objects)
            objects.push_back({{"box", {o.box.x1, o.box.y1, o.box.x2, o.box.y2}}, {"class_id", o.class_id}});
        const std::string file = scene_file(i);
        numerics::write_raw(dir / file, s.image);
        scenes.push_back({{"file", file}, {"seed", s.seed}, {"objects", std::move(objects)}});
    }
    json index = {{"format", kDatasetFormat},
                  {"domain", domain_json(data.domain)},
                  {"base_seed", data.base_seed},
                  {"count", data.scenes.size()},
                  {"image_shape", {kChannels, kImageSize, kImageSize}},
                  {"scenes", std::move(scenes)}};
    std::ofstream out(dir / "index.json", std::ios::trunc);
    if (!out) throw numerics::FormatError("cannot write " + (dir / "index.json").string());
    out << index.dump(1) << '\n';
}

Dataset load_dataset(const fs::path& dir) {
    std::ifstream in(dir / "index.json");
    if (!in) throw numerics::FormatError("missing dataset index " + (dir / "index.json").string());
    json index;
    try {
        index = json::parse(in);
    } catch (const json::exception& e) {
        throw numerics::FormatError("malformed dataset index: " + std::string(e.what()));
    }
    const std::string format = index.value("format", "");
    if (format != kDatasetFormat)
        throw numerics::FormatError("unsupported dataset format '" + format + "' in " + dir.string());
    Dataset data;
    try {
        data.domain = domain_from(index.at("domain"));
        data.base_seed = index.at("base_seed").get<std::uint64_t>();
        const numerics::Shape shape{kChannels, kImageSize, kImageSize};
        for (const auto& s : index.at("scenes")) {
            SyntheticScene scene;
            scene.seed = s.at("seed").get<std::uint64_t>();
            for (const auto& o : s.at("objects")) {
                const auto b = o.at("box").get<std::vector<double>>();
                if (b.size() != 4) throw numerics::FormatError("box must have four coordinates");
                scene.objects.push_back({{b[0], b[1], b[2], b[3]}, o.at("class_id").get<int>()});
            }
            scene.image = numerics::read_raw(dir / s.at("file").get<std::string>(), shape);
            data.scenes.push_back(std::move(scene));
        }
    } catch (const json::exception& e) {
        throw numerics::FormatError("malformed dataset index: " + std::string(e.what()));
    }
    return data;
}

}  // namespace irgsfda::toydet
