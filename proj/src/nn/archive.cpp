#include "convad/nn/archive.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace convad::nn {

void write_archive(const std::filesystem::path& path, nlohmann::json manifest, const std::vector<ParamRef>& params) {
    auto table = nlohmann::json::array();
    for (const auto& p : params) table.push_back({{"name", p.name}, {"size", p.value.size()}});
    manifest["tensors"] = table;
    const std::string text = manifest.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(kArchiveMagic, sizeof kArchiveMagic);
    const std::uint32_t version = kArchiveVersion;
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params)
        out.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.value.size_bytes()));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kArchiveMagic, sizeof magic) != 0)
        throw std::runtime_error(path.string() + " is not a convad archive");
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (version != kArchiveVersion) throw std::runtime_error("unsupported archive version " + std::to_string(version));
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("truncated archive manifest in " + path.string());

    Archive a;
    a.manifest = nlohmann::json::parse(text);
    for (const auto& t : a.manifest.at("tensors")) {
        std::vector<float> data(t.at("size").get<std::size_t>());
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
        if (!in) throw std::runtime_error("truncated tensor " + t.at("name").get<std::string>());
        a.tensors[t.at("name").get<std::string>()] = std::move(data);
    }
    return a;
}

void load_params(const Archive& archive, const std::vector<ParamRef>& params) {
    for (const auto& p : params) {
        auto it = archive.tensors.find(p.name);
        if (it == archive.tensors.end()) throw std::runtime_error("archive lacks tensor " + p.name);
        if (it->second.size() != p.value.size())
            throw std::runtime_error("tensor " + p.name + " has " + std::to_string(it->second.size()) +
                                     " values, expected " + std::to_string(p.value.size()));
        std::copy(it->second.begin(), it->second.end(), p.value.begin());
    }
}

}  // namespace convad::nn
