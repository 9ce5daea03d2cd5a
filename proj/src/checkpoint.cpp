#include "rim/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "rim/common.hpp"

namespace rim {

namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'R', 'I', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

template <class T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class T>
T read_pod(std::ifstream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    check(in.good(), "checkpoint: truncated file");
    return v;
}

bool host_is_little_endian() {
    const uint32_t probe = 0x01020304;
    unsigned char bytes[4];
    std::memcpy(bytes, &probe, 4);
    return bytes[0] == 0x04;
}

template <class S>
const char* dtype_name();
template <>
const char* dtype_name<float>() { return "f32"; }
template <>
const char* dtype_name<double>() { return "f64"; }

json read_header(std::ifstream& in, const std::string& path) {
    char magic[8];
    in.read(magic, 8);
    check(in.good() && std::memcmp(magic, kMagic, 8) == 0,
          "checkpoint: bad magic in " + path);
    const uint32_t version = read_pod<uint32_t>(in);
    check(version == kVersion, "checkpoint: unsupported version " + std::to_string(version));
    const uint64_t hlen = read_pod<uint64_t>(in);
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    check(in.good(), "checkpoint: truncated header in " + path);
    json header = json::parse(htext);
    check(header.at("byte_order").get<std::string>() == "little",
          "checkpoint: byte order mismatch");
    return header;
}

}  // namespace

template <class S>
void save_checkpoint(const std::string& path, const Model<S>& model,
                     const CheckpointMeta& meta) {
    check(host_is_little_endian(), "checkpoint: writer requires a little-endian host");
    json dir = json::array();
    uint64_t offset = 0;
    for (const auto& t : model.tensors) {
        const uint64_t bytes = static_cast<uint64_t>(t.value.size()) * sizeof(S);
        dir.push_back({{"name", t.name},
                       {"rows", t.value.rows()},
                       {"cols", t.value.cols()},
                       {"dtype", dtype_name<S>()},
                       {"offset", offset},
                       {"trainable", t.trainable},
                       {"frozen_cols", t.frozen_cols}});
        offset += bytes;
    }
    json header = {{"config", json::parse(model.config.to_json())},
                   {"tensors", dir},
                   {"metadata", meta},
                   {"byte_order", "little"}};
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), "checkpoint: cannot open for writing: " + path);
    out.write(kMagic, 8);
    write_pod<uint32_t>(out, kVersion);
    write_pod<uint64_t>(out, htext.size());
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& t : model.tensors) {
        out.write(reinterpret_cast<const char*>(t.value.data()),
                  static_cast<std::streamsize>(t.value.size() * sizeof(S)));
    }
    check(out.good(), "checkpoint: write failed: " + path);
}

template <class S>
Model<S> load_checkpoint(const std::string& path, CheckpointMeta* meta) {
    check(host_is_little_endian(), "checkpoint: reader requires a little-endian host");
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "checkpoint: cannot open: " + path);
    json header = read_header(in, path);
    const std::streampos data_start = in.tellg();

    ModelConfig config = ModelConfig::from_json(header.at("config").dump());
    Model<S> model = Model<S>::init(config, 0);  // structure only; values overwritten

    const json& dir = header.at("tensors");
    check(dir.size() == model.tensors.size(),
          "checkpoint: tensor count mismatch in " + path);
    for (size_t i = 0; i < model.tensors.size(); ++i) {
        const json& e = dir[i];
        Tensor<S>& t = model.tensors[i];
        check(e.at("name").get<std::string>() == t.name,
              "checkpoint: tensor order mismatch at " + t.name);
        check(e.at("rows").get<Eigen::Index>() == t.value.rows() &&
                  e.at("cols").get<Eigen::Index>() == t.value.cols(),
              "checkpoint: shape mismatch for " + t.name);
        check(e.at("dtype").get<std::string>() == dtype_name<S>(),
              "checkpoint: dtype mismatch for " + t.name +
                  " (convert via the matching scalar loader)");
        t.trainable = e.at("trainable").get<bool>();
        t.frozen_cols = e.at("frozen_cols").get<int>();
        in.seekg(data_start + static_cast<std::streamoff>(e.at("offset").get<uint64_t>()));
        in.read(reinterpret_cast<char*>(t.value.data()),
                static_cast<std::streamsize>(t.value.size() * sizeof(S)));
        check(in.good(), "checkpoint: truncated data for " + t.name);
    }
    if (meta) *meta = header.at("metadata").get<CheckpointMeta>();
    return model;
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "checkpoint: cannot open: " + path);
    json header = read_header(in, path);
    return header.at("metadata").get<CheckpointMeta>();
}

template void save_checkpoint<float>(const std::string&, const Model<float>&,
                                     const CheckpointMeta&);
template void save_checkpoint<double>(const std::string&, const Model<double>&,
                                      const CheckpointMeta&);
template Model<float> load_checkpoint<float>(const std::string&, CheckpointMeta*);
template Model<double> load_checkpoint<double>(const std::string&, CheckpointMeta*);

}  // namespace rim
