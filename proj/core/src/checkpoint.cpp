#include "harmony/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <vector>

#include "harmony/errors.hpp"

namespace harmony {

namespace {

constexpr char kMagic[8] = {'H', 'A', 'R', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

std::string dtype_name(torch::ScalarType t) {
    switch (t) {
        case torch::kFloat32: return "f32";
        case torch::kFloat64: return "f64";
        case torch::kInt64: return "i64";
        case torch::kInt32: return "i32";
        case torch::kFloat16: return "f16";
        default: throw ParamError("checkpoint: unsupported dtype");
    }
}

torch::ScalarType dtype_from_name(const std::string& n) {
    if (n == "f32") return torch::kFloat32;
    if (n == "f64") return torch::kFloat64;
    if (n == "i64") return torch::kInt64;
    if (n == "i32") return torch::kInt32;
    if (n == "f16") return torch::kFloat16;
    throw DataError("checkpoint: unknown dtype " + n);
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::map<std::string, torch::Tensor>& tensors,
                     const nlohmann::json& meta) {
    nlohmann::json index = nlohmann::json::object();
    uint64_t offset = 0;
    std::vector<torch::Tensor> flat;
    flat.reserve(tensors.size());
    for (const auto& [name, t] : tensors) {
        torch::Tensor c = t.detach().to(torch::kCPU).contiguous();
        const uint64_t nbytes = static_cast<uint64_t>(c.numel()) * c.element_size();
        index[name] = {{"dtype", dtype_name(c.scalar_type())},
                       {"shape", c.sizes().vec()},
                       {"offset", offset},
                       {"nbytes", nbytes}};
        offset += nbytes;
        flat.push_back(std::move(c));
    }
    nlohmann::json header = {{"tensors", index}, {"meta", meta}};
    const std::string hs = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("save_checkpoint: cannot open " + path);
    os.write(kMagic, sizeof(kMagic));
    write_pod(os, kVersion);
    write_pod(os, static_cast<uint64_t>(hs.size()));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& t : flat)
        os.write(static_cast<const char*>(t.const_data_ptr()),
                 static_cast<std::streamsize>(t.numel() * t.element_size()));
    if (!os) throw DataError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_checkpoint: cannot open " + path);

    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("load_checkpoint: bad magic in " + path);
    const uint32_t version = read_pod<uint32_t>(is);
    if (version != kVersion) throw DataError("load_checkpoint: unsupported version");
    const uint64_t hlen = read_pod<uint64_t>(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw DataError("load_checkpoint: truncated header in " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("load_checkpoint: header parse: ") + e.what());
    }

    const std::streampos blob_start = is.tellg();
    Checkpoint ck;
    ck.meta = header.value("meta", nlohmann::json::object());
    for (const auto& [name, info] : header.at("tensors").items()) {
        const auto dtype = dtype_from_name(info.at("dtype").get<std::string>());
        const auto shape = info.at("shape").get<std::vector<int64_t>>();
        const auto offset = info.at("offset").get<uint64_t>();
        const auto nbytes = info.at("nbytes").get<uint64_t>();
        torch::Tensor t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
        if (static_cast<uint64_t>(t.numel()) * t.element_size() != nbytes)
            throw DataError("load_checkpoint: size mismatch for tensor " + name);
        is.seekg(blob_start + static_cast<std::streamoff>(offset));
        is.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
        if (!is) throw DataError("load_checkpoint: truncated tensor " + name);
        ck.tensors.emplace(name, std::move(t));
    }
    return ck;
}

std::map<std::string, torch::Tensor> load_safetensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_safetensors: cannot open " + path);
    const uint64_t hlen = read_pod<uint64_t>(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw DataError("load_safetensors: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("load_safetensors: header parse: ") + e.what());
    }

    const std::streampos blob_start = is.tellg();
    std::map<std::string, torch::Tensor> out;
    for (const auto& [name, info] : header.items()) {
        if (name == "__metadata__") continue;
        const std::string dt = info.at("dtype").get<std::string>();
        const auto shape = info.at("shape").get<std::vector<int64_t>>();
        const auto offs = info.at("data_offsets").get<std::vector<uint64_t>>();
        if (offs.size() != 2 || offs[1] < offs[0])
            throw DataError("load_safetensors: bad offsets for " + name);
        const uint64_t nbytes = offs[1] - offs[0];

        torch::ScalarType st;
        bool widen_bf16 = false;
        if (dt == "F32") st = torch::kFloat32;
        else if (dt == "F16") st = torch::kFloat16;
        else if (dt == "F64") st = torch::kFloat64;
        else if (dt == "I64") st = torch::kInt64;
        else if (dt == "I32") st = torch::kInt32;
        else if (dt == "BF16") { st = torch::kBFloat16; widen_bf16 = true; }
        else throw DataError("load_safetensors: unsupported dtype " + dt + " for " + name);

        torch::Tensor t = torch::empty(shape, torch::TensorOptions().dtype(st));
        if (static_cast<uint64_t>(t.numel()) * t.element_size() != nbytes)
            throw DataError("load_safetensors: size mismatch for " + name);
        is.seekg(blob_start + static_cast<std::streamoff>(offs[0]));
        is.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
        if (!is) throw DataError("load_safetensors: truncated tensor " + name);
        out.emplace(name, widen_bf16 ? t.to(torch::kFloat32) : std::move(t));
    }
    return out;
}

std::map<std::string, torch::Tensor> state_tensors(const torch::nn::Module& m) {
    std::map<std::string, torch::Tensor> out;
    for (const auto& p : m.named_parameters(/*recurse=*/true))
        out.emplace(p.key(), p.value().detach().to(torch::kCPU).clone());
    for (const auto& b : m.named_buffers(/*recurse=*/true))
        out.emplace(b.key(), b.value().detach().to(torch::kCPU).clone());
    return out;
}

void load_state_tensors(torch::nn::Module& m, const std::map<std::string, torch::Tensor>& tensors,
                        bool strict) {
    torch::NoGradGuard ng;
    std::set<std::string> used;
    auto apply = [&](const std::string& key, torch::Tensor dst) {
        auto it = tensors.find(key);
        if (it == tensors.end()) {
            if (strict) throw DataError("load_state_tensors: missing tensor " + key);
            return;
        }
        if (!dst.sizes().equals(it->second.sizes()))
            throw DataError("load_state_tensors: shape mismatch for " + key);
        dst.copy_(it->second.to(dst.scalar_type()));
        used.insert(key);
    };
    for (const auto& p : m.named_parameters(true)) apply(p.key(), p.value());
    for (const auto& b : m.named_buffers(true)) apply(b.key(), b.value());
    if (strict && used.size() != tensors.size()) {
        for (const auto& [k, v] : tensors)
            if (!used.count(k)) throw DataError("load_state_tensors: unused tensor " + k);
    }
}

}  // namespace harmony
