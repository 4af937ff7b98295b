#include "agat/checkpoint.hpp"

#include <json.hpp>

#include "agat/errors.hpp"
#include "agat/serialize.hpp"

namespace agat::nn {

namespace {

using nlohmann::json;

constexpr char kMagic[] = "AGATCKPT";
constexpr std::uint32_t kVersion = 1;

std::string pack(NetRole role, const json& arch, const std::vector<Param>& params) {
    std::string out;
    out += kMagic;
    put_u32(out, kVersion);
    const std::string arch_text = arch.dump();
    put_u32(out, static_cast<std::uint32_t>(arch_text.size()));
    out += arch_text;
    put_u64(out, params.size());
    for (const Param& p : params) {
        put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out += p.name;
        const Tensor& t = *p.value;
        put_u32(out, static_cast<std::uint32_t>(t.c));
        put_u32(out, static_cast<std::uint32_t>(t.h));
        put_u32(out, static_cast<std::uint32_t>(t.w));
        for (double x : t.v) {
            if (!std::isfinite(x)) throw NumericError("refusing to checkpoint non-finite weight in " + p.name);
            put_f64(out, x);
        }
    }
    (void)role;
    return out;
}

struct Unpacked {
    json arch;
    std::vector<std::pair<std::string, Tensor>> arrays;
};

Unpacked unpack(const std::string& path) {
    ByteReader r(read_file(path));
    if (r.bytes(8) != kMagic) throw std::runtime_error(path + ": not a checkpoint file");
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
    Unpacked u;
    const std::uint32_t arch_len = r.u32();
    u.arch = json::parse(r.bytes(arch_len));
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::uint32_t name_len = r.u32();
        std::string name = r.bytes(name_len);
        const int c = static_cast<int>(r.u32());
        const int h = static_cast<int>(r.u32());
        const int w = static_cast<int>(r.u32());
        Tensor t(c, h, w);
        for (double& x : t.v) x = r.f64();
        u.arrays.emplace_back(std::move(name), std::move(t));
    }
    if (!r.at_end()) throw std::runtime_error(path + ": trailing bytes");
    return u;
}

void restore_params(const Unpacked& u, std::vector<Param> params, const std::string& path) {
    if (params.size() != u.arrays.size()) throw std::runtime_error(path + ": parameter count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].name != u.arrays[i].first) throw std::runtime_error(path + ": parameter name mismatch at " + params[i].name);
        if (!params[i].value->same_shape(u.arrays[i].second)) throw std::runtime_error(path + ": parameter shape mismatch at " + params[i].name);
        *params[i].value = u.arrays[i].second;
        params[i].grad->fill(0.0);
    }
}

}  // namespace

void save_net(const std::string& path, EncoderDecoderNet& net) {
    json arch;
    arch["role"] = role_name(net.role());
    arch["byte_order"] = "little";
    arch["kind"] = "encoder_decoder";
    arch["in_ch"] = net.arch().in_ch;
    arch["out_ch"] = net.arch().out_ch;
    arch["base"] = net.arch().base;
    arch["n_res"] = net.arch().n_res;
    arch["layers"] = net.describe();
    write_file(path, pack(net.role(), arch, net.params()));
}

void save_net(const std::string& path, PatchDiscriminator& net) {
    json arch;
    arch["role"] = role_name(net.role());
    arch["byte_order"] = "little";
    arch["kind"] = "patch_discriminator";
    arch["in_ch"] = net.arch().in_ch;
    arch["base"] = net.arch().base;
    arch["blocks"] = net.arch().blocks;
    arch["head_kernel"] = net.arch().head_kernel;
    arch["layers"] = net.describe();
    write_file(path, pack(net.role(), arch, net.params()));
}

void save_net(const std::string& path, DetectorNet& net) {
    json arch;
    arch["role"] = role_name(NetRole::kDetector);
    arch["byte_order"] = "little";
    arch["kind"] = "detector";
    arch["in_ch"] = net.arch().in_ch;
    arch["base"] = net.arch().base;
    arch["blocks"] = net.arch().blocks;
    arch["head_ch"] = net.arch().head_ch;
    write_file(path, pack(NetRole::kDetector, arch, net.params()));
}

EncoderDecoderNet load_encoder_decoder(const std::string& path) {
    Unpacked u = unpack(path);
    if (u.arch.at("kind") != "encoder_decoder") throw std::runtime_error(path + ": not an encoder/decoder checkpoint");
    EncoderDecoderArch arch;
    arch.in_ch = u.arch.at("in_ch");
    arch.out_ch = u.arch.at("out_ch");
    arch.base = u.arch.at("base");
    arch.n_res = u.arch.at("n_res");
    EncoderDecoderNet net(role_from_name(u.arch.at("role")), arch);
    if (net.describe() != u.arch.at("layers")) throw std::runtime_error(path + ": architecture descriptor mismatch");
    restore_params(u, net.params(), path);
    return net;
}

PatchDiscriminator load_discriminator(const std::string& path) {
    Unpacked u = unpack(path);
    if (u.arch.at("kind") != "patch_discriminator") throw std::runtime_error(path + ": not a discriminator checkpoint");
    DiscriminatorArch arch;
    arch.in_ch = u.arch.at("in_ch");
    arch.base = u.arch.at("base");
    arch.blocks = u.arch.at("blocks");
    arch.head_kernel = u.arch.at("head_kernel");
    PatchDiscriminator net(role_from_name(u.arch.at("role")), arch);
    if (net.describe() != u.arch.at("layers")) throw std::runtime_error(path + ": architecture descriptor mismatch");
    restore_params(u, net.params(), path);
    return net;
}

DetectorNet load_detector(const std::string& path) {
    Unpacked u = unpack(path);
    if (u.arch.at("kind") != "detector") throw std::runtime_error(path + ": not a detector checkpoint");
    DetectorArch arch;
    arch.in_ch = u.arch.at("in_ch");
    arch.base = u.arch.at("base");
    arch.blocks = u.arch.at("blocks");
    arch.head_ch = u.arch.at("head_ch");
    DetectorNet net(arch);
    restore_params(u, net.params(), path);
    return net;
}

NetRole peek_role(const std::string& path) {
    Unpacked u = unpack(path);
    return role_from_name(u.arch.at("role"));
}

void save_optimizer(const std::string& path, const Adam& adam) { write_file(path, adam.serialize()); }

Adam load_optimizer(const std::string& path) { return Adam::deserialize(read_file(path)); }

}  // namespace agat::nn
