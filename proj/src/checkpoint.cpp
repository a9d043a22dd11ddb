#include "dbigan/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <type_traits>

#include "dbigan/error.hpp"

namespace dbigan {

using nlohmann::json;

namespace {

constexpr std::array<char, 8> kMagic{'D', 'B', 'G', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put_le(std::string& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
}

template <typename TensorT>
struct Block {
    std::string name;
    TensorT* tensor;
};

// Works for const (saving) and mutable (loading) states alike.
template <typename State>
auto blocks_of(State& state) {
    using TensorT = std::conditional_t<std::is_const_v<State>, const Tensor, Tensor>;
    std::vector<Block<TensorT>> out;
    for (NetId id : kAllNets) {
        if (!state.has(id)) continue;
        const std::string net = to_string(id);
        auto& params = state.net(id).parameters();
        auto& opt = state.optim[index_of(id)];
        for (std::size_t i = 0; i < params.size(); ++i) out.push_back({net + "/" + params[i].name, &params[i].value});
        for (std::size_t i = 0; i < opt.m.size(); ++i) out.push_back({net + "/adam.m/" + params[i].name, &opt.m[i]});
        for (std::size_t i = 0; i < opt.v.size(); ++i) out.push_back({net + "/adam.v/" + params[i].name, &opt.v[i]});
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

json parse_header(const std::string& bytes, std::size_t& payload_offset, const std::filesystem::path& path) {
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw IoError(path.string() + " is not a checkpoint archive");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const auto version = get_le<std::uint32_t>(p + 8);
    if (version != kCheckpointVersion) {
        throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto header_len = get_le<std::uint64_t>(p + 12);
    if (20 + header_len > bytes.size()) throw IoError(path.string() + ": truncated header");
    payload_offset = 20 + header_len;
    try {
        return json::parse(bytes.begin() + 20, bytes.begin() + static_cast<std::ptrdiff_t>(payload_offset));
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": corrupt header: " + e.what());
    }
}

} // namespace

std::string checkpoint_filename(std::uint64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_%08llu", static_cast<unsigned long long>(step));
    return buf;
}

json to_json(const LayerSpec& s) {
    json j{{"kind", to_string(s.kind)}, {"units", s.units}, {"activation", to_string(s.activation)}};
    if (s.kind != LayerKind::Dense) {
        j["kernel"] = s.kernel;
        j["stride"] = s.stride;
        j["padding"] = s.padding;
    }
    if (s.reshape) j["reshape"] = {s.reshape->height, s.reshape->width, s.reshape->channels};
    return j;
}

LayerSpec layer_spec_from_json(const json& j) {
    LayerSpec s;
    s.kind = parse_layer_kind(j.at("kind").get<std::string>());
    s.units = j.at("units").get<std::size_t>();
    s.activation = parse_activation(j.value("activation", std::string("identity")));
    s.kernel = j.value("kernel", std::size_t{0});
    s.stride = j.value("stride", std::size_t{1});
    s.padding = j.value("padding", std::size_t{0});
    if (j.contains("reshape")) {
        const auto& r = j.at("reshape");
        s.reshape = Dims{r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>(), r.at(2).get<std::size_t>()};
    }
    return s;
}

json to_json(const NetworkConfig& c) {
    auto stack = [](const std::vector<LayerSpec>& v) {
        json a = json::array();
        for (const auto& s : v) a.push_back(to_json(s));
        return a;
    };
    json j{{"net_id", to_string(c.id)},
           {"d_z", c.d_z},
           {"d_c", c.d_c},
           {"image_shape", {c.image.height, c.image.width, c.image.channels}},
           {"conditioned", c.conditioned},
           {"layers", stack(c.layers)}};
    if (c.id == NetId::D) {
        j["latent_layers"] = stack(c.latent_layers);
        j["joint_layers"] = stack(c.joint_layers);
    }
    return j;
}

NetworkConfig network_config_from_json(const json& j) {
    try {
        NetworkConfig c;
        c.id = parse_net_id(j.at("net_id").get<std::string>());
        c.d_z = j.at("d_z").get<std::size_t>();
        c.d_c = j.at("d_c").get<std::size_t>();
        const auto& s = j.at("image_shape");
        c.image = ImageShape{s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>(), s.at(2).get<std::size_t>()};
        c.conditioned = j.value("conditioned", true);
        auto stack = [&](const char* key) {
            std::vector<LayerSpec> v;
            if (j.contains(key))
                for (const auto& l : j.at(key)) v.push_back(layer_spec_from_json(l));
            return v;
        };
        c.layers = stack("layers");
        c.latent_layers = stack("latent_layers");
        c.joint_layers = stack("joint_layers");
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed network config: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state, const json& extra) {
    json header;
    header["format_version"] = kCheckpointVersion;
    header["step"] = state.step;
    header["seed"] = state.seed;
    header["networks"] = json::array();
    for (const auto& c : state.configs()) header["networks"].push_back(to_json(c));
    header["optimizer_steps"] = json::object();
    for (NetId id : kAllNets)
        if (state.has(id)) header["optimizer_steps"][to_string(id)] = state.optim[index_of(id)].t;
    header["extra"] = extra;

    const auto blocks = blocks_of(state);
    json index = json::array();
    std::size_t offset = 0;
    for (const auto& b : blocks) {
        index.push_back({{"name", b.name}, {"shape", b.tensor->shape()}, {"offset", offset}});
        offset += 4 * b.tensor->size();
    }
    header["tensors"] = index;

    const std::string header_text = header.dump();
    std::string out(kMagic.begin(), kMagic.end());
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, header_text.size());
    out += header_text;
    out.reserve(out.size() + offset);
    for (const auto& b : blocks) {
        for (double v : b.tensor->values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write checkpoint " + tmp);
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw IoError("short write on checkpoint " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

json read_checkpoint_header(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    std::size_t payload = 0;
    return parse_header(bytes, payload, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    std::size_t payload = 0;
    const json header = parse_header(bytes, payload, path);

    LoadedCheckpoint out;
    try {
        std::vector<NetworkConfig> configs;
        for (const auto& c : header.at("networks")) configs.push_back(network_config_from_json(c));
        out.state = build_networks(configs, header.at("seed").get<std::uint64_t>());
        out.state.step = header.at("step").get<std::uint64_t>();
        for (NetId id : kAllNets) {
            if (out.state.has(id)) out.state.optim[index_of(id)].t = header.at("optimizer_steps").at(to_string(id));
        }
        out.extra = header.value("extra", json::object());

        auto blocks = blocks_of(out.state);
        const auto& index = header.at("tensors");
        if (index.size() != blocks.size()) throw IoError(path.string() + ": tensor count does not match networks");
        const auto* base = reinterpret_cast<const unsigned char*>(bytes.data()) + payload;
        const std::size_t payload_size = bytes.size() - payload;
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto& entry = index[i];
            if (entry.at("name").get<std::string>() != blocks[i].name) {
                throw IoError(path.string() + ": unexpected tensor " + entry.at("name").get<std::string>());
            }
            Tensor& t = *blocks[i].tensor;
            if (entry.at("shape").get<Shape>() != t.shape()) throw IoError(path.string() + ": shape mismatch for " + blocks[i].name);
            const std::size_t off = entry.at("offset").get<std::size_t>();
            if (off + 4 * t.size() > payload_size) throw IoError(path.string() + ": truncated tensor data");
            for (std::size_t k = 0; k < t.size(); ++k) {
                t[k] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(base + off + 4 * k)));
            }
        }
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": corrupt header: " + e.what());
    } catch (const ConfigError& e) {
        throw IoError(path.string() + ": invalid network configuration: " + e.what());
    }
    return out;
}

bool bitwise_equal(const ModelState& a, const ModelState& b) {
    const auto ba = blocks_of(a);
    const auto bb = blocks_of(b);
    if (ba.size() != bb.size()) return false;
    for (std::size_t i = 0; i < ba.size(); ++i) {
        if (ba[i].name != bb[i].name || ba[i].tensor->shape() != bb[i].tensor->shape()) return false;
        if (std::memcmp(ba[i].tensor->data(), bb[i].tensor->data(), 8 * ba[i].tensor->size()) != 0) return false;
    }
    for (NetId id : kAllNets)
        if (a.has(id) && a.optim[index_of(id)].t != b.optim[index_of(id)].t) return false;
    return a.step == b.step;
}

} // namespace dbigan
