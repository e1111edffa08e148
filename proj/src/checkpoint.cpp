#include "layoutflow/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <span>

#include "layoutflow/errors.hpp"

namespace layoutflow {

namespace {

constexpr std::array<char, 8> kMagic{'L', 'F', 'L', 'O', 'W', 'C', 'K', 'P'};

template <typename T>
void write_le(std::ostream& out, T value)
{
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    out.write(bytes.data(), sizeof(T));
}

template <typename T>
T read_le(std::istream& in)
{
    std::array<char, sizeof(T)> bytes;
    if (!in.read(bytes.data(), sizeof(T))) {
        throw FormatError("checkpoint truncated");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

void write_doubles(std::ostream& out, std::span<const double> values)
{
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(double)));
    } else {
        for (double v : values) write_le(out, v);
    }
}

void read_doubles(std::istream& in, std::span<double> values)
{
    if constexpr (std::endian::native == std::endian::little) {
        if (!in.read(reinterpret_cast<char*>(values.data()),
                     static_cast<std::streamsize>(values.size() * sizeof(double)))) {
            throw FormatError("checkpoint truncated");
        }
    } else {
        for (double& v : values) v = read_le<double>(in);
    }
}

} // namespace

std::string to_string(HeadKind head)
{
    return head == HeadKind::Diffusion ? "diffusion" : "flow";
}

HeadKind parse_head_kind(std::string_view name)
{
    if (name == "flow") return HeadKind::Flow;
    if (name == "diffusion") return HeadKind::Diffusion;
    throw FormatError("unknown head kind '" + std::string(name) + "'");
}

nlohmann::json model_config_to_json(const ModelConfig& cfg)
{
    return {{"layers", cfg.layers},     {"heads", cfg.heads}, {"dim", cfg.dim},
            {"ff_dim", cfg.ff_dim},     {"nmax", cfg.nmax},   {"bits", cfg.bits},
            {"time_embed_dim", cfg.time_embed_dim}};
}

ModelConfig model_config_from_json(const nlohmann::json& j)
{
    ModelConfig cfg;
    try {
        cfg.layers = j.at("layers").get<int>();
        cfg.heads = j.at("heads").get<int>();
        cfg.dim = j.at("dim").get<int>();
        cfg.ff_dim = j.at("ff_dim").get<int>();
        cfg.nmax = j.at("nmax").get<int>();
        cfg.bits = j.at("bits").get<int>();
        cfg.time_embed_dim = j.at("time_embed_dim").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path)
{
    nlohmann::json header;
    header["model_config"] = model_config_to_json(ckpt.net.config());
    header["head"] = to_string(ckpt.head);
    header["prior"] = to_string(ckpt.prior);
    header["trajectory"] = to_string(ckpt.trajectory);
    header["diffusion_schedule"] = {{"steps", ckpt.diffusion.steps},
                                    {"beta_start", ckpt.diffusion.beta_start},
                                    {"beta_end", ckpt.diffusion.beta_end}};
    header["categories"] = ckpt.categories.names();
    header["element_histogram"] = ckpt.element_histogram;
    header["step"] = ckpt.step;
    header["train_config"] = ckpt.train_config;
    nlohmann::json slots = nlohmann::json::array();
    for (const auto& s : ckpt.net.slots()) {
        slots.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
    }
    header["parameters"] = slots;
    header["parameter_count"] = ckpt.net.parameter_count();
    header["has_optimizer"] = ckpt.optimizer.has_value();
    const std::string text = header.dump();

    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw FormatError("cannot write checkpoint " + tmp.string());
        }
        out.write(kMagic.data(), kMagic.size());
        write_le<std::uint32_t>(out, kCheckpointVersion);
        write_le<std::uint64_t>(out, text.size());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        write_doubles(out, ckpt.net.parameters());
        if (ckpt.optimizer) {
            if (ckpt.optimizer->m.size() != ckpt.net.parameter_count()) {
                throw ContractError("optimizer state does not match parameter count");
            }
            write_le<std::uint64_t>(out, static_cast<std::uint64_t>(ckpt.optimizer->step));
            write_doubles(out, ckpt.optimizer->m);
            write_doubles(out, ckpt.optimizer->v);
        }
        if (!out) {
            throw FormatError("failed writing checkpoint " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open checkpoint " + path.string());
    }
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw FormatError(path.string() + " is not a layoutflow checkpoint");
    }
    const auto version = read_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto header_len = read_le<std::uint64_t>(in);
    std::string text(header_len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
        throw FormatError("checkpoint truncated");
    }
    Checkpoint ckpt;
    try {
        const auto header = nlohmann::json::parse(text);
        ckpt.net = VectorFieldNet(model_config_from_json(header.at("model_config")));
        ckpt.head = parse_head_kind(header.at("head").get<std::string>());
        ckpt.prior = parse_prior_kind(header.at("prior").get<std::string>());
        ckpt.trajectory = parse_trajectory_kind(header.at("trajectory").get<std::string>());
        const auto& sched = header.at("diffusion_schedule");
        ckpt.diffusion = {sched.at("steps").get<int>(), sched.at("beta_start").get<double>(),
                          sched.at("beta_end").get<double>()};
        ckpt.categories = CategorySet(header.at("categories").get<std::vector<std::string>>());
        ckpt.element_histogram = header.at("element_histogram").get<std::vector<std::int64_t>>();
        ckpt.step = header.at("step").get<std::int64_t>();
        ckpt.train_config = header.at("train_config");
        const auto& slots = header.at("parameters");
        if (slots.size() != ckpt.net.slots().size() ||
            header.at("parameter_count").get<std::size_t>() != ckpt.net.parameter_count()) {
            throw FormatError("parameter table does not match the model configuration");
        }
        for (std::size_t i = 0; i < slots.size(); ++i) {
            const auto& s = ckpt.net.slots()[i];
            if (slots[i].at("name").get<std::string>() != s.name || slots[i].at("rows").get<int>() != s.rows ||
                slots[i].at("cols").get<int>() != s.cols) {
                throw FormatError("parameter slot '" + s.name + "' does not match");
            }
        }
        if (ckpt.categories.bits() != ckpt.net.config().bits) {
            throw FormatError("category set and model bit count disagree");
        }
        read_doubles(in, ckpt.net.parameters());
        if (header.at("has_optimizer").get<bool>()) {
            AdamWState st;
            st.step = static_cast<std::int64_t>(read_le<std::uint64_t>(in));
            st.m.resize(ckpt.net.parameter_count());
            st.v.resize(ckpt.net.parameter_count());
            read_doubles(in, st.m);
            read_doubles(in, st.v);
            ckpt.optimizer = std::move(st);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return ckpt;
}

} // namespace layoutflow
