#include "cyclocast/net/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cyclocast::net {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'C', 'C', 'K', 'P', 'T', '0', '0', '1'};

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size())
            throw std::runtime_error(std::string("checkpoint truncated reading ") + what);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<unsigned char>(buf[pos]) |
                          (static_cast<std::uint16_t>(static_cast<unsigned char>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

std::string multipliers_str(const std::vector<int>& m) {
    std::string s;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(m[i]);
    }
    return s;
}

std::vector<int> parse_multipliers(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

std::string header_text(const DenoiserConfig& cfg, const CheckpointMeta& meta) {
    std::ostringstream h;
    h << "base_channels=" << cfg.base_channels << "\n";
    h << "channel_multipliers=" << multipliers_str(cfg.channel_multipliers) << "\n";
    h << "temporal_attention_heads=" << cfg.temporal_attention_heads << "\n";
    h << "cond_channels=" << cfg.cond_channels << "\n";
    h << "cond_timesteps=" << cfg.cond_timesteps << "\n";
    h << "embed_dim=" << cfg.embed_dim << "\n";
    h << "resolution=" << cfg.resolution << "\n";
    h << "max_frames=" << cfg.max_frames << "\n";
    h << "stage_tag=" << meta.stage_tag << "\n";
    h << "train_seed=" << meta.train_seed << "\n";
    h << "step_counter=" << meta.step_counter << "\n";
    h << "epoch_counter=" << meta.epoch_counter << "\n";
    return h.str();
}

std::map<std::string, std::string> parse_header(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

void save_checkpoint(const fs::path& path, Denoiser& model, const CheckpointMeta& meta) {
    const std::string header = header_text(model.config(), meta);

    std::string buf;
    buf.append(kMagic, 8);
    put_u32(buf, 1);
    put_u32(buf, static_cast<std::uint32_t>(header.size()));
    buf += header;

    const ParamRefs params = model.params();
    put_u32(buf, static_cast<std::uint32_t>(params.size()));
    for (const Param* p : params) {
        put_u16(buf, static_cast<std::uint16_t>(p->name.size()));
        buf += p->name;
        buf.push_back(static_cast<char>(p->value.rank()));
        for (std::size_t d = 0; d < p->value.rank(); ++d)
            put_u32(buf, static_cast<std::uint32_t>(p->value.dim(d)));
        for (std::size_t i = 0; i < p->value.size(); ++i) put_f64(buf, p->value[i]);
    }

    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp.string());
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw std::runtime_error("short write: " + tmp.string());
    }
    fs::rename(tmp, path);
}

namespace {

DenoiserConfig config_from_header(const std::map<std::string, std::string>& kv) {
    DenoiserConfig cfg;
    cfg.base_channels = std::stoi(kv.at("base_channels"));
    cfg.channel_multipliers = parse_multipliers(kv.at("channel_multipliers"));
    cfg.temporal_attention_heads = std::stoi(kv.at("temporal_attention_heads"));
    cfg.cond_channels = std::stoi(kv.at("cond_channels"));
    cfg.cond_timesteps = std::stoi(kv.at("cond_timesteps"));
    cfg.embed_dim = std::stoi(kv.at("embed_dim"));
    cfg.resolution = std::stoi(kv.at("resolution"));
    cfg.max_frames = std::stoi(kv.at("max_frames"));
    return cfg;
}

}  // namespace

DenoiserConfig read_checkpoint_config(const fs::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path.string());
    Reader r{bytes, 8};
    if (r.u32("version") != 1) throw std::runtime_error("unsupported checkpoint version");
    const std::uint32_t hlen = r.u32("header_len");
    return config_from_header(parse_header(r.bytes(hlen, "header")));
}

CheckpointMeta load_checkpoint(const fs::path& path, Denoiser& model) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path.string());
    Reader r{bytes, 8};
    if (r.u32("version") != 1) throw std::runtime_error("unsupported checkpoint version");
    const std::uint32_t hlen = r.u32("header_len");
    const auto kv = parse_header(r.bytes(hlen, "header"));

    CheckpointMeta meta;
    meta.stage_tag = kv.at("stage_tag");
    meta.train_seed = std::stoull(kv.at("train_seed"));
    meta.step_counter = std::stoull(kv.at("step_counter"));
    meta.epoch_counter = std::stoull(kv.at("epoch_counter"));

    ParamRefs params = model.params();
    std::map<std::string, Param*> by_name;
    for (Param* p : params) by_name[p->name] = p;

    const std::uint32_t n = r.u32("param_count");
    std::size_t loaded = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint16_t name_len = r.u16("name_len");
        const std::string name = r.bytes(name_len, "name");
        r.need(1, "ndim");
        const int ndim = static_cast<unsigned char>(bytes[r.pos++]);
        std::vector<std::int64_t> dims(ndim);
        for (int d = 0; d < ndim; ++d) dims[d] = r.u32("dim");

        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint: unexpected parameter '" + name + "'");
        Param* p = it->second;
        if (p->value.shape() != dims)
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        for (std::size_t j = 0; j < p->value.size(); ++j) p->value[j] = r.f64("data");
        by_name.erase(it);
        ++loaded;
    }
    if (!by_name.empty())
        throw std::runtime_error("checkpoint: missing parameter '" + by_name.begin()->first + "'");
    (void)loaded;
    return meta;
}

}  // namespace cyclocast::net
