#include "hfgn/checkpoint.hpp"

#include "hfgn/binio.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace hfgn {

namespace {

constexpr const char* magic = "HFGN-CHECKPOINT";

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string header_text(const CheckpointHeader& h, std::size_t arrays) {
    const auto& c = h.config;
    std::ostringstream os;
    os << magic << '\n'
       << "format_version=" << h.format_version << '\n'
       << "d=" << c.d << '\n'
       << "feature_dim=" << c.feature_dim << '\n'
       << "views=" << c.views << '\n'
       << "attention_hidden=" << c.attention_hidden << '\n'
       << "encoder_hidden=" << c.encoder_hidden << '\n'
       << "leaky_slope=" << format_double(c.leaky_slope) << '\n'
       << "enable_item_prop=" << c.enable_item_prop << '\n'
       << "enable_item_to_outfit=" << c.enable_item_to_outfit << '\n'
       << "enable_outfit_to_user=" << c.enable_outfit_to_user << '\n'
       << "init_seed=" << c.init_seed << '\n'
       << "users=" << h.users << '\n'
       << "outfits=" << h.outfits << '\n'
       << "items=" << h.items << '\n'
       << "categories=" << h.categories << '\n'
       << "epoch=" << h.epoch << '\n'
       << "seed=" << h.seed << '\n'
       << "arrays=" << arrays << '\n'
       << "end\n";
    return os.str();
}

std::string read_line(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw CheckpointError(source + ": truncated file");
    return line;
}

std::uint64_t to_u64(const std::map<std::string, std::string>& kv, const std::string& key,
                     const std::string& source) {
    auto it = kv.find(key);
    if (it == kv.end()) throw CheckpointError(source + ": header is missing " + key);
    try {
        std::size_t used = 0;
        const auto v = std::stoull(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw CheckpointError(source + ": header field " + key + " is not an unsigned integer");
    }
}

} // namespace

void save_checkpoint(const Model& model, std::size_t epoch, std::uint64_t seed, const std::filesystem::path& path) {
    CheckpointHeader h;
    h.config = model.config;
    h.users = model.params.user_count;
    h.outfits = model.params.outfit_count;
    h.items = model.params.item_count;
    h.categories = model.params.encoders.size();
    h.epoch = epoch;
    h.seed = seed;
    const auto arrays = model.params.all();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    const std::string text = header_text(h, arrays.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    BinaryWriter w(out);
    for (const nk::Parameter* p : arrays) {
        w.str(p->name);
        w.u64(p->value.rows());
        w.u64(p->value.cols());
        for (double v : p->value.values()) w.f64(v);
    }
    if (!out) throw DataError("error while writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    const std::string source = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + source);

    std::string first;
    std::getline(in, first);
    if (first != magic) throw CheckpointError(source + ": unrecognized checkpoint");

    std::map<std::string, std::string> kv;
    for (std::string line = read_line(in, source); line != "end"; line = read_line(in, source)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw CheckpointError(source + ": malformed header line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }

    Checkpoint ck;
    auto& h = ck.header;
    h.format_version = static_cast<int>(to_u64(kv, "format_version", source));
    if (h.format_version != checkpoint_format_version) {
        throw CheckpointError(source + ": checkpoint format version " + std::to_string(h.format_version) +
                              " is not supported (expected " + std::to_string(checkpoint_format_version) + ")");
    }
    auto& c = h.config;
    c.d = to_u64(kv, "d", source);
    c.feature_dim = to_u64(kv, "feature_dim", source);
    c.views = to_u64(kv, "views", source);
    c.attention_hidden = to_u64(kv, "attention_hidden", source);
    c.encoder_hidden = to_u64(kv, "encoder_hidden", source);
    {
        auto it = kv.find("leaky_slope");
        if (it == kv.end()) throw CheckpointError(source + ": header is missing leaky_slope");
        try {
            c.leaky_slope = std::stod(it->second);
        } catch (const std::exception&) {
            throw CheckpointError(source + ": header field leaky_slope is not a number");
        }
    }
    c.enable_item_prop = to_u64(kv, "enable_item_prop", source) != 0;
    c.enable_item_to_outfit = to_u64(kv, "enable_item_to_outfit", source) != 0;
    c.enable_outfit_to_user = to_u64(kv, "enable_outfit_to_user", source) != 0;
    c.init_seed = to_u64(kv, "init_seed", source);
    h.users = to_u64(kv, "users", source);
    h.outfits = to_u64(kv, "outfits", source);
    h.items = to_u64(kv, "items", source);
    h.categories = to_u64(kv, "categories", source);
    h.epoch = to_u64(kv, "epoch", source);
    h.seed = to_u64(kv, "seed", source);
    const std::uint64_t count = to_u64(kv, "arrays", source);

    BinaryReader r(in, source);
    try {
        for (std::uint64_t k = 0; k < count; ++k) {
            nk::Parameter p;
            p.name = r.str(4096);
            const std::uint64_t rows = r.u64();
            const std::uint64_t cols = r.u64();
            if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols) {
                throw CheckpointError(source + ": array " + p.name + " declares an implausible shape");
            }
            nk::Tensor t(rows, cols);
            for (double& v : t.values()) v = r.f64();
            p.value = std::move(t);
            ck.arrays.push_back(std::move(p));
        }
    } catch (const CheckpointError&) {
        throw;
    } catch (const DataError& e) {
        throw CheckpointError(e.what());
    }
    if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError(source + ": trailing bytes after arrays");
    return ck;
}

ModelParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& config) {
    Checkpoint ck = read_checkpoint(path);
    const auto& h = ck.header;
    const std::string source = path.string();
    ModelParams params;
    try {
        params = init_params(config, h.users, h.outfits, h.items, h.categories);
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(source + ": " + e.what());
    }
    auto slots = params.all();
    if (slots.size() != ck.arrays.size()) {
        throw CheckpointError(source + ": expected " + std::to_string(slots.size()) + " arrays, found " +
                              std::to_string(ck.arrays.size()));
    }
    for (std::size_t k = 0; k < slots.size(); ++k) {
        auto& stored = ck.arrays[k];
        if (stored.name != slots[k]->name) {
            throw CheckpointError(source + ": expected array " + slots[k]->name + ", found " + stored.name);
        }
        if (!stored.value.same_shape(slots[k]->value)) {
            throw CheckpointError(source + ": shape mismatch for array " + stored.name + ": expected " +
                                  slots[k]->value.shape_string() + ", found " + stored.value.shape_string());
        }
        slots[k]->value = std::move(stored.value);
    }
    return params;
}

Model load_model(const std::filesystem::path& path) {
    const CheckpointHeader header = read_checkpoint(path).header;
    return Model{header.config, load_checkpoint(path, header.config)};
}

std::string describe_checkpoint(const Checkpoint& ck) {
    std::ostringstream os;
    os << header_text(ck.header, ck.arrays.size());
    for (const auto& p : ck.arrays) {
        double sq = 0.0;
        for (double v : p.value.values()) sq += v * v;
        char norm[40];
        std::snprintf(norm, sizeof norm, "%.6f", std::sqrt(sq));
        os << p.name << '\t' << p.value.shape_string() << "\tnorm=" << norm << '\n';
    }
    return os.str();
}

} // namespace hfgn
