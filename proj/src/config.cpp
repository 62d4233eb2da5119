#include "hfgn/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace hfgn {

namespace {

struct Entry {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "a non-negative integer");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) bad_value(key, v, "a number");
        return out;
    } catch (const std::logic_error&) {
        bad_value(key, v, "a number");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    bad_value(key, v, "a boolean");
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class Get>
Entry size_entry(std::string key, Get get) {
    return {key, [key, get](RunConfig& c, const std::string& v) { get(c) = static_cast<std::size_t>(parse_u64(key, v)); },
            [get](const RunConfig& c) { return std::to_string(get(const_cast<RunConfig&>(c))); }};
}

template <class Get>
Entry u64_entry(std::string key, Get get) {
    return {key, [key, get](RunConfig& c, const std::string& v) { get(c) = parse_u64(key, v); },
            [get](const RunConfig& c) { return std::to_string(get(const_cast<RunConfig&>(c))); }};
}

template <class Get>
Entry double_entry(std::string key, Get get) {
    return {key, [key, get](RunConfig& c, const std::string& v) { get(c) = parse_double(key, v); },
            [get](const RunConfig& c) { return fmt_double(get(const_cast<RunConfig&>(c))); }};
}

template <class Get>
Entry bool_entry(std::string key, Get get) {
    return {key, [key, get](RunConfig& c, const std::string& v) { get(c) = parse_bool(key, v); },
            [get](const RunConfig& c) { return std::string(get(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

#define FIELD(expr) [](RunConfig& c) -> auto& { return expr; }

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        u64_entry("seed", FIELD(c.seed)),
        {"data_dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; },
         [](const RunConfig& c) { return c.data_dir; }},
        // model
        size_entry("d", FIELD(c.model.d)),
        size_entry("views", FIELD(c.model.views)),
        size_entry("attention_hidden", FIELD(c.model.attention_hidden)),
        size_entry("encoder_hidden", FIELD(c.model.encoder_hidden)),
        double_entry("leaky_slope", FIELD(c.model.leaky_slope)),
        bool_entry("enable_item_prop", FIELD(c.model.enable_item_prop)),
        bool_entry("enable_item_to_outfit", FIELD(c.model.enable_item_to_outfit)),
        bool_entry("enable_outfit_to_user", FIELD(c.model.enable_outfit_to_user)),
        // training
        double_entry("lr_rec", FIELD(c.train.lr_rec)),
        double_entry("lr_com", FIELD(c.train.lr_com)),
        double_entry("reg_lambda", FIELD(c.train.reg_lambda)),
        size_entry("batch_rec", FIELD(c.train.batch_rec)),
        size_entry("batch_com", FIELD(c.train.batch_com)),
        size_entry("epochs", FIELD(c.train.epochs)),
        double_entry("beta1", FIELD(c.train.beta1)),
        double_entry("beta2", FIELD(c.train.beta2)),
        double_entry("adam_eps", FIELD(c.train.adam_eps)),
        bool_entry("neg_resample_per_epoch", FIELD(c.train.neg_resample_per_epoch)),
        size_entry("k", FIELD(c.train.eval_k)),
        // split
        double_entry("train_fraction", FIELD(c.split.train_fraction)),
        double_entry("val_fraction", FIELD(c.split.val_fraction)),
        // filtering
        size_entry("min_user", FIELD(c.min_user)),
        size_entry("min_outfit", FIELD(c.min_outfit)),
        // synthetic data
        size_entry("synth_users", FIELD(c.synth.users)),
        size_entry("synth_outfits", FIELD(c.synth.outfits)),
        size_entry("synth_items", FIELD(c.synth.items)),
        size_entry("synth_categories", FIELD(c.synth.categories)),
        size_entry("synth_style_dim", FIELD(c.synth.style_dim)),
        size_entry("synth_min_outfit_len", FIELD(c.synth.min_outfit_len)),
        size_entry("synth_max_outfit_len", FIELD(c.synth.max_outfit_len)),
        size_entry("synth_interactions_per_user", FIELD(c.synth.interactions_per_user)),
        size_entry("synth_heldout_outfits", FIELD(c.synth.heldout_outfits)),
        size_entry("synth_style_pool", FIELD(c.synth.style_pool)),
        double_entry("synth_noise", FIELD(c.synth.noise)),
        // fill in the blank
        size_entry("fitb_count", FIELD(c.fitb_count)),
        bool_entry("fitb_category_matched", FIELD(c.fitb_category_matched)),
    };
    return table;
}

#undef FIELD

const Entry& find_entry(const std::string& key) {
    for (const auto& e : entries()) {
        if (e.key == key) return e;
    }
    throw ConfigError("unknown configuration key '" + key + "'");
}

} // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + (stream + 1) * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void RunConfig::derive_seeds() {
    synth.seed = derive_seed(seed, 0);
    split.seed = derive_seed(seed, 1);
    model.init_seed = derive_seed(seed, 2);
    train.rng_seed = derive_seed(seed, 3);
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& e : entries()) k.push_back(e.key);
        return k;
    }();
    return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    find_entry(key).set(cfg, trim(value));
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return find_entry(key).get(cfg); }

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        try {
            find_entry(key);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::string config_text(const RunConfig& cfg) {
    std::ostringstream os;
    for (const auto& e : entries()) os << e.key << " = " << e.get(cfg) << '\n';
    return os.str();
}

} // namespace hfgn
