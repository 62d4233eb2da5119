#include "hfgn/cli.hpp"

#include "hfgn/checkpoint.hpp"
#include "hfgn/config.hpp"
#include "hfgn/eval.hpp"
#include "hfgn/graph.hpp"
#include "hfgn/log.hpp"
#include "hfgn/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>

namespace hfgn {

namespace {

constexpr const char* data_env = "HFGN_DATA_DIR";

std::string flag_name(const std::string& key) {
    std::string dashed = key;
    for (char& ch : dashed) {
        if (ch == '_') ch = '-';
    }
    std::string names = "--" + dashed;
    if (dashed != key) names += ",--" + key;
    if (key == "data_dir") names += ",--data";
    return names;
}

/// Options shared by every subcommand: a config file plus one flag per key.
struct CommonOptions {
    std::string config_path;
    std::map<std::string, std::string> overrides;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat key = value configuration file");
        for (const auto& key : config_keys()) {
            cmd->add_option_function<std::string>(
                flag_name(key), [this, key](const std::string& v) { overrides[key] = v; }, "override " + key)
                ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        }
    }

    /// Defaults, then the config file, then the data-dir environment
    /// variable, then flags; seeds are derived last.
    RunConfig resolve() const {
        RunConfig cfg;
        if (!config_path.empty()) {
            for (const auto& [k, v] : read_config_file(config_path)) set_config_value(cfg, k, v);
        }
        if (const char* env = std::getenv(data_env); env != nullptr && *env != '\0') cfg.data_dir = env;
        for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
        cfg.derive_seeds();
        return cfg;
    }
};

struct Loaded {
    Dataset raw;
    IndexedData data;
};

Loaded load(const RunConfig& cfg) {
    Loaded l;
    l.raw = load_dataset(DatasetPaths::in_dir(cfg.data_dir));
    l.data = index_dataset(l.raw);
    return l;
}

std::vector<Interaction> to_indices(const std::vector<std::pair<std::string, std::string>>& rows,
                                    const EntityIndex& index, const std::filesystem::path& path) {
    std::vector<Interaction> out;
    out.reserve(rows.size());
    for (const auto& [u, o] : rows) {
        auto ui = index.user_of.find(u);
        auto oi = index.outfit_of.find(o);
        if (ui == index.user_of.end() || oi == index.outfit_of.end()) {
            throw DataError(path.string() + ": interaction (" + u + ", " + o + ") is not in the dataset");
        }
        out.push_back({ui->second, oi->second});
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Uses train.tsv/val.tsv/test.tsv from the data directory when all three
/// exist, otherwise splits deterministically from the configured seed.
Split obtain_split(const RunConfig& cfg, const IndexedData& data) {
    const std::filesystem::path dir = cfg.data_dir;
    const auto tr = dir / "train.tsv", va = dir / "val.tsv", te = dir / "test.tsv";
    if (std::filesystem::exists(tr) && std::filesystem::exists(va) && std::filesystem::exists(te)) {
        Split s;
        s.train = to_indices(read_interactions(tr), data.index, tr);
        s.val = to_indices(read_interactions(va), data.index, va);
        s.test = to_indices(read_interactions(te), data.index, te);
        return s;
    }
    return split_interactions(data.interactions, data.index.user_count(), cfg.split);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

void check_counts(const Model& model, const IndexedData& data, const std::string& ckpt) {
    const auto& p = model.params;
    const auto& idx = data.index;
    if (p.user_count != idx.user_count() || p.outfit_count != idx.outfit_count() || p.item_count != idx.item_count() ||
        p.encoders.size() != idx.category_count() || model.config.feature_dim != data.feature_dim) {
        throw DataError(ckpt + ": checkpoint entity counts do not match the dataset in use");
    }
}

std::string fixed6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void write_split_file(const std::filesystem::path& path, const std::vector<Interaction>& rows,
                      const EntityIndex& index) {
    std::vector<std::pair<std::string, std::string>> ext;
    ext.reserve(rows.size());
    for (const auto& it : rows) ext.emplace_back(index.users[it.user], index.outfits[it.outfit]);
    write_interactions(ext, path);
}

} // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hierarchical fashion graph network: data preparation, training and evaluation", "hfgn"};
    app.require_subcommand(1, 1);

    CommonOptions opts;
    // Separate targets per subcommand: a default on one must not leak into another.
    std::string out_path, ckpt_out = "model.ckpt";
    std::string checkpoint_path, report_path, history_path, export_path, import_path, part = "test";
    bool quiet = false;

    auto* gen = app.add_subcommand("gen-synth", "write a synthetic dataset with planted style structure");
    gen->add_option("--out", out_path, "output directory (default: data_dir)");

    auto* filter = app.add_subcommand("filter", "k-core filter users and outfits");
    filter->add_option("--out", out_path, "output directory")->required();

    auto* split = app.add_subcommand("split", "write per-user train/val/test interaction files");
    split->add_option("--out", out_path, "output directory (default: data_dir)");

    auto* stats = app.add_subcommand("graph-stats", "entity counts, graph checks and category co-occurrence");

    auto* trn = app.add_subcommand("train", "joint training; writes the best-validation checkpoint");
    trn->add_option("--out", ckpt_out, "checkpoint path")->capture_default_str();
    trn->add_option("--history", history_path, "also write the per-epoch history here");

    auto* ev = app.add_subcommand("eval", "top-K recommendation metrics");
    ev->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate")->required();
    ev->add_option("--report", report_path, "write key=value metrics here");
    ev->add_option("--part", part, "test or validation")->check(CLI::IsMember({"test", "validation"}));

    auto* fitb = app.add_subcommand("fitb", "fill-in-the-blank accuracy on held-out outfits");
    fitb->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate")->required();
    fitb->add_option("--report", report_path, "write key=value results here");
    fitb->add_option("--export", export_path, "write the generated queries here");
    fitb->add_option("--import", import_path, "score these queries instead of generating new ones");

    auto* inspect = app.add_subcommand("inspect-checkpoint", "print a checkpoint header and array summary");
    inspect->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();

    for (auto* cmd : {gen, filter, split, stats, trn, ev, fitb, inspect}) {
        opts.attach(cmd);
        cmd->add_flag("--quiet", quiet, "suppress warnings");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return 1;
    }
    set_quiet(quiet);

    try {
        const RunConfig cfg = opts.resolve();

        if (gen->parsed()) {
            const std::filesystem::path dir = out_path.empty() ? cfg.data_dir : out_path;
            const Dataset ds = generate_synthetic(cfg.synth);
            write_dataset(ds, dir);
            out << "wrote " << ds.user_count() << " users, " << ds.outfits.size() << " outfits, " << ds.items.size()
                << " items, " << ds.interactions.size() << " interactions to " << dir.string() << '\n';
        } else if (filter->parsed()) {
            const Dataset ds = load_dataset(DatasetPaths::in_dir(cfg.data_dir));
            const Dataset kept = kcore_filter(ds, cfg.min_user, cfg.min_outfit);
            write_dataset(kept, out_path);
            out << "users " << ds.user_count() << " -> " << kept.user_count() << ", outfits " << ds.outfits.size()
                << " -> " << kept.outfits.size() << ", items " << ds.items.size() << " -> " << kept.items.size()
                << ", interactions " << ds.interactions.size() << " -> " << kept.interactions.size() << '\n';
        } else if (split->parsed()) {
            const Loaded l = load(cfg);
            const Split s = split_interactions(l.data.interactions, l.data.index.user_count(), cfg.split);
            const std::filesystem::path dir = out_path.empty() ? cfg.data_dir : out_path;
            std::filesystem::create_directories(dir);
            write_split_file(dir / "train.tsv", s.train, l.data.index);
            write_split_file(dir / "val.tsv", s.val, l.data.index);
            write_split_file(dir / "test.tsv", s.test, l.data.index);
            out << "train " << s.train.size() << ", val " << s.val.size() << ", test " << s.test.size() << '\n';
        } else if (stats->parsed()) {
            const Loaded l = load(cfg);
            const auto& idx = l.data.index;
            const HierarchicalGraph g = build_hierarchical_graph(idx.user_count(), l.data.interactions,
                                                                 l.data.outfit_items, idx.item_category,
                                                                 idx.category_count());
            const ValidationReport report = validate_graph(g);
            const CategoryGraph cg = build_category_graph(l.data.outfit_items, idx.item_category, idx.category_count());
            out << "users\t" << idx.user_count() << "\noutfits\t" << idx.outfit_count() << "\nitems\t"
                << idx.item_count() << "\ncategories\t" << idx.category_count() << "\ninteractions\t"
                << l.data.interactions.size() << "\nheldout_outfits\t" << l.data.heldout_outfits.size()
                << "\nviolations\t" << report.violations.size() << '\n';
            for (std::size_t k = 0; k < report.violations.size() && k < 10; ++k) {
                out << "  " << report.violations[k] << '\n';
            }
            out << "# category\tfrequency\ttop partners (category:weight)\n" << category_graph_stats(cg, idx);
        } else if (trn->parsed()) {
            const Loaded l = load(cfg);
            const Split s = obtain_split(cfg, l.data);
            const ModelContext ctx = make_context(l.data, s.train);
            ModelConfig mc = cfg.model;
            mc.feature_dim = l.data.feature_dim;
            std::string history = "epoch\tL_mf\tL_com\tval_hr@" + std::to_string(cfg.train.eval_k) + "\tval_ndcg@" +
                                  std::to_string(cfg.train.eval_k) + "\tseconds\n";
            out << history << std::flush;
            const TrainResult result = train(ctx, s, mc, cfg.train, [&](const EpochRecord& rec) {
                out << rec.line() << '\n' << std::flush;
                history += rec.line() + '\n';
            });
            save_checkpoint(result.model, result.best_epoch, cfg.seed, ckpt_out);
            if (!history_path.empty()) write_text(history_path, history);
            out << "best epoch " << result.best_epoch << ", checkpoint " << ckpt_out << '\n';
            if (result.diverged) {
                err << "error: " << result.diagnostic << '\n';
                return 2;
            }
        } else if (ev->parsed()) {
            const Model model = load_model(checkpoint_path);
            const Loaded l = load(cfg);
            check_counts(model, l.data, checkpoint_path);
            const Split s = obtain_split(cfg, l.data);
            const ModelContext ctx = make_context(l.data, s.train);
            const MetricsReport report = evaluate_split(
                model, ctx, s, part == "test" ? SplitPart::test : SplitPart::validation, cfg.train.eval_k);
            out << report.table();
            if (!report_path.empty()) write_text(report_path, report.key_values());
        } else if (fitb->parsed()) {
            const Model model = load_model(checkpoint_path);
            const Loaded l = load(cfg);
            check_counts(model, l.data, checkpoint_path);
            const auto& tests = l.data.heldout_outfits;
            if (tests.empty()) throw DataError(cfg.data_dir + ": no held-out outfits for fill-in-the-blank");
            std::vector<std::string> test_ids;
            for (const auto& o : l.raw.heldout_outfits) test_ids.push_back(o.id);
            const Split s = obtain_split(cfg, l.data);
            const ModelContext ctx = make_context(l.data, s.train);
            std::vector<FitbQuery> queries;
            if (!import_path.empty()) {
                queries = read_fitb_queries(import_path, tests, test_ids, l.data.index);
            } else {
                queries = build_fitb_queries(
                    tests, l.data.index.item_category,
                    FitbOptions{cfg.fitb_count, cfg.fitb_category_matched, derive_seed(cfg.seed, 4)});
            }
            if (!export_path.empty()) write_fitb_queries(export_path, queries, test_ids, l.data.index.items);
            const double acc = fitb_accuracy(model, ctx, tests, queries);
            const std::string text =
                "fitb_accuracy=" + fixed6(acc) + "\nqueries=" + std::to_string(queries.size()) + '\n';
            out << text;
            if (!report_path.empty()) write_text(report_path, text);
        } else if (inspect->parsed()) {
            out << describe_checkpoint(read_checkpoint(checkpoint_path));
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const EvalError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"hfgn"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace hfgn
