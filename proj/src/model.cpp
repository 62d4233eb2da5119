#include "hfgn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace hfgn {

using nk::Parameter;
using nk::Tape;
using nk::Tensor;
using nk::Var;

namespace {

std::vector<std::size_t> sorted_unique(std::span<const std::size_t> xs) {
    std::vector<std::size_t> v(xs.begin(), xs.end());
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

std::size_t position_in(const std::vector<std::size_t>& sorted, std::size_t x) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), x);
    if (it == sorted.end() || *it != x) throw std::out_of_range("index not present in batch");
    return static_cast<std::size_t>(it - sorted.begin());
}

Parameter xavier(std::string name, std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(rows, cols);
    for (double& v : t.values()) v = dist(rng);
    return Parameter{std::move(name), std::move(t)};
}

} // namespace

void ModelConfig::validate() const {
    if (d < 1 || views < 1 || attention_hidden < 1 || encoder_hidden < 1) {
        throw std::invalid_argument("ModelConfig: d, views, attention_hidden and encoder_hidden must be >= 1");
    }
    if (feature_dim < 1) throw std::invalid_argument("ModelConfig: feature_dim must be >= 1");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
        throw std::invalid_argument("ModelConfig: leaky_slope must lie in (0,1)");
    }
}

std::vector<Parameter*> ModelParams::all() {
    std::vector<Parameter*> out{&embedding};
    for (auto& e : encoders) {
        out.insert(out.end(), {&e.w1, &e.b1, &e.w2, &e.b2});
    }
    out.insert(out.end(), {&w1, &w2, &w3, &w4, &w5, &w6, &w7});
    return out;
}

std::vector<const Parameter*> ModelParams::all() const {
    std::vector<const Parameter*> out;
    for (Parameter* p : const_cast<ModelParams*>(this)->all()) out.push_back(p);
    return out;
}

ModelParams init_params(const ModelConfig& config, std::size_t users, std::size_t outfits, std::size_t items,
                        std::size_t categories) {
    config.validate();
    if (users == 0 || outfits == 0 || items == 0 || categories == 0) {
        throw std::invalid_argument("init_params: users, outfits, items and categories must all be non-empty");
    }
    std::mt19937_64 rng(config.init_seed);
    ModelParams p;
    p.user_count = users;
    p.outfit_count = outfits;
    p.item_count = items;
    p.embedding = xavier("embedding", users + outfits + items, config.d, rng);
    for (std::size_t c = 0; c < categories; ++c) {
        const std::string prefix = "encoder." + std::to_string(c) + ".";
        CategoryEncoder enc;
        enc.w1 = xavier(prefix + "w1", config.encoder_hidden, config.feature_dim, rng);
        enc.b1 = Parameter{prefix + "b1", Tensor(1, config.encoder_hidden)};
        enc.w2 = xavier(prefix + "w2", config.d, config.encoder_hidden, rng);
        enc.b2 = Parameter{prefix + "b2", Tensor(1, config.d)};
        p.encoders.push_back(std::move(enc));
    }
    p.w1 = xavier("w1", config.d, config.d, rng);
    p.w2 = xavier("w2", config.d, config.d, rng);
    p.w3 = xavier("w3", config.d, config.d, rng);
    p.w4 = xavier("w4", config.views, config.attention_hidden, rng);
    p.w5 = xavier("w5", config.attention_hidden, config.d, rng);
    p.w6 = xavier("w6", config.views, config.attention_hidden, rng);
    p.w7 = xavier("w7", config.attention_hidden, config.d, rng);
    return p;
}

ModelContext make_context(const IndexedData& data, std::span<const Interaction> train) {
    const auto& idx = data.index;
    ModelContext ctx;
    ctx.graph = build_hierarchical_graph(idx.user_count(), train, data.outfit_items, idx.item_category,
                                         idx.category_count());
    ctx.categories = build_category_graph(data.outfit_items, idx.item_category, idx.category_count());
    ctx.features = Tensor(idx.item_count(), data.feature_dim, data.features);
    return ctx;
}

OutfitBatch make_outfit_batch(std::span<const std::vector<std::size_t>> compositions,
                              std::span<const std::size_t> item_category, const CategoryGraph& categories) {
    OutfitBatch b;
    b.offsets.push_back(0);
    for (const auto& comp : compositions) {
        if (comp.empty()) throw DataError("outfit composition with no items");
        const std::size_t base = b.items.size();
        const OutfitItemGraph g = build_item_graph(comp, item_category, categories);
        b.items.insert(b.items.end(), comp.begin(), comp.end());
        for (const auto& e : g.edges) {
            b.edge_dst.push_back(base + e.dst);
            b.edge_src.push_back(base + e.src);
            b.edge_weight.push_back(e.weight);
        }
        b.offsets.push_back(b.items.size());
    }
    return b;
}

Var encode_items(Tape& tape, const Model& model, const Tensor& features, std::span<const std::size_t> item_category,
                 std::span<const std::size_t> items) {
    const auto& cfg = model.config;
    if (items.empty()) throw std::invalid_argument("encode_items: no items");
    if (features.cols() != cfg.feature_dim) {
        throw nk::ShapeError("encode_items: feature length " + std::to_string(features.cols()) +
                             " does not match config feature_dim " + std::to_string(cfg.feature_dim));
    }
    const std::size_t C = model.params.encoders.size();
    std::vector<std::vector<std::size_t>> positions(C);
    for (std::size_t k = 0; k < items.size(); ++k) {
        const std::size_t c = item_category[items[k]];
        if (c >= C) throw std::out_of_range("encode_items: unknown category " + std::to_string(c));
        positions[c].push_back(k);
    }
    Var total;
    bool have_total = false;
    for (std::size_t c = 0; c < C; ++c) {
        if (positions[c].empty()) continue;
        Tensor x(positions[c].size(), features.cols());
        for (std::size_t r = 0; r < positions[c].size(); ++r) {
            auto src = features.row_span(items[positions[c][r]]);
            std::copy(src.begin(), src.end(), x.row_span(r).begin());
        }
        const CategoryEncoder& enc = model.params.encoders[c];
        Var h = nk::leaky_relu(nk::add_row(nk::matmul_nt(tape.constant(std::move(x)), tape.param(enc.w1)),
                                           tape.param(enc.b1)),
                               cfg.leaky_slope);
        Var y = nk::add_row(nk::matmul_nt(h, tape.param(enc.w2)), tape.param(enc.b2));
        Var placed = nk::scatter_add_rows(y, positions[c], items.size());
        total = have_total ? nk::add(total, placed) : placed;
        have_total = true;
    }
    return total;
}

Var encode_item(Tape& tape, const Model& model, std::span<const double> features, std::size_t category) {
    if (features.size() != model.config.feature_dim) {
        throw nk::ShapeError("encode_item: feature length " + std::to_string(features.size()) +
                             " does not match config feature_dim " + std::to_string(model.config.feature_dim));
    }
    Tensor x(1, features.size(), std::vector<double>(features.begin(), features.end()));
    const std::size_t item = 0;
    const std::size_t cat[] = {category};
    return encode_items(tape, model, x, cat, std::span<const std::size_t>(&item, 1));
}

Var propagate_items(Tape& tape, const Model& model, const OutfitBatch& batch, Var rows) {
    if (!model.config.enable_item_prop || batch.edge_dst.empty()) return rows;
    Var pair = nk::hadamard(nk::gather_rows(rows, batch.edge_dst), nk::gather_rows(rows, batch.edge_src));
    Var msg = nk::leaky_relu(nk::matmul_nt(pair, tape.param(model.params.w1)), model.config.leaky_slope);
    Var weighted = nk::scale_rows(msg, batch.edge_weight);
    return nk::add(rows, nk::scatter_add_rows(weighted, batch.edge_dst, rows.rows()));
}

Var propagate_outfits(Tape& tape, const Model& model, const OutfitBatch& batch, Var refined_rows, Var outfit_ids) {
    if (!model.config.enable_item_to_outfit) return outfit_ids;
    if (outfit_ids.rows() != batch.outfit_count()) {
        throw nk::ShapeError("propagate_outfits: one outfit embedding per batch outfit required");
    }
    std::vector<double> norm(batch.row_count());
    for (std::size_t k = 0; k + 1 < batch.offsets.size(); ++k) {
        const std::size_t n = batch.offsets[k + 1] - batch.offsets[k];
        if (n == 0) throw DataError("propagate_outfits: empty outfit");
        for (std::size_t r = batch.offsets[k]; r < batch.offsets[k + 1]; ++r) norm[r] = 1.0 / static_cast<double>(n);
    }
    Var msg = nk::leaky_relu(nk::matmul_nt(refined_rows, tape.param(model.params.w2)), model.config.leaky_slope);
    return nk::add(outfit_ids, nk::segment_sum(nk::scale_rows(msg, norm), batch.offsets));
}

Var propagate_users(Tape& tape, const Model& model, Var user_ids, Var refined_outfits,
                    std::span<const std::vector<std::size_t>> histories) {
    if (!model.config.enable_outfit_to_user) return user_ids;
    if (histories.size() != user_ids.rows()) {
        throw nk::ShapeError("propagate_users: one history per user row required");
    }
    std::vector<std::size_t> src, dst;
    std::vector<double> norm;
    for (std::size_t u = 0; u < histories.size(); ++u) {
        for (std::size_t o : histories[u]) {
            src.push_back(o);
            dst.push_back(u);
            norm.push_back(1.0 / static_cast<double>(histories[u].size()));
        }
    }
    if (src.empty()) return user_ids;
    Var hist = nk::gather_rows(refined_outfits, src);
    Var msg = nk::leaky_relu(nk::matmul_nt(hist, tape.param(model.params.w3)), model.config.leaky_slope);
    return nk::add(user_ids, nk::scatter_add_rows(nk::scale_rows(msg, norm), dst, user_ids.rows()));
}

Var score_recommendation(Var users, Var outfits) { return nk::row_sum(nk::hadamard(users, outfits)); }

Var attention_weights(Tape& tape, const Model& model, const OutfitBatch& batch, Var refined_rows) {
    const auto& p = model.params;
    Var att_hidden = nk::leaky_relu(nk::matmul_nt(refined_rows, tape.param(p.w5)), model.config.leaky_slope);
    return nk::segment_softmax(nk::matmul_nt(att_hidden, tape.param(p.w4)), batch.offsets);
}

Var compatibility_scores(Tape& tape, const Model& model, const OutfitBatch& batch, Var refined_rows) {
    const auto& p = model.params;
    const double slope = model.config.leaky_slope;
    Var att = attention_weights(tape, model, batch, refined_rows);
    Var score_hidden = nk::leaky_relu(nk::matmul_nt(refined_rows, tape.param(p.w7)), slope);
    Var score = nk::leaky_relu(nk::matmul_nt(score_hidden, tape.param(p.w6)), slope);
    return nk::segment_sum(nk::row_sum(nk::hadamard(att, score)), batch.offsets);
}

Var compatibility_score(Tape& tape, const Model& model, Var items) {
    const auto& p = model.params;
    const double slope = model.config.leaky_slope;
    if (items.rows() == 0) throw DataError("compatibility_score: empty outfit");
    Var att = nk::softmax_rows(nk::matmul(tape.param(p.w4), nk::leaky_relu(nk::matmul_nt(tape.param(p.w5), items), slope)));
    Var score = nk::leaky_relu(
        nk::matmul(tape.param(p.w6), nk::leaky_relu(nk::matmul_nt(tape.param(p.w7), items), slope)), slope);
    return nk::sum(nk::hadamard(att, score));
}

std::size_t RecRepresentations::user_row(std::size_t u) const { return position_in(user_ids, u); }
std::size_t RecRepresentations::outfit_row(std::size_t o) const { return position_in(outfit_ids, o); }

Var refined_context(Tape& tape, const Model& model, const ModelContext& ctx, const OutfitBatch& batch) {
    const auto unique_items = sorted_unique(batch.items);
    Var encoded = encode_items(tape, model, ctx.features, ctx.graph.item_category, unique_items);
    std::vector<std::size_t> rows(batch.items.size());
    for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = position_in(unique_items, batch.items[k]);
    return propagate_items(tape, model, batch, nk::gather_rows(encoded, rows));
}

RecRepresentations represent(Tape& tape, const Model& model, const ModelContext& ctx,
                             std::span<const std::size_t> users, std::span<const std::size_t> outfits) {
    const auto& cfg = model.config;
    const auto& graph = ctx.graph;
    const auto& params = model.params;
    RecRepresentations rep;
    rep.user_ids = sorted_unique(users);
    rep.outfit_ids = sorted_unique(outfits);
    for (std::size_t u : rep.user_ids) {
        if (u >= graph.user_count()) throw std::out_of_range("represent: user index out of range");
    }
    for (std::size_t o : rep.outfit_ids) {
        if (o >= graph.outfit_count()) throw std::out_of_range("represent: outfit index out of range");
    }

    std::vector<std::size_t> needed = rep.outfit_ids;
    if (cfg.enable_outfit_to_user) {
        for (std::size_t u : rep.user_ids) {
            needed.insert(needed.end(), graph.user_outfits[u].begin(), graph.user_outfits[u].end());
        }
        needed = sorted_unique(needed);
    }

    std::vector<std::size_t> outfit_rows(needed.size());
    for (std::size_t k = 0; k < needed.size(); ++k) outfit_rows[k] = params.outfit_row(needed[k]);
    Var outfit_repr = tape.param_rows(params.embedding, outfit_rows);
    if (cfg.enable_item_to_outfit && !needed.empty()) {
        std::vector<std::vector<std::size_t>> comps;
        comps.reserve(needed.size());
        for (std::size_t o : needed) comps.push_back(graph.outfit_items[o]);
        const OutfitBatch batch = make_outfit_batch(comps, graph.item_category, ctx.categories);
        outfit_repr = propagate_outfits(tape, model, batch, refined_context(tape, model, ctx, batch), outfit_repr);
    }

    if (!rep.user_ids.empty()) {
        std::vector<std::size_t> user_rows(rep.user_ids.size());
        for (std::size_t k = 0; k < user_rows.size(); ++k) user_rows[k] = params.user_row(rep.user_ids[k]);
        Var user_repr = tape.param_rows(params.embedding, user_rows);
        if (cfg.enable_outfit_to_user) {
            std::vector<std::vector<std::size_t>> histories(rep.user_ids.size());
            for (std::size_t k = 0; k < rep.user_ids.size(); ++k) {
                for (std::size_t o : graph.user_outfits[rep.user_ids[k]]) histories[k].push_back(position_in(needed, o));
            }
            user_repr = propagate_users(tape, model, user_repr, outfit_repr, histories);
        }
        rep.users = user_repr;
    }

    if (!rep.outfit_ids.empty()) {
        if (needed.size() == rep.outfit_ids.size()) {
            rep.outfits = outfit_repr;
        } else {
            std::vector<std::size_t> rows(rep.outfit_ids.size());
            for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = position_in(needed, rep.outfit_ids[k]);
            rep.outfits = nk::gather_rows(outfit_repr, rows);
        }
    }
    return rep;
}

Var compat_forward(Tape& tape, const Model& model, const ModelContext& ctx,
                   std::span<const std::vector<std::size_t>> compositions) {
    const OutfitBatch batch = make_outfit_batch(compositions, ctx.graph.item_category, ctx.categories);
    return compatibility_scores(tape, model, batch, refined_context(tape, model, ctx, batch));
}

ForwardOutputs infer(const Model& model, const ModelContext& ctx) {
    Tape tape;
    std::vector<std::size_t> users(ctx.graph.user_count()), outfits(ctx.graph.outfit_count());
    for (std::size_t k = 0; k < users.size(); ++k) users[k] = k;
    for (std::size_t k = 0; k < outfits.size(); ++k) outfits[k] = k;
    const RecRepresentations rep = represent(tape, model, ctx, users, outfits);
    ForwardOutputs out;
    if (!users.empty()) out.user_refined = rep.users.value();
    if (!outfits.empty()) out.outfit_refined = rep.outfits.value();
    if (!outfits.empty()) {
        const OutfitBatch batch = make_outfit_batch(ctx.graph.outfit_items, ctx.graph.item_category, ctx.categories);
        out.item_refined = refined_context(tape, model, ctx, batch).value();
        out.item_offsets = batch.offsets;
    }
    return out;
}

std::vector<double> compat_scores(const Model& model, const ModelContext& ctx,
                                  std::span<const std::vector<std::size_t>> compositions) {
    if (compositions.empty()) return {};
    Tape tape;
    const Var s = compat_forward(tape, model, ctx, compositions);
    const auto v = s.value().values();
    return {v.begin(), v.end()};
}

} // namespace hfgn
