#include "hfgn/training.hpp"

#include "hfgn/eval.hpp"
#include "hfgn/log.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>

namespace hfgn {

using nk::Parameter;
using nk::Tape;
using nk::Tensor;
using nk::Var;

void TrainConfig::validate() const {
    if (!(lr_rec >= 0.0) || !(lr_com >= 0.0)) throw std::invalid_argument("learning rates must be >= 0");
    if (!(reg_lambda >= 0.0)) throw std::invalid_argument("reg_lambda must be >= 0");
    if (batch_rec < 1 || batch_com < 1) throw std::invalid_argument("batch sizes must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be > 0");
    if (eval_k < 1) throw std::invalid_argument("eval_k must be >= 1");
}

std::vector<RecTriple> sample_rec_triples(const HierarchicalGraph& graph, std::mt19937_64& rng) {
    const std::size_t n_outfits = graph.outfit_count();
    std::vector<RecTriple> triples;
    if (n_outfits == 0) return triples;
    std::uniform_int_distribution<std::size_t> pick(0, n_outfits - 1);
    std::size_t skipped = 0;
    for (std::size_t u = 0; u < graph.user_count(); ++u) {
        const auto& seen = graph.user_outfits[u];
        if (seen.empty()) continue;
        if (seen.size() >= n_outfits) {
            ++skipped;
            continue;
        }
        for (std::size_t pos : seen) {
            std::size_t neg = pick(rng);
            while (std::binary_search(seen.begin(), seen.end(), neg)) neg = pick(rng);
            triples.push_back({u, pos, neg});
        }
    }
    if (skipped > 0) warn(std::to_string(skipped) + " user(s) observed every outfit; no negatives possible, skipped");
    return triples;
}

std::vector<CompatPair> sample_compat_pairs(std::span<const std::vector<std::size_t>> outfits,
                                            std::span<const std::size_t> item_category, std::mt19937_64& rng) {
    std::size_t category_count = 0;
    for (std::size_t c : item_category) category_count = std::max(category_count, c + 1);
    std::vector<std::vector<std::size_t>> items_of(category_count);
    for (std::size_t i = 0; i < item_category.size(); ++i) items_of[item_category[i]].push_back(i);

    std::set<std::vector<std::size_t>> observed;
    for (const auto& o : outfits) {
        auto key = o;
        std::sort(key.begin(), key.end());
        observed.insert(std::move(key));
    }

    constexpr int max_rolls = 64;
    std::vector<CompatPair> pairs;
    pairs.reserve(outfits.size());
    std::vector<std::size_t> usable;
    std::size_t skipped = 0;
    for (std::size_t k = 0; k < outfits.size(); ++k) {
        const auto& outfit = outfits[k];
        auto in_outfit = [&](std::size_t item) {
            return std::find(outfit.begin(), outfit.end(), item) != outfit.end();
        };
        // Positions whose category has at least one item outside the outfit.
        usable.clear();
        for (std::size_t p = 0; p < outfit.size(); ++p) {
            const auto& pool = items_of[item_category[outfit[p]]];
            if (std::any_of(pool.begin(), pool.end(), [&](std::size_t i) { return !in_outfit(i); })) usable.push_back(p);
        }
        if (usable.empty()) {
            ++skipped;
            continue;
        }
        bool done = false;
        for (int roll = 0; roll < max_rolls && !done; ++roll) {
            const std::size_t p = usable[std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng)];
            const auto& pool = items_of[item_category[outfit[p]]];
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            std::size_t item = pool[pick(rng)];
            while (in_outfit(item)) item = pool[pick(rng)];
            CompatPair pair{k, outfit, p};
            pair.negative[p] = item;
            auto key = pair.negative;
            std::sort(key.begin(), key.end());
            if (observed.count(key)) continue;
            pairs.push_back(std::move(pair));
            done = true;
        }
        if (!done) ++skipped;
    }
    if (skipped > 0) warn(std::to_string(skipped) + " outfit(s) admit no negative composition; skipped");
    return pairs;
}

Var bpr_sum(Var pos, Var neg) { return nk::scale(nk::sum(nk::log_sigmoid(nk::sub(pos, neg))), -1.0); }

namespace {

LossTerms finish_loss(Tape& tape, Var bpr, double reg_lambda) {
    LossTerms terms;
    terms.bpr = bpr.value()[0];
    if (reg_lambda > 0.0) {
        Var reg = nk::scale(tape.touched_sq_norm(), reg_lambda);
        terms.reg = reg.value()[0];
        terms.total = nk::add(bpr, reg);
    } else {
        terms.total = bpr;
    }
    return terms;
}

} // namespace

LossTerms bpr_loss_rec(Tape& tape, const Model& model, const ModelContext& ctx, std::span<const RecTriple> batch,
                       double reg_lambda) {
    if (batch.empty()) throw std::invalid_argument("bpr_loss_rec: empty batch");
    std::vector<std::size_t> users, outfits;
    users.reserve(batch.size());
    outfits.reserve(2 * batch.size());
    for (const auto& t : batch) {
        users.push_back(t.user);
        outfits.push_back(t.pos);
        outfits.push_back(t.neg);
    }
    const RecRepresentations rep = represent(tape, model, ctx, users, outfits);
    std::vector<std::size_t> urows, prows, nrows;
    for (const auto& t : batch) {
        urows.push_back(rep.user_row(t.user));
        prows.push_back(rep.outfit_row(t.pos));
        nrows.push_back(rep.outfit_row(t.neg));
    }
    Var u = nk::gather_rows(rep.users, urows);
    Var pos = score_recommendation(u, nk::gather_rows(rep.outfits, prows));
    Var neg = score_recommendation(u, nk::gather_rows(rep.outfits, nrows));
    return finish_loss(tape, bpr_sum(pos, neg), reg_lambda);
}

LossTerms bpr_loss_compat(Tape& tape, const Model& model, const ModelContext& ctx, std::span<const CompatPair> batch,
                          double reg_lambda) {
    if (batch.empty()) throw std::invalid_argument("bpr_loss_compat: empty batch");
    std::vector<std::vector<std::size_t>> comps;
    comps.reserve(2 * batch.size());
    for (const auto& p : batch) comps.push_back(ctx.graph.outfit_items.at(p.outfit));
    for (const auto& p : batch) comps.push_back(p.negative);
    Var scores = compat_forward(tape, model, ctx, comps);
    std::vector<std::size_t> prows(batch.size()), nrows(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
        prows[k] = k;
        nrows[k] = batch.size() + k;
    }
    return finish_loss(tape, bpr_sum(nk::gather_rows(scores, prows), nk::gather_rows(scores, nrows)), reg_lambda);
}

AdamState make_adam_state(std::span<const Parameter* const> params) {
    AdamState s;
    for (const Parameter* p : params) {
        s.m.emplace_back(p->value.rows(), p->value.cols());
        s.v.emplace_back(p->value.rows(), p->value.cols());
    }
    return s;
}

void adam_step(std::span<Parameter* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamHyper& h) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw nk::ShapeError("adam_step: parameter, gradient and state counts differ");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!grads[k].same_shape(params[k]->value) || !state.m[k].same_shape(params[k]->value)) {
            throw nk::ShapeError("adam_step: shape mismatch for " + params[k]->name);
        }
        if (!grads[k].all_finite()) throw nk::NonFiniteError("adam_step: non-finite gradient for " + params[k]->name);
    }
    ++state.t;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(h.beta1, t);
    const double c2 = 1.0 - std::pow(h.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto theta = params[k]->value.values();
        auto g = grads[k].values();
        auto m = state.m[k].values();
        auto v = state.v[k].values();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
            v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
            theta[i] -= h.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + h.eps);
        }
    }
}

std::string EpochRecord::line() const {
    std::ostringstream os;
    os << epoch << '\t' << std::setprecision(6) << std::fixed << loss_rec << '\t' << loss_com << '\t' << val_hr
       << '\t' << val_ndcg << '\t' << std::setprecision(3) << seconds;
    return os.str();
}

TrainResult train(const ModelContext& ctx, const Split& split, const ModelConfig& model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    model_config.validate();
    Model model{model_config, init_params(model_config, ctx.graph.user_count(), ctx.graph.outfit_count(),
                                          ctx.graph.item_count(), ctx.graph.category_count)};
    return train(ctx, split, std::move(model), config, on_epoch);
}

TrainResult train(const ModelContext& ctx, const Split& split, Model model, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    config.validate();
    model.config.validate();
    TrainResult result;
    result.model = model;
    if (config.epochs == 0) return result;

    std::mt19937_64 rng(config.rng_seed);
    std::vector<Parameter*> params = model.params.all();
    std::vector<const Parameter*> cparams(params.begin(), params.end());
    AdamState adam_rec = make_adam_state(cparams);
    AdamState adam_com = make_adam_state(cparams);
    const AdamHyper hyper_rec{config.lr_rec, config.beta1, config.beta2, config.adam_eps};
    const AdamHyper hyper_com{config.lr_com, config.beta1, config.beta2, config.adam_eps};

    const bool has_val = !split.val.empty();
    double best_ndcg = -1.0;
    std::vector<RecTriple> triples;
    std::vector<CompatPair> pairs;
    std::vector<Tensor> grads(params.size());

    // One optimizer step; false when the loss or a gradient is not finite.
    auto step = [&](const LossTerms& terms, Tape& tape, AdamState& state, const AdamHyper& hyper) {
        if (!std::isfinite(terms.total.value()[0])) return false;
        tape.backward(terms.total);
        for (std::size_t k = 0; k < params.size(); ++k) grads[k] = tape.gradient(*params[k]);
        adam_step(params, grads, state, hyper);
        return true;
    };

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        if (epoch == 1 || config.neg_resample_per_epoch) {
            triples = sample_rec_triples(ctx.graph, rng);
            pairs = sample_compat_pairs(ctx.graph.outfit_items, ctx.graph.item_category, rng);
        }
        std::shuffle(triples.begin(), triples.end(), rng);
        std::shuffle(pairs.begin(), pairs.end(), rng);

        const std::size_t nr = (triples.size() + config.batch_rec - 1) / config.batch_rec;
        const std::size_t nc = (pairs.size() + config.batch_com - 1) / config.batch_com;
        const Model before_epoch = model;
        double sum_rec = 0.0, sum_com = 0.0;
        std::size_t i = 0, j = 0;
        bool ok = true;
        while (ok && (i < nr || j < nc)) {
            Tape tape;
            // Bresenham-style interleave keeps both task streams evenly spread.
            const bool rec_turn = j >= nc || (i < nr && (i + 1) * nc <= (j + 1) * nr);
            try {
                if (rec_turn) {
                    const std::size_t lo = i * config.batch_rec, hi = std::min(triples.size(), lo + config.batch_rec);
                    const auto terms = bpr_loss_rec(tape, model, ctx, std::span(triples).subspan(lo, hi - lo),
                                                    config.reg_lambda);
                    sum_rec += terms.bpr;
                    ok = step(terms, tape, adam_rec, hyper_rec);
                    ++i;
                } else {
                    const std::size_t lo = j * config.batch_com, hi = std::min(pairs.size(), lo + config.batch_com);
                    const auto terms = bpr_loss_compat(tape, model, ctx, std::span(pairs).subspan(lo, hi - lo),
                                                       config.reg_lambda);
                    sum_com += terms.bpr;
                    ok = step(terms, tape, adam_com, hyper_com);
                    ++j;
                }
            } catch (const nk::NonFiniteError&) {
                ok = false;
            }
        }
        std::optional<MetricsReport> val;
        if (ok && has_val) {
            try {
                val = evaluate_split(model, ctx, split, SplitPart::validation, config.eval_k);
            } catch (const nk::NonFiniteError&) {
                ok = false;
            }
        }
        if (!ok) {
            result.diverged = true;
            result.diagnostic = "non-finite loss or gradient in epoch " + std::to_string(epoch) +
                                "; returning the last good parameters";
            warn(result.diagnostic);
            if (result.best_epoch == 0) result.model = before_epoch;
            break;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss_rec = triples.empty() ? 0.0 : sum_rec / static_cast<double>(triples.size());
        rec.loss_com = pairs.empty() ? 0.0 : sum_com / static_cast<double>(pairs.size());
        if (val) {
            rec.val_hr = val->hr;
            rec.val_ndcg = val->ndcg;
            if (val->ndcg > best_ndcg) {
                best_ndcg = val->ndcg;
                result.best_epoch = epoch;
                result.model = model;
            }
        } else {
            result.best_epoch = epoch;
            result.model = model;
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

} // namespace hfgn
