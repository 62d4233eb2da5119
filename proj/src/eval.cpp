#include "hfgn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace hfgn {

namespace {

std::vector<std::size_t> sorted_copy(std::span<const std::size_t> xs) {
    std::vector<std::size_t> v(xs.begin(), xs.end());
    std::sort(v.begin(), v.end());
    return v;
}

std::size_t hits_in_top(std::span<const std::size_t> ranked, const std::vector<std::size_t>& relevant,
                        std::size_t k) {
    std::size_t hits = 0;
    const std::size_t n = std::min(k, ranked.size());
    for (std::size_t p = 0; p < n; ++p) {
        if (std::binary_search(relevant.begin(), relevant.end(), ranked[p])) ++hits;
    }
    return hits;
}

void require_k_and_relevant(std::span<const std::size_t> relevant, std::size_t k, const char* op) {
    if (k < 1) throw std::invalid_argument(std::string(op) + ": k must be >= 1");
    if (relevant.empty()) throw std::invalid_argument(std::string(op) + ": empty relevant set");
}

} // namespace

std::vector<std::size_t> rank_by_scores(std::span<const double> scores, std::span<const std::size_t> candidates,
                                        std::size_t limit) {
    std::vector<std::size_t> order(candidates.begin(), candidates.end());
    auto before = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    const std::size_t n = std::min(limit, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), before);
    order.resize(n);
    return order;
}

std::vector<std::size_t> rank_candidates(std::span<const double> user, const nk::Tensor& outfits,
                                         std::span<const std::size_t> candidates) {
    if (user.size() != outfits.cols()) throw nk::ShapeError("rank_candidates: dimension mismatch");
    std::vector<double> scores(outfits.rows(), 0.0);
    for (std::size_t o : candidates) {
        if (o >= outfits.rows()) throw std::out_of_range("rank_candidates: outfit index out of range");
        auto row = outfits.row_span(o);
        double s = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) s += user[c] * row[c];
        scores[o] = s;
    }
    return rank_by_scores(scores, candidates, candidates.size());
}

int hit_rate(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant, std::size_t k) {
    require_k_and_relevant(relevant, k, "hit_rate");
    return hits_in_top(ranked, sorted_copy(relevant), k) > 0 ? 1 : 0;
}

RecallPrecision recall_precision(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant,
                                 std::size_t k) {
    require_k_and_relevant(relevant, k, "recall_precision");
    const auto hits = static_cast<double>(hits_in_top(ranked, sorted_copy(relevant), k));
    return {hits / static_cast<double>(relevant.size()), hits / static_cast<double>(k)};
}

double ndcg(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant, std::size_t k) {
    require_k_and_relevant(relevant, k, "ndcg");
    const auto rel = sorted_copy(relevant);
    double dcg = 0.0;
    const std::size_t n = std::min(k, ranked.size());
    for (std::size_t p = 0; p < n; ++p) {
        if (std::binary_search(rel.begin(), rel.end(), ranked[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min(relevant.size(), k);
    for (std::size_t p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    return dcg / idcg;
}

std::string MetricsReport::table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    os << "metric        @" << k << '\n';
    os << "HR            " << hr << '\n';
    os << "NDCG          " << ndcg << '\n';
    os << "Recall        " << recall << '\n';
    os << "Precision     " << precision << '\n';
    os << "users         " << users << '\n';
    return os.str();
}

std::string MetricsReport::key_values() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    os << "hr@" << k << '=' << hr << '\n';
    os << "ndcg@" << k << '=' << ndcg << '\n';
    os << "recall@" << k << '=' << recall << '\n';
    os << "precision@" << k << '=' << precision << '\n';
    os << "users=" << users << '\n';
    return os.str();
}

MetricsReport evaluate_topk(const nk::Tensor& users, const nk::Tensor& outfits,
                            std::span<const std::vector<std::size_t>> exclude,
                            std::span<const std::vector<std::size_t>> relevant, std::size_t k) {
    if (k < 1) throw std::invalid_argument("evaluate_topk: k must be >= 1");
    if (exclude.size() != users.rows() || relevant.size() != users.rows()) {
        throw std::invalid_argument("evaluate_topk: one exclusion and relevance list per user required");
    }
    if (users.rows() > 0 && users.cols() != outfits.cols()) throw nk::ShapeError("evaluate_topk: dimension mismatch");
    MetricsReport report;
    report.k = k;
    std::vector<double> scores(outfits.rows());
    std::vector<std::size_t> candidates;
    for (std::size_t u = 0; u < users.rows(); ++u) {
        if (relevant[u].empty()) continue;
        const auto excl = sorted_copy(exclude[u]);
        for (std::size_t o : relevant[u]) {
            if (std::binary_search(excl.begin(), excl.end(), o)) {
                throw EvalError("user " + std::to_string(u) + ": relevant outfit " + std::to_string(o) +
                                " is excluded from the candidates");
            }
        }
        candidates.clear();
        auto urow = users.row_span(u);
        for (std::size_t o = 0; o < outfits.rows(); ++o) {
            if (std::binary_search(excl.begin(), excl.end(), o)) continue;
            candidates.push_back(o);
            auto orow = outfits.row_span(o);
            double s = 0.0;
            for (std::size_t c = 0; c < orow.size(); ++c) s += urow[c] * orow[c];
            scores[o] = s;
        }
        const auto top = rank_by_scores(scores, candidates, k);
        const auto rp = recall_precision(top, relevant[u], k);
        report.per_user.push_back(
            {u, relevant[u].size(), static_cast<double>(hit_rate(top, relevant[u], k)), ndcg(top, relevant[u], k),
             rp.recall, rp.precision});
    }
    if (report.per_user.empty()) throw EvalError("no evaluable users");
    for (const auto& m : report.per_user) {
        report.hr += m.hr;
        report.ndcg += m.ndcg;
        report.recall += m.recall;
        report.precision += m.precision;
    }
    const auto n = static_cast<double>(report.per_user.size());
    report.users = report.per_user.size();
    report.hr /= n;
    report.ndcg /= n;
    report.recall /= n;
    report.precision /= n;
    return report;
}

MetricsReport evaluate_split(const Model& model, const ModelContext& ctx, const Split& split, SplitPart part,
                             std::size_t k) {
    const std::size_t U = ctx.graph.user_count();
    std::vector<std::vector<std::size_t>> exclude(U), relevant(U);
    for (const auto& it : split.train) exclude[it.user].push_back(it.outfit);
    if (part == SplitPart::test) {
        for (const auto& it : split.val) exclude[it.user].push_back(it.outfit);
        for (const auto& it : split.test) relevant[it.user].push_back(it.outfit);
    } else {
        for (const auto& it : split.val) relevant[it.user].push_back(it.outfit);
    }
    const ForwardOutputs out = infer(model, ctx);
    return evaluate_topk(out.user_refined, out.outfit_refined, exclude, relevant, k);
}

// ---- FITB ----

std::vector<FitbQuery> build_fitb_queries(std::span<const std::vector<std::size_t>> test_outfits,
                                          std::span<const std::size_t> item_category, const FitbOptions& options) {
    if (test_outfits.empty()) throw EvalError("build_fitb_queries: no test outfits");
    const std::size_t item_count = item_category.size();
    std::size_t category_count = 0;
    for (std::size_t c : item_category) category_count = std::max(category_count, c + 1);
    std::vector<std::vector<std::size_t>> items_of(category_count);
    for (std::size_t i = 0; i < item_count; ++i) items_of[item_category[i]].push_back(i);

    std::mt19937_64 rng(options.seed);
    const std::size_t count = options.count == 0 ? test_outfits.size() : options.count;
    std::vector<std::size_t> order(test_outfits.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();

    std::vector<FitbQuery> queries;
    queries.reserve(count);
    for (std::size_t q = 0; q < count; ++q) {
        if (cursor == order.size()) {
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        FitbQuery query;
        query.seed = options.seed;
        query.source = order[cursor++];
        const auto& outfit = test_outfits[query.source];
        if (outfit.empty()) throw EvalError("build_fitb_queries: test outfit with no items");
        auto in_outfit = sorted_copy(outfit);
        in_outfit.erase(std::unique(in_outfit.begin(), in_outfit.end()), in_outfit.end());

        query.masked_position = std::uniform_int_distribution<std::size_t>(0, outfit.size() - 1)(rng);
        query.answer = outfit[query.masked_position];

        std::span<const std::size_t> pool;
        std::vector<std::size_t> all_items;
        if (options.category_matched) {
            pool = items_of[item_category[query.answer]];
        } else {
            all_items.resize(item_count);
            std::iota(all_items.begin(), all_items.end(), 0);
            pool = all_items;
        }
        const auto excluded_in_pool = static_cast<std::size_t>(std::count_if(
            pool.begin(), pool.end(),
            [&](std::size_t i) { return std::binary_search(in_outfit.begin(), in_outfit.end(), i); }));
        if (pool.size() - excluded_in_pool < 3) {
            throw EvalError("build_fitb_queries: pool exhaustion, fewer than 3 distractors available");
        }
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (std::size_t k = 0; k < 3;) {
            const std::size_t cand = pool[pick(rng)];
            if (std::binary_search(in_outfit.begin(), in_outfit.end(), cand)) continue;
            if (std::find(query.distractors.begin(), query.distractors.begin() + static_cast<std::ptrdiff_t>(k), cand) !=
                query.distractors.begin() + static_cast<std::ptrdiff_t>(k)) {
                continue;
            }
            query.distractors[k++] = cand;
        }
        query.candidates = {query.answer, query.distractors[0], query.distractors[1], query.distractors[2]};
        std::shuffle(query.candidates.begin(), query.candidates.end(), rng);
        queries.push_back(query);
    }
    return queries;
}

std::vector<std::size_t> complete_outfit(std::span<const std::vector<std::size_t>> test_outfits,
                                         const FitbQuery& query, std::size_t item) {
    std::vector<std::size_t> comp = test_outfits[query.source];
    comp[query.masked_position] = item;
    return comp;
}

double fitb_accuracy(const CompositionScorer& scorer, std::span<const std::vector<std::size_t>> test_outfits,
                     std::span<const FitbQuery> queries) {
    if (queries.empty()) throw EvalError("fitb_accuracy: no queries");
    constexpr std::size_t chunk = 256;
    std::size_t correct = 0;
    std::vector<std::vector<std::size_t>> comps;
    for (std::size_t start = 0; start < queries.size(); start += chunk) {
        const std::size_t end = std::min(queries.size(), start + chunk);
        comps.clear();
        for (std::size_t q = start; q < end; ++q) {
            for (std::size_t cand : queries[q].candidates) comps.push_back(complete_outfit(test_outfits, queries[q], cand));
        }
        const auto scores = scorer(comps);
        if (scores.size() != comps.size()) throw EvalError("fitb_accuracy: scorer returned the wrong number of scores");
        for (std::size_t q = start; q < end; ++q) {
            const auto& cands = queries[q].candidates;
            const std::size_t base = (q - start) * 4;
            std::size_t best = 0;
            for (std::size_t k = 1; k < 4; ++k) {
                const double s = scores[base + k], b = scores[base + best];
                if (s > b || (s == b && cands[k] < cands[best])) best = k;
            }
            if (cands[best] == queries[q].answer) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(queries.size());
}

double fitb_accuracy(const Model& model, const ModelContext& ctx,
                     std::span<const std::vector<std::size_t>> test_outfits, std::span<const FitbQuery> queries) {
    return fitb_accuracy(
        [&](std::span<const std::vector<std::size_t>> comps) { return compat_scores(model, ctx, comps); },
        test_outfits, queries);
}

void write_fitb_queries(const std::filesystem::path& path, std::span<const FitbQuery> queries,
                        std::span<const std::string> outfit_ids, std::span<const std::string> item_ids) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& q : queries) {
        out << outfit_ids[q.source] << '\t' << q.masked_position << '\t' << item_ids[q.answer] << '\t'
            << item_ids[q.distractors[0]] << ',' << item_ids[q.distractors[1]] << ',' << item_ids[q.distractors[2]]
            << '\t' << q.seed << '\n';
    }
}

std::vector<FitbQuery> read_fitb_queries(const std::filesystem::path& path,
                                         std::span<const std::vector<std::size_t>> test_outfits,
                                         std::span<const std::string> outfit_ids, const EntityIndex& index) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::unordered_map<std::string, std::size_t> source_of;
    for (std::size_t k = 0; k < outfit_ids.size(); ++k) source_of.emplace(outfit_ids[k], k);
    auto item = [&](const std::string& id, std::size_t lineno) {
        auto it = index.item_of.find(id);
        if (it == index.item_of.end()) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": unknown item " + id);
        }
        return it->second;
    };

    std::vector<FitbQuery> queries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        for (std::string field; std::getline(ls, field, '\t');) f.push_back(field);
        const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
        if (f.size() != 5) throw DataError(where + "expected 5 tab-separated fields");
        auto src = source_of.find(f[0]);
        if (src == source_of.end()) throw DataError(where + "unknown test outfit " + f[0]);
        FitbQuery q;
        q.source = src->second;
        try {
            q.masked_position = std::stoull(f[1]);
            q.seed = std::stoull(f[4]);
        } catch (const std::exception&) {
            throw DataError(where + "malformed number");
        }
        q.answer = item(f[2], lineno);
        const auto& outfit = test_outfits[q.source];
        if (q.masked_position >= outfit.size() || outfit[q.masked_position] != q.answer) {
            throw DataError(where + "masked position does not hold the ground-truth item");
        }
        std::istringstream ds(f[3]);
        std::size_t k = 0;
        for (std::string id; std::getline(ds, id, ',');) {
            if (k == 3) throw DataError(where + "expected exactly 3 distractors");
            q.distractors[k++] = item(id, lineno);
        }
        if (k != 3) throw DataError(where + "expected exactly 3 distractors");
        q.candidates = {q.answer, q.distractors[0], q.distractors[1], q.distractors[2]};
        queries.push_back(q);
    }
    return queries;
}

} // namespace hfgn
