#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "koneco/config.hpp"
#include "koneco/error.hpp"
#include "koneco/kgstore.hpp"
#include "koneco/rng.hpp"

namespace koneco {

enum class ModelKind { transe, distmult, complex_bilinear };
enum class NormKind { l1, l2 };
enum class CorruptionMode { entity_uniform, value_relative };

inline std::string_view model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::transe: return "transe";
        case ModelKind::distmult: return "distmult";
        case ModelKind::complex_bilinear: return "complex";
    }
    return "?";
}

inline ModelKind model_kind_from(std::string_view name) {
    if (name == "transe") return ModelKind::transe;
    if (name == "distmult") return ModelKind::distmult;
    if (name == "complex") return ModelKind::complex_bilinear;
    throw ArgumentError("unknown model kind '" + std::string(name) + "'");
}

struct TrainConfig {
    int epochs = 1000;
    int dim = 150;
    int corruptions = 10;  // negatives sampled per positive
    int batch_size = 50;
    double margin = 1.0;
    double lambda = 0.01;  // LP regularizer weight
    int lp_p = 2;
    double learning_rate = 0.001;
    std::uint64_t seed = 0;
    CorruptionMode corruption_mode = CorruptionMode::entity_uniform;
    double value_rel_frac = 0.20;
    NormKind transe_norm = NormKind::l2;
    int threads = 1;   // >1 enables the non-deterministic worker-pool mode
    int patience = 0;  // 0 disables early stopping

    void validate() const {
        if (epochs < 0) throw ArgumentError("epochs must be >= 0");
        if (dim < 1) throw ArgumentError("embedding size must be >= 1");
        if (corruptions < 1) throw ArgumentError("corruptions must be >= 1");
        if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
        if (lambda < 0) throw ArgumentError("regulariser lambda must be >= 0");
        if (lp_p < 1 || lp_p > 3) throw ArgumentError("regulariser p must be 1, 2 or 3");
        if (!(value_rel_frac > 0)) throw ArgumentError("value_rel_frac must be > 0");
        if (learning_rate < 0) throw ArgumentError("learning rate must be >= 0");
        if (threads < 1) throw ArgumentError("threads must be >= 1");
    }
};

// Reads the [kge] section written with the parameter names of the bundled
// presets (epochs, embedding_size, corruptions, batch_size, loss_function,
// initialiser, regulariser + lambda/p, optimiser, learning_rate).
inline TrainConfig train_config_from(const Config& cfg, const std::string& section = "kge") {
    TrainConfig c;
    c.epochs = static_cast<int>(cfg.get_int(section, "epochs", c.epochs));
    c.dim = static_cast<int>(cfg.get_int(section, "embedding_size", c.dim));
    c.corruptions = static_cast<int>(cfg.get_int(section, "corruptions", c.corruptions));
    c.batch_size = static_cast<int>(cfg.get_int(section, "batch_size", c.batch_size));
    c.margin = cfg.get_double(section, "margin", c.margin);
    c.lambda = cfg.get_double(section, "regulariser_lambda", c.lambda);
    c.lp_p = static_cast<int>(cfg.get_int(section, "regulariser_p", c.lp_p));
    c.learning_rate = cfg.get_double(section, "learning_rate", c.learning_rate);
    c.seed = static_cast<std::uint64_t>(cfg.get_int(section, "seed", static_cast<long long>(c.seed)));
    c.value_rel_frac = cfg.get_double(section, "value_rel_frac", c.value_rel_frac);
    c.threads = static_cast<int>(cfg.get_int(section, "threads", c.threads));
    c.patience = static_cast<int>(cfg.get_int(section, "patience", c.patience));

    auto fixed = [&](const char* key, const char* expected) {
        auto v = cfg.get_string(section, key, expected);
        if (v != expected)
            throw ArgumentError(std::string("config key '") + key + "' only supports '" + expected +
                                "', got '" + v + "'");
    };
    fixed("loss_function", "pairwise");
    fixed("initialiser", "xavier");
    fixed("regulariser", "lp");
    fixed("optimiser", "adam");

    auto mode = cfg.get_string(section, "corruption_mode", "entity_uniform");
    if (mode == "entity_uniform") c.corruption_mode = CorruptionMode::entity_uniform;
    else if (mode == "value_relative") c.corruption_mode = CorruptionMode::value_relative;
    else throw ArgumentError("unknown corruption_mode '" + mode + "'");

    auto norm = cfg.get_string(section, "transe_norm", "l2");
    if (norm == "l1") c.transe_norm = NormKind::l1;
    else if (norm == "l2") c.transe_norm = NormKind::l2;
    else throw ArgumentError("unknown transe_norm '" + norm + "'");

    c.validate();
    return c;
}

// Entity and relation vector tables. ComplEx rows store dim real parts
// followed by dim imaginary parts.
struct EmbeddingModel {
    ModelKind kind = ModelKind::transe;
    int dim = 0;
    NormKind norm_kind = NormKind::l2;
    std::size_t n_entities = 0;
    std::size_t n_relations = 0;
    std::vector<double> entity;
    std::vector<double> relation;

    int row_width() const { return kind == ModelKind::complex_bilinear ? 2 * dim : dim; }

    double* entity_row(std::int32_t i) {
        return entity.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(row_width());
    }
    const double* entity_row(std::int32_t i) const {
        return entity.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(row_width());
    }
    double* relation_row(std::int32_t i) {
        return relation.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(row_width());
    }
    const double* relation_row(std::int32_t i) const {
        return relation.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(row_width());
    }

    bool finite() const {
        auto ok = [](const std::vector<double>& v) {
            return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
        };
        return ok(entity) && ok(relation);
    }
};

namespace detail {

inline void project_to_unit_ball(double* row, int width) {
    double sq = 0.0;
    for (int i = 0; i < width; ++i) sq += row[i] * row[i];
    if (sq > 1.0) {
        double inv = 1.0 / std::sqrt(sq);
        for (int i = 0; i < width; ++i) row[i] *= inv;
    }
}

}  // namespace detail

// Xavier-uniform initialization with fan values (table rows, row width).
// TransE entity rows are projected into the unit L2 ball.
inline EmbeddingModel init_model(ModelKind kind, int dim, const Store& store, std::uint64_t seed,
                                 NormKind norm = NormKind::l2) {
    if (dim < 1) throw ArgumentError("init_model: dim must be >= 1");
    if (store.n_entities() == 0 || store.graph.triples.empty())
        throw ArgumentError("init_model: empty store");
    EmbeddingModel m;
    m.kind = kind;
    m.dim = dim;
    m.norm_kind = norm;
    m.n_entities = store.n_entities();
    m.n_relations = store.n_relations();
    const int width = m.row_width();
    m.entity.resize(m.n_entities * static_cast<std::size_t>(width));
    m.relation.resize(m.n_relations * static_cast<std::size_t>(width));
    Rng rng(seed);
    double be = std::sqrt(6.0 / (static_cast<double>(m.n_entities) + width));
    for (auto& x : m.entity) x = rng.uniform(-be, be);
    double br = std::sqrt(6.0 / (static_cast<double>(m.n_relations) + width));
    for (auto& x : m.relation) x = rng.uniform(-br, br);
    if (kind == ModelKind::transe)
        for (std::size_t i = 0; i < m.n_entities; ++i)
            detail::project_to_unit_ball(m.entity_row(static_cast<std::int32_t>(i)), width);
    return m;
}

namespace detail {

inline double score_raw(ModelKind kind, NormKind norm, int dim, const double* h, const double* r,
                        const double* t) {
    switch (kind) {
        case ModelKind::transe: {
            double acc = 0.0;
            if (norm == NormKind::l1) {
                for (int i = 0; i < dim; ++i) acc += std::fabs(h[i] + r[i] - t[i]);
                return -acc;
            }
            for (int i = 0; i < dim; ++i) {
                double d = h[i] + r[i] - t[i];
                acc += d * d;
            }
            return -std::sqrt(acc);
        }
        case ModelKind::distmult: {
            double acc = 0.0;
            for (int i = 0; i < dim; ++i) acc += h[i] * r[i] * t[i];
            return acc;
        }
        case ModelKind::complex_bilinear: {
            // Rows hold (real[0..dim), imag[0..dim)): Re(sum h * r * conj(t)).
            const double *a = h, *b = h + dim;
            const double *c = r, *d = r + dim;
            const double *e = t, *f = t + dim;
            double acc = 0.0;
            for (int i = 0; i < dim; ++i)
                acc += e[i] * (a[i] * c[i] - b[i] * d[i]) + f[i] * (a[i] * d[i] + b[i] * c[i]);
            return acc;
        }
    }
    return 0.0;
}

// Adds factor * d(score)/d(row) for the three rows of a triple.
inline void score_grad_raw(ModelKind kind, NormKind norm, int dim, const double* h, const double* r,
                           const double* t, double factor, double* gh, double* gr, double* gt) {
    switch (kind) {
        case ModelKind::transe: {
            if (norm == NormKind::l1) {
                for (int i = 0; i < dim; ++i) {
                    double d = h[i] + r[i] - t[i];
                    double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                    gh[i] -= factor * s;
                    gr[i] -= factor * s;
                    gt[i] += factor * s;
                }
                return;
            }
            double sq = 0.0;
            for (int i = 0; i < dim; ++i) {
                double d = h[i] + r[i] - t[i];
                sq += d * d;
            }
            double inv = 1.0 / std::max(std::sqrt(sq), 1e-12);
            for (int i = 0; i < dim; ++i) {
                double g = factor * (h[i] + r[i] - t[i]) * inv;
                gh[i] -= g;
                gr[i] -= g;
                gt[i] += g;
            }
            return;
        }
        case ModelKind::distmult: {
            for (int i = 0; i < dim; ++i) {
                gh[i] += factor * r[i] * t[i];
                gr[i] += factor * h[i] * t[i];
                gt[i] += factor * h[i] * r[i];
            }
            return;
        }
        case ModelKind::complex_bilinear: {
            const double *a = h, *b = h + dim;
            const double *c = r, *d = r + dim;
            const double *e = t, *f = t + dim;
            double *ga = gh, *gb = gh + dim;
            double *gc = gr, *gd = gr + dim;
            double *ge = gt, *gf = gt + dim;
            for (int i = 0; i < dim; ++i) {
                ga[i] += factor * (c[i] * e[i] + d[i] * f[i]);
                gb[i] += factor * (-d[i] * e[i] + c[i] * f[i]);
                gc[i] += factor * (a[i] * e[i] + b[i] * f[i]);
                gd[i] += factor * (-b[i] * e[i] + a[i] * f[i]);
                ge[i] += factor * (a[i] * c[i] - b[i] * d[i]);
                gf[i] += factor * (a[i] * d[i] + b[i] * c[i]);
            }
            return;
        }
    }
}

}  // namespace detail

// TransE: -||h + r - t||, DistMult: sum h*r*t, ComplEx: Re(sum h*r*conj(t)).
// Higher is more plausible for every kind.
inline double score(const EmbeddingModel& model, const Triple& t) {
    if (t.s < 0 || static_cast<std::size_t>(t.s) >= model.n_entities || t.o < 0 ||
        static_cast<std::size_t>(t.o) >= model.n_entities || t.p < 0 ||
        static_cast<std::size_t>(t.p) >= model.n_relations)
        throw Error("score: triple ids do not match the model dictionaries");
    return detail::score_raw(model.kind, model.norm_kind, model.dim, model.entity_row(t.s),
                             model.relation_row(t.p), model.entity_row(t.o));
}

// ---------------------------------------------------------------------------
// Corruption

enum class CorruptionSide { either, head, tail };

namespace detail {

// Uniform draw from pool excluding triples already in the store (local closed
// world). Bounded random retries are the fast path; a full scan then finds a
// non-member if one exists at all, and only a truly saturated pool falls back
// to any entity != original.
inline std::int32_t draw_corrupted(const Store& store, const Triple& t, bool corrupt_head,
                                   const std::vector<std::int32_t>& pool, Rng& rng) {
    const std::int32_t original = corrupt_head ? t.s : t.o;
    auto known = [&](std::int32_t cand) {
        return corrupt_head ? store.contains(cand, t.p, t.o) : store.contains(t.s, t.p, cand);
    };
    for (int attempt = 0; attempt < 100; ++attempt) {
        auto cand = pool[static_cast<std::size_t>(rng.below(pool.size()))];
        if (cand != original && !known(cand)) return cand;
    }
    auto offset = static_cast<std::size_t>(rng.below(pool.size()));
    for (std::size_t i = 0; i < pool.size(); ++i) {
        auto cand = pool[(offset + i) % pool.size()];
        if (cand != original && !known(cand)) return cand;
    }
    for (std::size_t i = 0; i < pool.size(); ++i) {
        auto cand = pool[(offset + i) % pool.size()];
        if (cand != original) return cand;
    }
    throw CorruptionError("cannot corrupt: candidate pool has a single entity");
}

}  // namespace detail

// Entity-uniform corruption of head or tail under local closed-world
// resampling. The tail pool is the relation's candidate set; the head pool is
// the relation's observed subjects.
inline Triple corrupt(const Triple& t, const Store& store, CorruptionSide side, Rng& rng) {
    store.check_entity(t.s);
    store.check_relation(t.p);
    store.check_entity(t.o);
    bool head = side == CorruptionSide::head ||
                (side == CorruptionSide::either && rng.coin());
    const auto pool = head ? store.relation_info[static_cast<std::size_t>(t.p)].subjects
                           : candidates(store, t.p);
    if (pool.size() <= 1)
        throw CorruptionError(std::string("cannot corrupt ") + (head ? "head" : "tail") +
                              ": candidate pool has a single entity");
    Triple out = t;
    auto cand = detail::draw_corrupted(store, t, head, pool, rng);
    (head ? out.s : out.o) = cand;
    return out;
}

namespace detail {

// Nearest observed bin to the target index, preferring the perturbation
// direction; never returns the original index.
inline std::optional<std::int32_t> snap_to_observed(const Store& store, SchemeKind kind,
                                                    long target, long original, bool upward) {
    auto it = store.scheme_bins.find(kind);
    if (it == store.scheme_bins.end() || it->second.empty()) return std::nullopt;
    const auto& bins = it->second;
    auto first_at = [&](long index) {
        return std::lower_bound(bins.begin(), bins.end(), index,
                                [](const auto& a, long v) { return a.first < v; });
    };
    auto pick = [&](bool up) -> std::optional<std::int32_t> {
        if (up) {
            for (auto bit = first_at(target); bit != bins.end(); ++bit)
                if (bit->first != original) return bit->second;
        } else {
            auto bit = first_at(target + 1);
            while (bit != bins.begin()) {
                --bit;
                if (bit->first != original) return bit->second;
            }
        }
        return std::nullopt;
    };
    if (auto id = pick(upward)) return id;
    return pick(!upward);
}

}  // namespace detail

// Relative value corruption: the tail bin's representative v is perturbed to
// v*(1 +/- rel_frac) and rebinned; landing in the original bin steps one bin
// outward. Zero-valued tails corrupt to the smallest observed positive bin.
// The perturbed bin is snapped to the nearest bin entity observed in the
// store, since negatives must reference entities the model knows.
inline Triple corrupt_value(const Triple& t, const Store& store, const SchemeSet& schemes,
                            double rel_frac, Rng& rng) {
    store.check_entity(t.s);
    store.check_relation(t.p);
    store.check_entity(t.o);
    if (!(rel_frac > 0)) throw ArgumentError("corrupt_value: rel_frac must be > 0");
    const auto& info = store.relation_info[static_cast<std::size_t>(t.p)];
    if (!info.value_scheme)
        throw ArgumentError("corrupt_value: relation '" +
                            store.graph.relation_label(t.p) + "' is not a value relation");
    if (*info.value_scheme == SchemeKind::coordinate)
        throw ArgumentError("corrupt_value: coordinate relations are not multiplicative; "
                            "use entity corruption");
    SchemeKind kind = *info.value_scheme;
    auto bin = bin_from_label(store.graph.entity_label(t.o), schemes);
    if (!bin) throw ArgumentError("corrupt_value: tail is not a value bin");

    Triple out = t;
    if (bin->zero) {
        auto it = store.scheme_bins.find(kind);
        if (it == store.scheme_bins.end() || it->second.empty())
            throw CorruptionError("corrupt_value: no positive bin observed for the scheme");
        out.o = it->second.front().second;  // smallest observed positive bin
        return out;
    }
    const ValueScheme& scheme = schemes.of(kind);
    bool up = rng.coin();
    double perturbed = bin->representative * (up ? 1.0 + rel_frac : 1.0 - rel_frac);
    long target;
    if (perturbed <= 0) {
        target = bin->index - 1;
    } else {
        target = bin_value(perturbed, scheme).index;
        if (target == bin->index) target += up ? 1 : -1;
    }
    if (auto id = detail::snap_to_observed(store, kind, target, bin->index, up)) {
        out.o = *id;
        return out;
    }
    auto zit = store.scheme_zero_bin.find(kind);
    if (zit != store.scheme_zero_bin.end()) {
        out.o = zit->second;
        return out;
    }
    throw CorruptionError("corrupt_value: no alternative value bin observed");
}

// ---------------------------------------------------------------------------
// Pairwise margin loss with LP regularization

struct PosNeg {
    Triple pos;
    Triple neg;
};

namespace detail {

// Sparse row-gradient accumulator; rows are zeroed when first touched.
class SparseAccum {
  public:
    void init(std::size_t rows, int width) {
        width_ = width;
        slot_.assign(rows, -1);
        touched_.clear();
    }

    double* row(std::int32_t r) {
        auto& s = slot_[static_cast<std::size_t>(r)];
        if (s < 0) {
            s = static_cast<std::int32_t>(touched_.size());
            touched_.push_back(r);
            std::size_t need = (static_cast<std::size_t>(s) + 1) * static_cast<std::size_t>(width_);
            if (buf_.size() < need) buf_.resize(need);
            std::fill_n(buf_.begin() + static_cast<std::ptrdiff_t>(
                                            static_cast<std::size_t>(s) * static_cast<std::size_t>(width_)),
                        width_, 0.0);
        }
        return buf_.data() + static_cast<std::size_t>(s) * static_cast<std::size_t>(width_);
    }

    const std::vector<std::int32_t>& touched() const { return touched_; }

    void reset() {
        for (auto r : touched_) slot_[static_cast<std::size_t>(r)] = -1;
        touched_.clear();
    }

  private:
    int width_ = 0;
    std::vector<std::int32_t> slot_;
    std::vector<std::int32_t> touched_;
    std::vector<double> buf_;
};

inline double lp_penalty(const double* row, int width, int p) {
    double acc = 0.0;
    switch (p) {
        case 1:
            for (int i = 0; i < width; ++i) acc += std::fabs(row[i]);
            break;
        case 2:
            for (int i = 0; i < width; ++i) acc += row[i] * row[i];
            break;
        default:
            for (int i = 0; i < width; ++i) acc += std::fabs(row[i]) * row[i] * row[i];
            break;
    }
    return acc;
}

inline void lp_penalty_grad(const double* row, int width, int p, double lambda, double* grad) {
    switch (p) {
        case 1:
            for (int i = 0; i < width; ++i)
                grad[i] += lambda * (row[i] > 0 ? 1.0 : (row[i] < 0 ? -1.0 : 0.0));
            break;
        case 2:
            for (int i = 0; i < width; ++i) grad[i] += 2.0 * lambda * row[i];
            break;
        default:
            for (int i = 0; i < width; ++i) grad[i] += 3.0 * lambda * row[i] * std::fabs(row[i]);
            break;
    }
}

}  // namespace detail

// Batch objective: sum of hinge terms max(0, margin + score(neg) - score(pos))
// plus lambda * sum over the batch's touched rows of ||row||_p^p. Each row is
// regularized once per batch regardless of how many triples reference it.
inline double batch_objective(const EmbeddingModel& model, std::span<const PosNeg> pairs,
                              const TrainConfig& cfg) {
    double loss = 0.0;
    std::set<std::int32_t> ents, rels;
    for (const auto& pn : pairs) {
        double sp = detail::score_raw(model.kind, model.norm_kind, model.dim,
                                      model.entity_row(pn.pos.s), model.relation_row(pn.pos.p),
                                      model.entity_row(pn.pos.o));
        double sn = detail::score_raw(model.kind, model.norm_kind, model.dim,
                                      model.entity_row(pn.neg.s), model.relation_row(pn.neg.p),
                                      model.entity_row(pn.neg.o));
        loss += std::max(0.0, cfg.margin + sn - sp);
        ents.insert({pn.pos.s, pn.pos.o, pn.neg.s, pn.neg.o});
        rels.insert({pn.pos.p, pn.neg.p});
    }
    if (cfg.lambda > 0) {
        const int w = model.row_width();
        for (auto e : ents) loss += cfg.lambda * detail::lp_penalty(model.entity_row(e), w, cfg.lp_p);
        for (auto r : rels) loss += cfg.lambda * detail::lp_penalty(model.relation_row(r), w, cfg.lp_p);
    }
    return loss;
}

// Analytic gradient of batch_objective, accumulated into the two sparse
// tables. Returns the objective value.
inline double batch_gradient(const EmbeddingModel& model, std::span<const PosNeg> pairs,
                             const TrainConfig& cfg, detail::SparseAccum& ent_grad,
                             detail::SparseAccum& rel_grad) {
    const int w = model.row_width();
    double loss = 0.0;
    for (const auto& pn : pairs) {
        // Register every row of the batch first: the regularizer must see
        // rows even when the hinge is inactive, and registration may grow
        // the accumulator's buffer (invalidating earlier row pointers).
        ent_grad.row(pn.pos.s);
        ent_grad.row(pn.pos.o);
        ent_grad.row(pn.neg.s);
        ent_grad.row(pn.neg.o);
        rel_grad.row(pn.pos.p);
        rel_grad.row(pn.neg.p);
        double sp = detail::score_raw(model.kind, model.norm_kind, model.dim,
                                      model.entity_row(pn.pos.s), model.relation_row(pn.pos.p),
                                      model.entity_row(pn.pos.o));
        double sn = detail::score_raw(model.kind, model.norm_kind, model.dim,
                                      model.entity_row(pn.neg.s), model.relation_row(pn.neg.p),
                                      model.entity_row(pn.neg.o));
        double hinge = cfg.margin + sn - sp;
        if (hinge <= 0) continue;
        loss += hinge;
        detail::score_grad_raw(model.kind, model.norm_kind, model.dim, model.entity_row(pn.pos.s),
                               model.relation_row(pn.pos.p), model.entity_row(pn.pos.o), -1.0,
                               ent_grad.row(pn.pos.s), rel_grad.row(pn.pos.p),
                               ent_grad.row(pn.pos.o));
        detail::score_grad_raw(model.kind, model.norm_kind, model.dim, model.entity_row(pn.neg.s),
                               model.relation_row(pn.neg.p), model.entity_row(pn.neg.o), 1.0,
                               ent_grad.row(pn.neg.s), rel_grad.row(pn.neg.p),
                               ent_grad.row(pn.neg.o));
    }
    if (cfg.lambda > 0) {
        for (auto e : ent_grad.touched()) {
            loss += cfg.lambda * detail::lp_penalty(model.entity_row(e), w, cfg.lp_p);
            detail::lp_penalty_grad(model.entity_row(e), w, cfg.lp_p, cfg.lambda, ent_grad.row(e));
        }
        for (auto r : rel_grad.touched()) {
            loss += cfg.lambda * detail::lp_penalty(model.relation_row(r), w, cfg.lp_p);
            detail::lp_penalty_grad(model.relation_row(r), w, cfg.lp_p, cfg.lambda, rel_grad.row(r));
        }
    }
    return loss;
}

struct TrainTrace {
    std::vector<double> epoch_mean_loss;
    std::vector<double> epoch_val_mrr;  // filled only when train() gets a validation split
    std::vector<double> epoch_wall_ms;
    int epochs_run = 0;
    TrainConfig config;
};

namespace detail {

// Pessimistic filtered rank used by the per-epoch validation hook and the
// grid-search evaluator.
inline int eval_rank(const EmbeddingModel& model, const Store& store, const Triple& t,
                     bool filtered) {
    auto cands = candidates(store, t.p);
    auto truths = true_tails(store, t.s, t.p);
    double s_true = score(model, t);
    int rank = 1;
    for (auto c : cands) {
        if (c == t.o) continue;
        if (filtered && std::binary_search(truths.begin(), truths.end(), c)) continue;
        double s = score(model, {t.s, t.p, c});
        if (s >= s_true) ++rank;
    }
    return rank;
}

}  // namespace detail

namespace detail {

struct AdamState {
    std::vector<double> m_ent, v_ent, m_rel, v_rel;
    std::atomic<std::int64_t> step{0};

    void init(const EmbeddingModel& model) {
        m_ent.assign(model.entity.size(), 0.0);
        v_ent.assign(model.entity.size(), 0.0);
        m_rel.assign(model.relation.size(), 0.0);
        v_rel.assign(model.relation.size(), 0.0);
    }
};

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

inline void adam_apply_row(double* theta, double* m, double* v, const double* grad, int width,
                           double lr, std::int64_t t) {
    double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t));
    for (int i = 0; i < width; ++i) {
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * grad[i];
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        theta[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
}

// Precomputed per-relation pools and per-entity bin decodes for the sampler.
struct NegSampler {
    const Store* store = nullptr;
    const TrainConfig* cfg = nullptr;
    std::vector<std::vector<std::int32_t>> tail_pool;
    std::vector<std::vector<std::int32_t>> head_pool;

    void init(const Store& s, const TrainConfig& c) {
        store = &s;
        cfg = &c;
        tail_pool.resize(s.n_relations());
        head_pool.resize(s.n_relations());
        for (std::size_t p = 0; p < s.n_relations(); ++p) {
            tail_pool[p] = candidates(s, static_cast<std::int32_t>(p));
            head_pool[p] = s.relation_info[p].subjects;
        }
    }

    // Returns false when no negative can be formed for this positive.
    bool sample(const Triple& pos, Rng& rng, Triple& out) const {
        auto p = static_cast<std::size_t>(pos.p);
        if (cfg->corruption_mode == CorruptionMode::value_relative &&
            store->relation_info[p].value_scheme &&
            *store->relation_info[p].value_scheme != SchemeKind::coordinate) {
            try {
                out = corrupt_value(pos, *store, store->schemes, cfg->value_rel_frac, rng);
                return true;
            } catch (const CorruptionError&) {
                return false;  // degenerate scheme: no alternative bin exists
            }
        }
        bool head = rng.coin();
        const auto* pool = head ? &head_pool[p] : &tail_pool[p];
        if (pool->size() <= 1) {
            head = !head;
            pool = head ? &head_pool[p] : &tail_pool[p];
            if (pool->size() <= 1) return false;
        }
        out = pos;
        (head ? out.s : out.o) = draw_corrupted(*store, pos, head, *pool, rng);
        return true;
    }
};

}  // namespace detail

// Minimizes the pairwise margin loss with Adam. Deterministic for a given
// (store, config, seed) when threads == 1; the multi-threaded mode applies
// per-batch updates from a worker pool without locks and is excluded from
// determinism guarantees. A validation split, when given, is ranked after
// every epoch and lands in the trace as filtered MRR.
inline TrainTrace train(EmbeddingModel& model, const Store& store, const TrainConfig& cfg,
                        const std::vector<Triple>* validation = nullptr) {
    cfg.validate();
    if (store.graph.triples.empty()) throw ArgumentError("train: empty store");
    const auto& positives = store.graph.triples;
    const int width = model.row_width();

    detail::AdamState adam;
    adam.init(model);
    detail::NegSampler sampler;
    sampler.init(store, cfg);

    TrainTrace trace;
    trace.config = cfg;

    const std::size_t n = positives.size();
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    Rng shuffle_rng(seed_for(cfg.seed, "shuffle"));

    double best_loss = std::numeric_limits<double>::infinity();
    int since_best = 0;

    auto run_batches = [&](std::size_t begin, std::size_t end, Rng& rng,
                           detail::SparseAccum& ge, detail::SparseAccum& gr) {
        double local_loss = 0.0;
        std::vector<PosNeg> pairs;
        for (std::size_t b = begin; b < end; b += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t stop = std::min(end, b + static_cast<std::size_t>(cfg.batch_size));
            pairs.clear();
            for (std::size_t i = b; i < stop; ++i) {
                const Triple& pos = positives[order[i]];
                for (int e = 0; e < cfg.corruptions; ++e) {
                    Triple neg;
                    if (sampler.sample(pos, rng, neg)) pairs.push_back({pos, neg});
                }
            }
            if (pairs.empty()) continue;
            ge.reset();
            gr.reset();
            local_loss += batch_gradient(model, pairs, cfg, ge, gr);
            std::int64_t t = ++adam.step;
            for (auto e : ge.touched()) {
                auto off = static_cast<std::size_t>(e) * static_cast<std::size_t>(width);
                detail::adam_apply_row(model.entity_row(e), adam.m_ent.data() + off,
                                       adam.v_ent.data() + off, ge.row(e), width, cfg.learning_rate, t);
            }
            for (auto r : gr.touched()) {
                auto off = static_cast<std::size_t>(r) * static_cast<std::size_t>(width);
                detail::adam_apply_row(model.relation_row(r), adam.m_rel.data() + off,
                                       adam.v_rel.data() + off, gr.row(r), width, cfg.learning_rate, t);
            }
        }
        return local_loss;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto started = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        if (cfg.threads <= 1) {
            detail::SparseAccum ge, gr;
            ge.init(model.n_entities, width);
            gr.init(model.n_relations, width);
            Rng rng(seed_for(cfg.seed, "epoch:" + std::to_string(epoch)));
            epoch_loss = run_batches(0, n, rng, ge, gr);
        } else {
            int nt = std::min<int>(cfg.threads, static_cast<int>((n + 63) / 64) + 1);
            std::vector<std::thread> workers;
            std::vector<double> losses(static_cast<std::size_t>(nt), 0.0);
            std::size_t chunk = (n + static_cast<std::size_t>(nt) - 1) / static_cast<std::size_t>(nt);
            for (int w = 0; w < nt; ++w) {
                workers.emplace_back([&, w] {
                    std::size_t begin = static_cast<std::size_t>(w) * chunk;
                    std::size_t end = std::min(n, begin + chunk);
                    if (begin >= end) return;
                    detail::SparseAccum ge, gr;
                    ge.init(model.n_entities, width);
                    gr.init(model.n_relations, width);
                    Rng rng(seed_for(cfg.seed,
                                     "epoch:" + std::to_string(epoch) + ":w" + std::to_string(w)));
                    losses[static_cast<std::size_t>(w)] = run_batches(begin, end, rng, ge, gr);
                });
            }
            for (auto& t : workers) t.join();
            for (double l : losses) epoch_loss += l;
        }
        if (model.kind == ModelKind::transe)
            for (std::size_t i = 0; i < model.n_entities; ++i)
                detail::project_to_unit_ball(model.entity_row(static_cast<std::int32_t>(i)), width);

        double mean_loss = epoch_loss / static_cast<double>(n);
        if (!std::isfinite(mean_loss) || !model.finite())
            throw TrainingError("training diverged at epoch " + std::to_string(epoch + 1) +
                                " (non-finite loss or parameters)");
        trace.epoch_mean_loss.push_back(mean_loss);
        if (validation && !validation->empty()) {
            double rr = 0.0;
            for (const auto& t : *validation)
                rr += 1.0 / detail::eval_rank(model, store, t, /*filtered=*/true);
            trace.epoch_val_mrr.push_back(rr / static_cast<double>(validation->size()));
        }
        trace.epoch_wall_ms.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
                .count());
        trace.epochs_run = epoch + 1;

        if (cfg.patience > 0) {
            if (mean_loss < best_loss - 1e-12) {
                best_loss = mean_loss;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Grid search

enum class Metric { mrr, hits1, hits10 };

struct LeaderboardRow {
    TrainConfig config;
    double value = 0.0;
};

struct GridResult {
    TrainConfig best;
    std::vector<LeaderboardRow> leaderboard;
};

// Trains one model per configuration and ranks them by the held-out metric.
// Ties break toward fewer epochs, then smaller dimension.
inline GridResult grid_search(const Store& store, ModelKind kind,
                              const std::vector<TrainConfig>& space,
                              const std::vector<Triple>& eval_split, Metric metric = Metric::mrr,
                              bool filtered = true) {
    if (space.empty()) throw ArgumentError("grid_search: empty parameter space");
    if (eval_split.empty()) throw ArgumentError("grid_search: empty evaluation split");
    for (const auto& t : eval_split)
        if (store.contains(t.s, t.p, t.o))
            throw ArgumentError("grid_search: evaluation split overlaps the training store");

    GridResult result;
    for (const auto& cfg : space) {
        EmbeddingModel model = init_model(kind, cfg.dim, store, cfg.seed, cfg.transe_norm);
        train(model, store, cfg);
        std::vector<int> ranks;
        ranks.reserve(eval_split.size());
        for (const auto& t : eval_split) ranks.push_back(detail::eval_rank(model, store, t, filtered));
        double value = 0.0;
        for (int r : ranks) {
            switch (metric) {
                case Metric::mrr: value += 1.0 / r; break;
                case Metric::hits1: value += r <= 1 ? 1.0 : 0.0; break;
                case Metric::hits10: value += r <= 10 ? 1.0 : 0.0; break;
            }
        }
        value /= static_cast<double>(ranks.size());
        result.leaderboard.push_back({cfg, value});
    }
    std::stable_sort(result.leaderboard.begin(), result.leaderboard.end(),
                     [](const LeaderboardRow& a, const LeaderboardRow& b) {
                         if (a.value != b.value) return a.value > b.value;
                         if (a.config.epochs != b.config.epochs) return a.config.epochs < b.config.epochs;
                         return a.config.dim < b.config.dim;
                     });
    result.best = result.leaderboard.front().config;
    return result;
}

// ---------------------------------------------------------------------------
// Persistence: binary header (kind, dim, counts, label hash) + row-major
// tables. The label hash ties a model file to the graph it was trained on.

inline std::uint64_t store_label_hash(const TripleSet& ts) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& e : ts.entities) {
        h = fnv1a64(e, h);
        h = fnv1a64("\n", h);
    }
    h = fnv1a64("|", h);
    for (const auto& r : ts.relations) {
        h = fnv1a64(r, h);
        h = fnv1a64("\n", h);
    }
    return h;
}

namespace detail {

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("model file truncated");
    return v;
}

}  // namespace detail

inline void save_model(const EmbeddingModel& model, const std::string& path,
                       std::uint64_t label_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write model file: " + path);
    out.write("KGEM", 4);
    detail::write_pod<std::uint32_t>(out, 1);  // version
    detail::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(model.kind));
    detail::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(model.norm_kind));
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.dim));
    detail::write_pod<std::uint64_t>(out, model.n_entities);
    detail::write_pod<std::uint64_t>(out, model.n_relations);
    detail::write_pod<std::uint64_t>(out, label_hash);
    out.write(reinterpret_cast<const char*>(model.entity.data()),
              static_cast<std::streamsize>(model.entity.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(model.relation.data()),
              static_cast<std::streamsize>(model.relation.size() * sizeof(double)));
    if (!out) throw IoError("write failed: " + path);
}

struct LoadedModel {
    EmbeddingModel model;
    std::uint64_t label_hash = 0;
};

inline LoadedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "KGEM", 4) != 0)
        throw IoError("not a model file: " + path);
    auto version = detail::read_pod<std::uint32_t>(in);
    if (version != 1) throw IoError("unsupported model file version");
    LoadedModel lm;
    lm.model.kind = static_cast<ModelKind>(detail::read_pod<std::uint8_t>(in));
    lm.model.norm_kind = static_cast<NormKind>(detail::read_pod<std::uint8_t>(in));
    lm.model.dim = static_cast<int>(detail::read_pod<std::uint32_t>(in));
    lm.model.n_entities = detail::read_pod<std::uint64_t>(in);
    lm.model.n_relations = detail::read_pod<std::uint64_t>(in);
    lm.label_hash = detail::read_pod<std::uint64_t>(in);
    auto width = static_cast<std::size_t>(lm.model.row_width());
    lm.model.entity.resize(lm.model.n_entities * width);
    lm.model.relation.resize(lm.model.n_relations * width);
    in.read(reinterpret_cast<char*>(lm.model.entity.data()),
            static_cast<std::streamsize>(lm.model.entity.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(lm.model.relation.data()),
            static_cast<std::streamsize>(lm.model.relation.size() * sizeof(double)));
    if (!in) throw IoError("model file truncated: " + path);
    return lm;
}

}  // namespace koneco
