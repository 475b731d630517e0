#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <deque>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hypersep/core.hpp"
#include "hypersep/rng.hpp"
#include "hypersep/solver.hpp"

namespace hypersep {

enum class tau_setting { off, pi_ratio };
enum class endgame_setting { step7, synthetic };

/// Near-unity constant used in place of 1 when tau substitution is enabled.
/// The exact-arithmetic trick divides pi by pi-to-20-decimals, which is
/// indistinguishable from 1 in doubles; dividing by pi truncated to 7
/// decimals keeps the same character while clearing the incidence band
/// (about 1.7e-8 off unity).
inline double pi_ratio_tau() {
    return 3.14159265358979323846 / 3.1415926;
}

struct separation_config {
    double delta_th = 1e-6;          // dust-bin Manhattan threshold
    double eps_rel = default_eps_rel;
    double residual_tol = default_residual_tol;
    double rank_tol = default_rank_tol;
    tau_setting tau = tau_setting::off;
    endgame_setting endgame = endgame_setting::step7;
    std::size_t pair_cap = 0;        // 0 selects 2 * dimension
    std::size_t retry_cap = 8;       // returned-to-G re-presentations before dust-bin
    std::size_t repair_attempts = 8;
    std::uint64_t seed = 0;

    double tau_value() const { return tau == tau_setting::pi_ratio ? pi_ratio_tau() : 1.0; }
};

/// An S-anchor with up to three waiting quadrant-mates. Only the first
/// neighbor contributes a midpoint and a counter increment.
template <class Scalar>
struct pending_pair {
    std::int64_t anchor_id = 0;
    point<Scalar> first;
    std::optional<point<Scalar>> second;
    std::optional<point<Scalar>> third;
    std::vector<Scalar> mid;  // midpoint of (anchor, first)
};

template <class Scalar>
struct s_entry {
    point<Scalar> pt;
    orientation_vector ov;
};

template <class Scalar>
struct dust_entry {
    point<Scalar> pt;
    std::string reason;
};

/// One stage transition for the bit audit: plane count before the flush, the
/// S population at the end of the previous stage, fresh-quadrant placements
/// since then, and the first neighbors this flush transferred.
struct flush_event {
    std::size_t q_before = 0;
    std::size_t stage_points = 0;
    std::size_t fresh = 0;
    std::size_t moved = 0;
};

enum class insert_kind {
    placed_in_s,
    paired_first,
    paired_second,
    paired_third,
    dust_binned,
    returned_to_g,
    triggered_flush,
};

template <class Scalar>
struct insert_result {
    insert_kind kind;
    std::int64_t anchor_id = 0;            // set for the paired kinds
    std::size_t plane_index = 0;           // set for triggered_flush
    std::optional<point<Scalar>> returned; // set for returned_to_g
};

namespace detail {

struct insert_note {
    insert_kind kind;
    std::int64_t anchor_id = 0;
};

template <class Scalar>
struct coord_hash {
    std::size_t operator()(const std::vector<Scalar>& coords) const {
        std::uint64_t h = 0x9e3779b97f4a7c15ull ^ coords.size();
        for (const Scalar& c : coords) {
            const double d = hypersep::to_double(c);
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(d));
            std::memcpy(&bits, &d, sizeof(bits));
            h ^= bits + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        }
        return static_cast<std::size_t>(h);
    }
};

}  // namespace detail

template <class Scalar>
struct separation_state {
    std::size_t dimension = 0;
    std::vector<hyperplane<Scalar>> planes;
    std::vector<s_entry<Scalar>> s_points;
    std::vector<pending_pair<Scalar>> pending;
    std::size_t counter = 0;
    std::vector<dust_entry<Scalar>> dustbin;
    separation_config config;
    std::vector<flush_event> events;

    // lookup caches; the OV map is re-keyed wholesale once per flush
    std::unordered_map<orientation_vector, std::size_t, ov_hash> ov_lookup;
    std::unordered_map<std::int64_t, std::size_t> s_index_by_id;
    std::unordered_map<std::int64_t, std::size_t> pending_by_anchor;
    std::unordered_set<std::vector<Scalar>, detail::coord_hash<Scalar>> seen_coords;
    std::unordered_set<std::int64_t> used_ids;
    std::unordered_set<std::int64_t> synthetic_ids;

    std::size_t fresh_since_flush = 0;
    std::size_t flushes_done = 0;
    std::int64_t next_generated_id = 0;
    double max_scaled_residual = 0.0;

    std::size_t point_count() const { return s_points.size(); }
    std::size_t plane_count() const { return planes.size(); }

    std::size_t effective_pair_cap() const {
        return config.pair_cap ? config.pair_cap : 2 * dimension;
    }

    Scalar tau() const { return from_double<Scalar>(config.tau_value()); }

    std::int64_t fresh_id() {
        while (used_ids.count(next_generated_id)) ++next_generated_id;
        return next_generated_id++;
    }

    void note_id(std::int64_t id) {
        used_ids.insert(id);
        if (id >= next_generated_id) next_generated_id = id + 1;
    }

    void rebuild_lookups() {
        ov_lookup.clear();
        s_index_by_id.clear();
        for (std::size_t i = 0; i < s_points.size(); ++i) {
            ov_lookup.emplace(s_points[i].ov, i);
            s_index_by_id.emplace(s_points[i].pt.id, i);
        }
    }
};

namespace detail {

template <class Scalar>
void dust(separation_state<Scalar>& state, point<Scalar>&& p, const char* reason) {
    state.seen_coords.insert(p.coords);
    state.note_id(p.id);
    state.dustbin.push_back({std::move(p), reason});
}

/// Move the constant of an existing plane so that probe is strictly off it
/// while every stored point keeps its side. This is the only repair open to
/// a plane whose defining midpoints are gone, and it leaves saturated
/// coefficients frozen.
template <class Scalar>
void nudge_plane_off_point(separation_state<Scalar>& state, std::size_t plane_index,
                           const point<Scalar>& probe) {
    hyperplane<Scalar>& plane = state.planes[plane_index];

    Scalar min_gap(0);
    bool any = false;
    auto visit = [&](const point<Scalar>& q) {
        const Scalar gap = abs_value(raw_value(q, plane));
        if (!any || gap < min_gap) {
            min_gap = gap;
            any = true;
        }
    };
    for (const auto& entry : state.s_points) visit(entry.pt);
    for (const auto& pair : state.pending) {
        visit(pair.first);
        if (pair.second) visit(*pair.second);
        if (pair.third) visit(*pair.third);
    }

    Scalar magnitude = abs_value(plane.constant);
    for (std::size_t i = 0; i < plane.coeffs.size(); ++i) {
        magnitude += abs_value(plane.coeffs[i] * probe.coords[i]);
    }
    const Scalar band =
        from_double<Scalar>(state.config.eps_rel) * (Scalar(1) + magnitude);

    const Scalar nudge = any ? min_gap / Scalar(2) : band * Scalar(4);
    if (any && !(nudge > band + band)) {
        throw degenerate_error("cannot move plane " + std::to_string(plane_index) +
                               " off point " + std::to_string(probe.id) +
                               " without disturbing stored sides");
    }
    const Scalar value = raw_value(probe, plane);
    plane.constant += (value < Scalar(0)) ? -nudge : nudge;
}

template <class Scalar>
orientation_vector ov_with_repair(separation_state<Scalar>& state,
                                  const point<Scalar>& p) {
    for (std::size_t attempt = 0;; ++attempt) {
        try {
            return compute_ov(p, state.planes, state.config.eps_rel);
        } catch (const incidence_error& e) {
            if (attempt >= state.config.repair_attempts) {
                throw degenerate_error(e.what());
            }
            nudge_plane_off_point(state, e.plane_index, p);
        }
    }
}

/// Core of Steps 3-4. Never flushes; the caller decides that. On
/// returned_to_g the argument is left untouched. reinserted skips the
/// duplicate and id bookkeeping for points the state already owns.
template <class Scalar>
insert_note insert_core(separation_state<Scalar>& state, point<Scalar>&& p,
                        bool reinserted) {
    if (p.dimension() != state.dimension) {
        throw usage_error("point " + std::to_string(p.id) + " has dimension " +
                          std::to_string(p.dimension()) + ", state is " +
                          std::to_string(state.dimension));
    }
    if (!reinserted) {
        if (state.used_ids.count(p.id)) {
            throw usage_error("point id " + std::to_string(p.id) + " already in use");
        }
        if (state.seen_coords.count(p.coords)) {
            dust(state, std::move(p), "duplicate");
            return {insert_kind::dust_binned};
        }
    }

    orientation_vector ov = ov_with_repair(state, p);

    const auto hit = state.ov_lookup.find(ov);
    if (hit == state.ov_lookup.end()) {
        state.seen_coords.insert(p.coords);
        state.note_id(p.id);
        state.ov_lookup.emplace(ov, state.s_points.size());
        state.s_index_by_id.emplace(p.id, state.s_points.size());
        state.s_points.push_back({std::move(p), std::move(ov)});
        ++state.fresh_since_flush;
        return {insert_kind::placed_in_s};
    }

    const s_entry<Scalar>& anchor = state.s_points[hit->second];
    const auto pair_it = state.pending_by_anchor.find(anchor.pt.id);
    pending_pair<Scalar>* pair = pair_it == state.pending_by_anchor.end()
                                     ? nullptr
                                     : &state.pending[pair_it->second];

    // Step 4 distance rule: Manhattan distance to the nearest existing
    // member of the quadrant.
    Scalar dist = manhattan_distance(p, anchor.pt);
    if (pair) {
        dist = std::min(dist, manhattan_distance(p, pair->first));
        if (pair->second) dist = std::min(dist, manhattan_distance(p, *pair->second));
        if (pair->third) dist = std::min(dist, manhattan_distance(p, *pair->third));
    }
    if (dist < from_double<Scalar>(state.config.delta_th)) {
        dust(state, std::move(p), "accumulation");
        return {insert_kind::dust_binned};
    }

    const std::int64_t anchor_id = anchor.pt.id;
    if (!pair) {
        state.seen_coords.insert(p.coords);
        state.note_id(p.id);
        pending_pair<Scalar> fresh;
        fresh.anchor_id = anchor_id;
        fresh.mid = midpoint(anchor.pt, p);
        fresh.first = std::move(p);
        state.pending_by_anchor.emplace(anchor_id, state.pending.size());
        state.pending.push_back(std::move(fresh));
        ++state.counter;
        return {insert_kind::paired_first, anchor_id};
    }
    if (!pair->second) {
        state.seen_coords.insert(p.coords);
        state.note_id(p.id);
        pair->second = std::move(p);
        return {insert_kind::paired_second, anchor_id};
    }
    if (!pair->third) {
        state.seen_coords.insert(p.coords);
        state.note_id(p.id);
        pair->third = std::move(p);
        return {insert_kind::paired_third, anchor_id};
    }
    return {insert_kind::returned_to_g, anchor_id};
}

template <class Scalar>
struct flush_candidate {
    std::vector<Scalar> coeffs;
    std::size_t randomized = 0;
    Scalar raw_residual = Scalar(0);
    double scaled_residual = 0.0;
};

/// Solve for a plane through the given midpoints, then repair until no point
/// of S or T sits inside the incidence band and every flushed pair is
/// strictly split. Repairs re-solve from midpoints shifted along the current
/// normal by 16 incidence bands, doubling per attempt.
template <class Scalar>
flush_candidate<Scalar> build_checked_plane(separation_state<Scalar>& state,
                                            std::vector<std::vector<Scalar>> rows,
                                            const std::vector<std::size_t>& flush_set,
                                            bool allow_frees, rng_engine& rng) {
    const std::size_t n = state.dimension;

    auto solve_rows = [&](const std::vector<std::vector<Scalar>>& r) {
        midpoint_matrix<Scalar> m{r, n};
        auto res = eliminate(m, Scalar(1),
                             allow_frees ? free_policy::randomize : free_policy::forbid,
                             &rng, state.config.rank_tol);
        if (!allow_frees && res.free_count > 0) throw rank_deficient_error(res.rank);
        if (!res.consistent) throw rank_deficient_error(res.rank);
        if (!(res.max_scaled_residual <=
              from_double<Scalar>(state.config.residual_tol))) {
            throw degenerate_error("flush plane residual above tolerance");
        }
        return res;
    };

    auto res = solve_rows(rows);

    double shift = 0.0;
    for (std::size_t attempt = 0;; ++attempt) {
        hyperplane<Scalar> candidate{state.tau(), res.coeffs, state.planes.size(),
                                     false};

        bool clean = true;
        auto check = [&](const point<Scalar>& q) {
            if (clean &&
                evaluate_side(q, candidate, state.config.eps_rel).sign == side_on_plane) {
                clean = false;
            }
        };
        for (const auto& entry : state.s_points) check(entry.pt);
        for (const auto& pair : state.pending) {
            check(pair.first);
            if (pair.second) check(*pair.second);
            if (pair.third) check(*pair.third);
        }
        if (clean) {
            for (std::size_t pi : flush_set) {
                const auto& pair = state.pending[pi];
                const auto& anchor =
                    state.s_points[state.s_index_by_id.at(pair.anchor_id)].pt;
                const int sa = evaluate_side(anchor, candidate, state.config.eps_rel).sign;
                const int sb =
                    evaluate_side(pair.first, candidate, state.config.eps_rel).sign;
                if (sa == sb) {
                    clean = false;
                    break;
                }
            }
        }
        if (clean) {
            return {std::move(res.coeffs), res.free_count, res.residual,
                    hypersep::to_double(res.max_scaled_residual)};
        }
        if (attempt >= state.config.repair_attempts) break;

        double norm_sq = 0.0;
        for (const Scalar& c : res.coeffs) {
            const double d = hypersep::to_double(c);
            norm_sq += d * d;
        }
        const double norm = std::sqrt(std::max(norm_sq, 1e-300));
        if (shift == 0.0) {
            // band width at the midpoints, converted to a coordinate-space step
            double scale = 0.0;
            for (const auto& row : rows) {
                double s = 1.0 + state.config.tau_value();
                for (std::size_t i = 0; i < n; ++i) {
                    s += std::abs(hypersep::to_double(res.coeffs[i]) *
                                  hypersep::to_double(row[i]));
                }
                scale = std::max(scale, s);
            }
            shift = 16.0 * state.config.eps_rel * scale / norm;
        } else {
            shift *= 2.0;
        }
        const double direction = (attempt % 2 == 0) ? 1.0 : -1.0;
        for (auto& row : rows) {
            for (std::size_t i = 0; i < n; ++i) {
                row[i] += from_double<Scalar>(
                    direction * shift * hypersep::to_double(res.coeffs[i]) / norm);
            }
        }
        res = solve_rows(rows);
    }
    throw degenerate_error("could not place flush plane off all points");
}

template <class Scalar>
void perturb_rows(std::vector<std::vector<Scalar>>& rows, double magnitude,
                  rng_engine& rng) {
    for (auto& row : rows) {
        for (auto& v : row) {
            v += from_double<Scalar>(random_signed_magnitude(rng, 0.5, 1.0) * magnitude);
        }
    }
}

/// Install the candidate plane: extend every OV, transfer the flushed first
/// neighbors into S, dissolve everything else back through insert_core so
/// promotions land as neighbors of whichever point now holds their quadrant.
/// Returns the new plane's index.
template <class Scalar>
std::size_t commit_flush(separation_state<Scalar>& state,
                         flush_candidate<Scalar>&& candidate,
                         const std::vector<std::size_t>& flush_set) {
    const std::size_t q = state.planes.size();
    hyperplane<Scalar> plane{state.tau(), std::move(candidate.coeffs), q, false};

    for (auto& entry : state.s_points) {
        entry.ov.push_sign(evaluate_side(entry.pt, plane, state.config.eps_rel).sign);
    }
    state.planes.push_back(std::move(plane));

    state.events.push_back({q, state.s_points.size() - state.fresh_since_flush,
                            state.fresh_since_flush, flush_set.size()});
    state.fresh_since_flush = 0;

    std::vector<bool> flushed(state.pending.size(), false);
    for (std::size_t pi : flush_set) {
        flushed[pi] = true;
        auto& pair = state.pending[pi];
        orientation_vector ov =
            state.s_points[state.s_index_by_id.at(pair.anchor_id)].ov;
        ov.flip_last();  // opposite side of the new plane from its anchor
        state.s_points.push_back({std::move(pair.first), std::move(ov)});
    }

    std::vector<point<Scalar>> reinsert;
    for (std::size_t pi = 0; pi < state.pending.size(); ++pi) {
        auto& pair = state.pending[pi];
        if (!flushed[pi]) reinsert.push_back(std::move(pair.first));
        if (pair.second) reinsert.push_back(std::move(*pair.second));
        if (pair.third) reinsert.push_back(std::move(*pair.third));
    }
    state.pending.clear();
    state.pending_by_anchor.clear();
    state.counter = 0;
    state.rebuild_lookups();
    ++state.flushes_done;
    state.max_scaled_residual =
        std::max(state.max_scaled_residual, candidate.scaled_residual);

    for (auto& p : reinsert) {
        insert_core(state, std::move(p), /*reinserted=*/true);
    }
    return q;
}

/// Steps 5-6 with the rank-deficiency policy: a square full-rank system is
/// solved exactly; a consistent deficient one waits for more pairs (up to
/// the pair cap, after which the remaining directions are randomized); an
/// inconsistent one falls back to the first n pairs, or to perturbed
/// midpoints when there is nothing to drop.
template <class Scalar>
std::optional<std::size_t> flush_once(separation_state<Scalar>& state, rng_engine& rng,
                                      bool force) {
    const std::size_t n = state.dimension;
    const std::size_t k = state.pending.size();
    const bool at_cap = k >= state.effective_pair_cap();

    std::vector<std::size_t> all(k);
    for (std::size_t i = 0; i < k; ++i) all[i] = i;
    std::vector<std::vector<Scalar>> rows;
    rows.reserve(k);
    for (const auto& pair : state.pending) rows.push_back(pair.mid);

    const bool allow_frees = force || at_cap || k < n;
    try {
        auto candidate = build_checked_plane(state, rows, all, allow_frees, rng);
        return commit_flush(state, std::move(candidate), all);
    } catch (const rank_deficient_error&) {
        if (!allow_frees) {
            // Deficient but consistent rows leave directions a later pair can
            // still pin down; only then is deferring useful.
            midpoint_matrix<Scalar> m{rows, n};
            auto probe = eliminate(m, Scalar(1), free_policy::randomize, &rng,
                                   state.config.rank_tol);
            if (probe.consistent) return std::nullopt;
        }
    }

    // Inconsistent constraints: no plane passes through every midpoint.
    if (k > n) {
        // Flush through the first n pairs; the rest dissolve and re-pair.
        std::vector<std::size_t> subset(n);
        for (std::size_t i = 0; i < n; ++i) subset[i] = i;
        std::vector<std::vector<Scalar>> sub_rows(rows.begin(), rows.begin() + n);
        for (std::size_t attempt = 0;; ++attempt) {
            try {
                auto candidate =
                    build_checked_plane(state, sub_rows, subset, attempt > 0, rng);
                return commit_flush(state, std::move(candidate), subset);
            } catch (const rank_deficient_error&) {
                if (attempt >= state.config.repair_attempts) {
                    throw degenerate_error(
                        "flush subset remained unsolvable after perturbation");
                }
                perturb_rows(sub_rows, state.config.delta_th / 64.0, rng);
            }
        }
    }
    std::vector<std::vector<Scalar>> shaken = std::move(rows);
    for (std::size_t attempt = 0; attempt < state.config.repair_attempts; ++attempt) {
        perturb_rows(shaken, state.config.delta_th / 64.0, rng);
        try {
            auto candidate = build_checked_plane(state, shaken, all, allow_frees, rng);
            return commit_flush(state, std::move(candidate), all);
        } catch (const rank_deficient_error&) {
        }
    }
    throw degenerate_error("midpoint constraints remained inconsistent");
}

/// Flush while the counter justifies it. Promotions can refill the counter,
/// so this loops rather than recursing.
template <class Scalar>
std::optional<std::size_t> maybe_flush(separation_state<Scalar>& state,
                                       rng_engine& rng) {
    std::optional<std::size_t> fired;
    while (state.counter >= state.dimension) {
        auto plane = flush_once(state, rng, /*force=*/false);
        if (!plane) break;  // deferred for more pairs
        if (!fired) fired = plane;
    }
    return fired;
}

}  // namespace detail

/// Step 1. Draws q0 = max(ceil(log2(n+1)), 2) saturated planes by randomized
/// trial, raising q0 as trials fail, until every seed point owns its own
/// quadrant. Normals are random directions; offsets are random quantiles of
/// the projected data, which keeps the splits balanced.
template <class Scalar>
separation_state<Scalar> bootstrap(const std::vector<point<Scalar>>& initial_points,
                                   const separation_config& config, rng_engine& rng) {
    if (initial_points.empty()) throw usage_error("bootstrap requires points");
    const std::size_t n = initial_points.front().dimension();
    if (n == 0) throw usage_error("bootstrap requires dimension >= 1");
    if (initial_points.size() <= n) {
        throw usage_error("bootstrap requires more than n points");
    }
    {
        std::unordered_set<std::int64_t> ids;
        for (const auto& p : initial_points) {
            if (p.dimension() != n) {
                throw usage_error("bootstrap points disagree on dimension");
            }
            if (!ids.insert(p.id).second) {
                throw usage_error("duplicate point id " + std::to_string(p.id));
            }
        }
    }

    const std::size_t q0_base = std::max<std::size_t>(
        static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n) + 1.0))),
        2);
    constexpr std::size_t max_trials = 64;
    constexpr std::size_t trials_per_level = 2;

    const double tau = config.tau_value();
    const std::size_t count = initial_points.size();

    for (std::size_t trial = 0; trial < max_trials; ++trial) {
        const std::size_t q0 = q0_base + trial / trials_per_level;
        std::vector<hyperplane<Scalar>> planes;
        planes.reserve(q0);
        bool drew_all = true;
        for (std::size_t q = 0; q < q0 && drew_all; ++q) {
            drew_all = false;
            for (std::size_t redraw = 0; redraw < 16; ++redraw) {
                std::vector<double> direction(n);
                double norm = 0.0;
                for (auto& d : direction) {
                    d = random_range(rng, -1.0, 1.0);
                    norm += d * d;
                }
                if (norm < 1e-12) continue;

                std::vector<double> projections(count);
                double max_abs = 0.0;
                for (std::size_t i = 0; i < count; ++i) {
                    double z = 0.0;
                    for (std::size_t c = 0; c < n; ++c) {
                        z += direction[c] *
                             hypersep::to_double(initial_points[i].coords[c]);
                    }
                    projections[i] = z;
                    max_abs = std::max(max_abs, std::abs(z));
                }
                std::sort(projections.begin(), projections.end());
                const double r = random_range(rng, 0.25, 0.75);
                const double pos = r * static_cast<double>(count - 1);
                const std::size_t lo = static_cast<std::size_t>(pos);
                const std::size_t hi = std::min(lo + 1, count - 1);
                const double frac = pos - static_cast<double>(lo);
                const double pivot =
                    projections[lo] + frac * (projections[hi] - projections[lo]);
                if (std::abs(pivot) <= std::max(1e-6 * max_abs, 1e-300)) continue;

                hyperplane<Scalar> plane;
                plane.constant = from_double<Scalar>(tau);
                plane.coeffs.resize(n);
                for (std::size_t c = 0; c < n; ++c) {
                    plane.coeffs[c] = from_double<Scalar>(-tau * direction[c] / pivot);
                }
                plane.index = q;
                plane.saturated = true;
                planes.push_back(std::move(plane));
                drew_all = true;
                break;
            }
        }
        if (!drew_all) continue;

        std::vector<orientation_vector> ovs;
        ovs.reserve(count);
        std::unordered_set<orientation_vector, ov_hash> distinct;
        bool ok = true;
        for (const auto& p : initial_points) {
            try {
                ovs.push_back(compute_ov(p, planes, config.eps_rel));
            } catch (const incidence_error&) {
                ok = false;
                break;
            }
            if (!distinct.insert(ovs.back()).second) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;

        separation_state<Scalar> state;
        state.dimension = n;
        state.planes = std::move(planes);
        state.config = config;
        for (std::size_t i = 0; i < count; ++i) {
            state.seen_coords.insert(initial_points[i].coords);
            state.note_id(initial_points[i].id);
            state.s_points.push_back({initial_points[i], std::move(ovs[i])});
        }
        state.rebuild_lookups();
        return state;
    }
    throw bootstrap_error(
        "no separating start found after 64 trials; seed points may be duplicated "
        "or degenerate");
}

/// Steps 3-4, plus the Step-5 trigger when the counter fills.
template <class Scalar>
insert_result<Scalar> insert_point(separation_state<Scalar>& state, point<Scalar> p,
                                   rng_engine& rng) {
    const detail::insert_note note = detail::insert_core(state, std::move(p), false);
    insert_result<Scalar> result{note.kind, note.anchor_id, 0, std::nullopt};
    if (note.kind == insert_kind::returned_to_g) {
        result.returned = std::move(p);
        return result;
    }
    if (note.kind == insert_kind::paired_first && state.counter >= state.dimension) {
        auto plane = detail::maybe_flush(state, rng);
        if (plane) {
            result.kind = insert_kind::triggered_flush;
            result.plane_index = *plane;
        }
    }
    return result;
}

/// One explicit Step-5/6 flush. The normal trigger is counter == n; with
/// fewer pairs this is the Step-7 shape and the missing directions are
/// randomized.
template <class Scalar>
hyperplane<Scalar> flush_plane(separation_state<Scalar>& state, rng_engine& rng) {
    if (state.counter == 0) throw usage_error("flush_plane with an empty T");
    auto plane = detail::flush_once(state, rng, state.counter < state.dimension);
    if (!plane) {
        plane = detail::flush_once(state, rng, /*force=*/true);
    }
    return state.planes[*plane];
}

/// Repair a plane that some point of S or T touches by moving its constant
/// (to tau first when enabled, since that substitution happens only after
/// the coefficients are fixed). Coefficients are never altered.
template <class Scalar>
hyperplane<Scalar> repair_incidence(separation_state<Scalar>& state,
                                    const hyperplane<Scalar>& plane) {
    auto incident = [&](const hyperplane<Scalar>& h) -> const point<Scalar>* {
        for (const auto& entry : state.s_points) {
            if (evaluate_side(entry.pt, h, state.config.eps_rel).sign == side_on_plane)
                return &entry.pt;
        }
        for (const auto& pair : state.pending) {
            if (evaluate_side(pair.first, h, state.config.eps_rel).sign == side_on_plane)
                return &pair.first;
            if (pair.second && evaluate_side(*pair.second, h, state.config.eps_rel).sign ==
                                   side_on_plane)
                return &*pair.second;
            if (pair.third && evaluate_side(*pair.third, h, state.config.eps_rel).sign ==
                                  side_on_plane)
                return &*pair.third;
        }
        return nullptr;
    };

    hyperplane<Scalar> repaired = plane;
    if (state.config.tau == tau_setting::pi_ratio && repaired.constant == Scalar(1)) {
        repaired.constant = state.tau();
    }
    Scalar step(0);
    for (std::size_t attempt = 0;; ++attempt) {
        const point<Scalar>* offender = incident(repaired);
        if (!offender) return repaired;
        if (attempt >= state.config.repair_attempts) break;

        Scalar magnitude = abs_value(repaired.constant);
        for (std::size_t i = 0; i < repaired.coeffs.size(); ++i) {
            magnitude += abs_value(repaired.coeffs[i] * offender->coords[i]);
        }
        const Scalar band =
            from_double<Scalar>(state.config.eps_rel) * (Scalar(1) + magnitude);
        step = (step == Scalar(0)) ? band * Scalar(16) : step + step;
        repaired.constant += (attempt % 2 == 0) ? step : -(step + step);
    }
    throw degenerate_error("incidence repair failed");
}

template <class Scalar>
void finalize(separation_state<Scalar>& state, rng_engine& rng);

/// Steps 2-7 over a batch of candidate points: a seeded draw order, the
/// returned-to-G parking rules, and the end game once G runs dry.
template <class Scalar>
separation_state<Scalar>& run(separation_state<Scalar>& state,
                              std::vector<point<Scalar>> g_points, rng_engine& rng) {
    for (const auto& p : g_points) {
        if (p.dimension() != state.dimension) {
            throw usage_error("point " + std::to_string(p.id) +
                              " does not match the state dimension; lift first");
        }
    }
    shuffle_in_place(g_points, rng);

    struct waiting {
        point<Scalar> pt;
        std::size_t retries = 0;
        std::size_t flushes_at_park = 0;
    };
    std::deque<waiting> queue;
    for (auto& p : g_points) queue.push_back({std::move(p), 0, 0});
    std::vector<waiting> lot;

    while (!queue.empty() || !lot.empty()) {
        if (queue.empty()) {
            // Wake anything that has seen a flush since it was parked.
            std::vector<waiting> still;
            bool woke = false;
            for (auto& item : lot) {
                if (item.flushes_at_park < state.flushes_done) {
                    queue.push_back(std::move(item));
                    woke = true;
                } else {
                    still.push_back(std::move(item));
                }
            }
            lot = std::move(still);
            if (woke) continue;

            // Nothing can wake without a new plane; flush what T holds so the
            // crowded quadrant splits, then re-present everyone.
            if (state.counter > 0) {
                detail::flush_once(state, rng, /*force=*/true);
            }
            for (auto& item : lot) queue.push_back(std::move(item));
            lot.clear();
            continue;
        }

        waiting item = std::move(queue.front());
        queue.pop_front();
        if (item.retries >= state.config.retry_cap) {
            detail::dust(state, std::move(item.pt), "over-crowded quadrant");
            continue;
        }
        auto outcome = insert_point(state, std::move(item.pt), rng);
        if (outcome.kind == insert_kind::returned_to_g) {
            lot.push_back({std::move(*outcome.returned), item.retries + 1,
                           state.flushes_done});
        }
    }

    finalize(state, rng);
    return state;
}

namespace detail {

/// Fabricate a point adjacent to an unpaired S member: same quadrant, at
/// least delta_th away. Returns nullopt when no quadrant has room.
template <class Scalar>
std::optional<point<Scalar>> make_synthetic_neighbor(separation_state<Scalar>& state,
                                                     rng_engine& rng) {
    const std::size_t n = state.dimension;
    for (std::size_t pick = 0; pick < 32; ++pick) {
        const std::size_t si =
            static_cast<std::size_t>(random_below(rng, state.s_points.size()));
        const auto& host = state.s_points[si];
        if (state.pending_by_anchor.count(host.pt.id)) continue;

        std::vector<double> direction(n);
        double l1 = 0.0;
        for (auto& d : direction) {
            d = random_range(rng, -1.0, 1.0);
            l1 += std::abs(d);
        }
        if (l1 < 1e-9) continue;

        for (int mag_step = 0; mag_step < 5; ++mag_step) {
            const double manhattan = 2.0 * state.config.delta_th * (1 << mag_step);
            point<Scalar> candidate;
            candidate.coords.resize(n);
            for (std::size_t c = 0; c < n; ++c) {
                candidate.coords[c] =
                    host.pt.coords[c] + from_double<Scalar>(direction[c] / l1 * manhattan);
            }
            if (state.seen_coords.count(candidate.coords)) continue;
            try {
                if (compute_ov(candidate, state.planes, state.config.eps_rel) == host.ov) {
                    candidate.id = state.fresh_id();
                    return candidate;
                }
            } catch (const incidence_error&) {
            }
        }
    }
    return std::nullopt;
}

}  // namespace detail

/// Step 7, or the synthetic end game: drain T completely. The synthetic
/// variant tops the counter up to n with fabricated neighbors so the final
/// plane is fully constrained; the default draws the remaining coefficients
/// at random.
template <class Scalar>
void finalize(separation_state<Scalar>& state, rng_engine& rng) {
    while (state.counter > 0) {
        if (state.config.endgame == endgame_setting::synthetic &&
            state.counter < state.dimension) {
            bool fabricated = true;
            while (state.counter < state.dimension) {
                auto synth = detail::make_synthetic_neighbor(state, rng);
                if (!synth) {
                    fabricated = false;
                    break;
                }
                state.synthetic_ids.insert(synth->id);
                insert_point(state, std::move(*synth), rng);
            }
            if (fabricated) continue;  // the top-up flush already ran
        }
        detail::flush_once(state, rng, /*force=*/true);
    }
}

/// Restart semantics: new points stream through the same Steps 2-7 against
/// the existing planes and orientation vectors.
template <class Scalar>
separation_state<Scalar>& append_points(separation_state<Scalar>& state,
                                        std::vector<point<Scalar>> new_points,
                                        rng_engine& rng) {
    return run(state, std::move(new_points), rng);
}

/// Embed the whole state in n + r dimensions. New coordinates and new plane
/// coefficients are zero, so every stored evaluation and every OV is
/// unchanged.
template <class Scalar>
void lift_dimension(separation_state<Scalar>& state, std::size_t r) {
    if (r == 0) throw usage_error("lift_dimension requires r >= 1");
    auto pad = [&](std::vector<Scalar>& v) { v.resize(v.size() + r, Scalar(0)); };

    for (auto& entry : state.s_points) pad(entry.pt.coords);
    for (auto& pair : state.pending) {
        pad(pair.first.coords);
        if (pair.second) pad(pair.second->coords);
        if (pair.third) pad(pair.third->coords);
        pad(pair.mid);
    }
    for (auto& entry : state.dustbin) pad(entry.pt.coords);
    for (auto& plane : state.planes) pad(plane.coeffs);
    state.dimension += r;

    state.seen_coords.clear();
    for (const auto& entry : state.s_points) state.seen_coords.insert(entry.pt.coords);
    for (const auto& pair : state.pending) {
        state.seen_coords.insert(pair.first.coords);
        if (pair.second) state.seen_coords.insert(pair.second->coords);
        if (pair.third) state.seen_coords.insert(pair.third->coords);
    }
    for (const auto& entry : state.dustbin) state.seen_coords.insert(entry.pt.coords);
}

}  // namespace hypersep
