#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hypersep/core.hpp"
#include "hypersep/engine.hpp"

namespace hypersep {

/// Brute-force verification results. The oracle recomputes every side from
/// raw coordinates and plane coefficients; it deliberately shares nothing
/// with the engine's cached orientation vectors.
struct separation_report {
    bool ok = false;
    std::optional<std::pair<std::int64_t, std::int64_t>> violating_pair;
    std::string reason;
    std::size_t pairs_checked = 0;
    // pairs counted once, by the first plane that separates them
    std::vector<std::size_t> planes_used_histogram;
};

namespace oracle_detail {

/// Independent signed-side: +1 / -1 / 0 within the relative band.
template <class Scalar>
int raw_side(const point<Scalar>& p, const hyperplane<Scalar>& plane, double eps_rel) {
    Scalar acc = plane.constant;
    Scalar magnitude = abs_value(plane.constant);
    for (std::size_t i = 0; i < plane.coeffs.size(); ++i) {
        const Scalar term = plane.coeffs[i] * p.coords[i];
        acc += term;
        magnitude += abs_value(term);
    }
    const Scalar band = from_double<Scalar>(eps_rel) * (Scalar(1) + magnitude);
    if (acc > band) return 1;
    if (acc < -band) return -1;
    return 0;
}

}  // namespace oracle_detail

/// Exhaustive O(N^2 q) pairwise check: every pair must have some plane with
/// strictly opposite signs. The first failure is reported, as is any point
/// found inside an incidence band.
template <class Scalar>
separation_report verify_all_separated(const std::vector<point<Scalar>>& points,
                                       const std::vector<hyperplane<Scalar>>& planes,
                                       double eps_rel = default_eps_rel) {
    separation_report report;
    report.planes_used_histogram.assign(planes.size(), 0);

    const std::size_t n_points = points.size();
    std::vector<int> sides(n_points * planes.size());
    for (std::size_t i = 0; i < n_points; ++i) {
        for (std::size_t j = 0; j < planes.size(); ++j) {
            const int s = oracle_detail::raw_side(points[i], planes[j], eps_rel);
            if (s == 0) {
                report.ok = false;
                report.violating_pair = {points[i].id, points[i].id};
                report.reason = "incident on plane " + std::to_string(j);
                return report;
            }
            sides[i * planes.size() + j] = s;
        }
    }

    for (std::size_t i = 0; i < n_points; ++i) {
        for (std::size_t k = i + 1; k < n_points; ++k) {
            ++report.pairs_checked;
            bool split = false;
            for (std::size_t j = 0; j < planes.size(); ++j) {
                if (sides[i * planes.size() + j] != sides[k * planes.size() + j]) {
                    ++report.planes_used_histogram[j];
                    split = true;
                    break;
                }
            }
            if (!split) {
                report.ok = false;
                report.violating_pair = {points[i].id, points[k].id};
                report.reason = "no separating plane";
                return report;
            }
        }
    }
    report.ok = true;
    return report;
}

/// True when no plane puts p and r on strictly opposite sides (and neither
/// point touches a plane).
template <class Scalar>
bool oracle_same_quadrant(const point<Scalar>& p, const point<Scalar>& r,
                          const std::vector<hyperplane<Scalar>>& planes,
                          double eps_rel = default_eps_rel) {
    for (const auto& plane : planes) {
        const int sp = oracle_detail::raw_side(p, plane, eps_rel);
        const int sr = oracle_detail::raw_side(r, plane, eps_rel);
        if (sp == 0 || sr == 0 || sp != sr) return false;
    }
    return true;
}

struct bit_ledger_row {
    std::size_t q_before = 0;
    std::size_t stage_points = 0;
    std::size_t fresh = 0;
    std::size_t moved = 0;
    std::size_t bits_before = 0;
    std::size_t acquired = 0;
    std::size_t bits_after = 0;
    bool ok = false;
};

struct bit_ledger {
    bool ok = false;
    std::string failure;
    std::size_t total_bits = 0;     // sum of stored OV lengths
    std::size_t expected_bits = 0;  // N * q
    std::size_t pending_points = 0; // T occupancy noted, S still audited
    std::vector<bit_ledger_row> rows;
};

/// Replay the engine's flush log and check the bit bookkeeping is exact:
/// every stage transition must satisfy old + (N + k) + moved * (q + 1) ==
/// (N + k + moved) * (q + 1), consecutive stages must chain, and the stored
/// total must equal N * q today. Zero tolerance.
template <class Scalar>
bit_ledger audit_bits(const separation_state<Scalar>& state) {
    bit_ledger ledger;
    ledger.pending_points = 0;
    for (const auto& pair : state.pending) {
        ledger.pending_points += 1 + (pair.second ? 1 : 0) + (pair.third ? 1 : 0);
    }

    std::size_t chained_points = 0;
    bool have_chain = false;
    for (std::size_t e = 0; e < state.events.size(); ++e) {
        const flush_event& ev = state.events[e];
        bit_ledger_row row;
        row.q_before = ev.q_before;
        row.stage_points = ev.stage_points;
        row.fresh = ev.fresh;
        row.moved = ev.moved;
        row.bits_before = (ev.stage_points + ev.fresh) * ev.q_before;
        row.acquired = (ev.stage_points + ev.fresh) + ev.moved * (ev.q_before + 1);
        row.bits_after = (ev.stage_points + ev.fresh + ev.moved) * (ev.q_before + 1);
        row.ok = row.bits_before + row.acquired == row.bits_after;
        if (have_chain && ev.stage_points != chained_points) {
            row.ok = false;
            ledger.failure = "stage " + std::to_string(e) +
                             " does not chain from the previous flush";
        } else if (!row.ok) {
            ledger.failure = "stage " + std::to_string(e) + " bit balance broken";
        }
        chained_points = ev.stage_points + ev.fresh + ev.moved;
        have_chain = true;
        ledger.rows.push_back(row);
        if (!row.ok) {
            ledger.ok = false;
            return ledger;
        }
    }

    if (have_chain &&
        chained_points + state.fresh_since_flush != state.s_points.size()) {
        ledger.ok = false;
        ledger.failure = "final population does not chain from the last flush";
        return ledger;
    }

    for (const auto& entry : state.s_points) {
        ledger.total_bits += entry.ov.size();
        if (entry.ov.size() != state.planes.size()) {
            ledger.ok = false;
            ledger.failure = "point " + std::to_string(entry.pt.id) +
                             " stores " + std::to_string(entry.ov.size()) +
                             " bits against " + std::to_string(state.planes.size()) +
                             " planes";
            return ledger;
        }
    }
    ledger.expected_bits = state.s_points.size() * state.planes.size();
    if (ledger.total_bits != ledger.expected_bits) {
        ledger.ok = false;
        ledger.failure = "stored bits differ from N * q";
        return ledger;
    }
    ledger.ok = true;
    return ledger;
}

/// Occupancy of each quadrant under the unit-step binarization. Every count
/// is 1 exactly when verify_all_separated says ok (boundary points land in
/// the zero bucket here, so this is a diagnostic, not the proof).
template <class Scalar>
std::map<std::string, std::size_t> quadrant_census(
    const std::vector<point<Scalar>>& points,
    const std::vector<hyperplane<Scalar>>& planes) {
    std::map<std::string, std::size_t> census;
    for (const auto& p : points) {
        std::string code;
        code.reserve(planes.size());
        for (const auto& plane : planes) {
            Scalar acc = plane.constant;
            for (std::size_t i = 0; i < plane.coeffs.size(); ++i) {
                acc += plane.coeffs[i] * p.coords[i];
            }
            code.push_back(acc > Scalar(0) ? '1' : '0');
        }
        ++census[code];
    }
    return census;
}

}  // namespace hypersep
