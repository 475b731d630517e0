#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "hypersep/core.hpp"
#include "hypersep/retrieval.hpp"

namespace hypersep {

/// A temporal record c(1)..c(s) of scalar (or m-dimensional block)
/// observations, encodable as zero-padded prefix points in horizon * block
/// dimensions. The chain of prefix points traces a world line in that space.
template <class Scalar>
struct world_line {
    std::int64_t id = 0;
    std::vector<Scalar> values;  // s blocks of block_dim scalars each
    std::size_t horizon = 0;     // maximum record length, in blocks
    std::size_t block_dim = 1;

    std::size_t length() const { return values.size() / block_dim; }
};

/// Point for the k-block prefix: (c(1)..c(k), 0, ..., 0) with horizon - k
/// zero blocks. Zero padding never moves the point relative to planes whose
/// trailing coefficients are zero, matching dimension lifts.
template <class Scalar>
point<Scalar> encode_prefix(const world_line<Scalar>& seq, std::size_t k) {
    const std::size_t s = seq.length();
    if (seq.block_dim == 0 || seq.values.size() % seq.block_dim != 0) {
        throw usage_error("world line values do not fill whole blocks");
    }
    if (s > seq.horizon) throw usage_error("world line longer than its horizon");
    if (k < 1 || k > s) {
        throw usage_error("prefix length " + std::to_string(k) +
                          " outside 1.." + std::to_string(s));
    }
    point<Scalar> p;
    p.coords.assign(seq.horizon * seq.block_dim, Scalar(0));
    for (std::size_t i = 0; i < k * seq.block_dim; ++i) {
        p.coords[i] = seq.values[i];
    }
    return p;
}

/// All s prefix points of the record, ids first_id, first_id + 1, ...
template <class Scalar>
std::vector<point<Scalar>> encode_all(const world_line<Scalar>& seq,
                                      std::int64_t first_id) {
    const std::size_t s = seq.length();
    if (s < 1) throw usage_error("cannot encode an empty world line");
    std::vector<point<Scalar>> points;
    points.reserve(s);
    for (std::size_t k = 1; k <= s; ++k) {
        points.push_back(encode_prefix(seq, k));
        points.back().id = first_id + static_cast<std::int64_t>(k) - 1;
    }
    return points;
}

/// Payload format for prefix records: "seq id | prefix k | full sequence".
/// Values are serialized with 17 significant digits for exact round-trips.
template <class Scalar>
std::string encode_sequence_payload(const world_line<Scalar>& seq, std::size_t k) {
    std::string out = std::to_string(seq.id) + "|" + std::to_string(k) + "|" +
                      std::to_string(seq.block_dim) + "|";
    char buf[64];
    for (std::size_t i = 0; i < seq.values.size(); ++i) {
        if (i) out.push_back(',');
        std::snprintf(buf, sizeof buf, "%.17g", hypersep::to_double(seq.values[i]));
        out += buf;
    }
    return out;
}

template <class Scalar>
world_line<Scalar> decode_sequence_payload(const std::string& payload,
                                           std::size_t horizon,
                                           std::size_t* prefix_k = nullptr) {
    world_line<Scalar> seq;
    seq.horizon = horizon;
    std::size_t pos = 0;
    auto next_field = [&]() {
        const std::size_t bar = payload.find('|', pos);
        if (bar == std::string::npos) throw data_error("malformed sequence payload");
        const std::string field = payload.substr(pos, bar - pos);
        pos = bar + 1;
        return field;
    };
    seq.id = std::stoll(next_field());
    const std::size_t k = static_cast<std::size_t>(std::stoull(next_field()));
    if (prefix_k) *prefix_k = k;
    seq.block_dim = static_cast<std::size_t>(std::stoull(next_field()));
    while (pos < payload.size()) {
        std::size_t comma = payload.find(',', pos);
        if (comma == std::string::npos) comma = payload.size();
        seq.values.push_back(
            from_double<Scalar>(std::strtod(payload.c_str() + pos, nullptr)));
        pos = comma + 1;
    }
    return seq;
}

template <class Scalar>
struct sequence_match {
    std::int64_t point_id = 0;      // the matched prefix point
    world_line<Scalar> history;     // the full stored sequence
    std::vector<Scalar> tail;       // h(s+1 .. end)
};

/// Present the live prefix of length s to the retrieval engine and return,
/// for every history sharing its quadrant, the full record and the part
/// beyond s. Matching is quadrant-exact; an unoccupied quadrant is an empty
/// result, not an error.
template <class Scalar>
std::vector<sequence_match<Scalar>> predict_continuation(
    const retrieval_index<Scalar>& index, const world_line<Scalar>& live,
    std::size_t s) {
    point<Scalar> probe = encode_prefix(live, s);
    std::vector<sequence_match<Scalar>> matches;
    for (const auto& rec : index.query(probe)) {
        sequence_match<Scalar> match;
        match.point_id = rec.point_id;
        match.history = decode_sequence_payload<Scalar>(rec.payload, live.horizon);
        const std::size_t cut = s * match.history.block_dim;
        if (cut < match.history.values.size()) {
            match.tail.assign(match.history.values.begin() +
                                  static_cast<std::ptrdiff_t>(cut),
                              match.history.values.end());
        }
        matches.push_back(std::move(match));
    }
    return matches;
}

}  // namespace hypersep
