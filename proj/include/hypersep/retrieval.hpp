#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hypersep/core.hpp"
#include "hypersep/engine.hpp"

namespace hypersep {

/// Unit step function: 1 for z > 0, 0 for z <= 0. The boundary maps to the
/// zero bucket, unlike core orientation bits which forbid it.
template <class Scalar>
inline int usf(const Scalar& z) {
    return z > Scalar(0) ? 1 : 0;
}

/// Binary quadrant key: bit j is Usf of the plane-j evaluation, packed with
/// plane 0 in the least significant position of word 0 (same convention as
/// orientation vectors, so a stored point's code is the binarization of its
/// stored OV).
class quadrant_code {
public:
    quadrant_code() = default;

    static quadrant_code from_ov(const orientation_vector& ov) {
        quadrant_code code;
        code.size_ = ov.size();
        code.words_.assign(ov.words().begin(), ov.words().end());
        return code;
    }

    std::size_t size() const { return size_; }

    void push_bit(int bit) {
        if ((size_ & 63u) == 0) words_.push_back(0);
        if (bit) words_.back() |= std::uint64_t(1) << (size_ & 63u);
        ++size_;
    }

    int bit(std::size_t j) const {
        return static_cast<int>((words_[j >> 6] >> (j & 63u)) & 1u);
    }

    const std::vector<std::uint64_t>& words() const { return words_; }

    /// Plane-0 bit first.
    std::string to_string() const {
        std::string s;
        s.reserve(size_);
        for (std::size_t j = 0; j < size_; ++j) s.push_back(bit(j) ? '1' : '0');
        return s;
    }

    static quadrant_code parse(const std::string& s) {
        quadrant_code code;
        for (char c : s) {
            if (c != '0' && c != '1') throw data_error("bad quadrant code string");
            code.push_bit(c == '1');
        }
        return code;
    }

    friend bool operator==(const quadrant_code& a, const quadrant_code& b) {
        return a.size_ == b.size_ && a.words_ == b.words_;
    }

    friend bool operator<(const quadrant_code& a, const quadrant_code& b) {
        if (a.size_ != b.size_) return a.size_ < b.size_;
        for (std::size_t w = a.words_.size(); w-- > 0;) {
            if (a.words_[w] != b.words_[w]) return a.words_[w] < b.words_[w];
        }
        return false;
    }

    std::size_t hash() const {
        std::uint64_t h = 0x84222325cbf29ce4ull ^ size_;
        for (std::uint64_t w : words_) {
            h ^= w;
            h *= 0x100000001b3ull;
        }
        return static_cast<std::size_t>(h);
    }

private:
    std::vector<std::uint64_t> words_;
    std::size_t size_ = 0;
};

struct quadrant_code_hash {
    std::size_t operator()(const quadrant_code& c) const { return c.hash(); }
};

/// Quadrant code of a point: q raw evaluations, q.n multiplications and
/// q.n additions in total, one Usf each.
template <class Scalar>
inline quadrant_code code_of(const point<Scalar>& p,
                             const std::vector<hyperplane<Scalar>>& planes) {
    quadrant_code code;
    for (const auto& plane : planes) {
        code.push_bit(usf(raw_value(p, plane)));
    }
    return code;
}

struct record {
    std::int64_t point_id = 0;
    std::string payload;
};

struct store_result {
    bool upserted = false;  // true when an existing (code, point_id) was replaced
};

/// The storage/retrieval receptacle: records keyed by exact quadrant code
/// against a snapshot of the plane list. Built once, then immutable and safe
/// for concurrent queries.
template <class Scalar>
class retrieval_index {
public:
    retrieval_index() = default;
    explicit retrieval_index(std::vector<hyperplane<Scalar>> planes)
        : planes_(std::move(planes)) {}

    std::size_t plane_count() const { return planes_.size(); }
    std::size_t dimension() const {
        return planes_.empty() ? 0 : planes_.front().dimension();
    }
    std::size_t record_count() const { return records_; }
    const std::vector<hyperplane<Scalar>>& planes() const { return planes_; }

    store_result store(const quadrant_code& code, record rec) {
        if (code.size() != planes_.size()) {
            throw usage_error("code length " + std::to_string(code.size()) +
                              " does not match index with " +
                              std::to_string(planes_.size()) + " planes");
        }
        auto& bucket = buckets_[code];
        for (auto& existing : bucket) {
            if (existing.point_id == rec.point_id) {
                existing.payload = std::move(rec.payload);
                return {true};
            }
        }
        bucket.push_back(std::move(rec));
        ++records_;
        return {false};
    }

    /// All records whose code equals code_of(probe); empty when the quadrant
    /// is unoccupied. Exact-match semantics, no ranking.
    std::vector<record> query(const point<Scalar>& probe) const {
        if (probe.dimension() != dimension()) {
            throw usage_error("probe dimension does not match index");
        }
        return query_code(code_of(probe, planes_));
    }

    std::vector<record> query_code(const quadrant_code& code) const {
        const auto it = buckets_.find(code);
        if (it == buckets_.end()) return {};
        return it->second;
    }

    /// Sorted (code, point_id, payload offset) table over a payload blob,
    /// after a header carrying the plane snapshot.
    void save(const std::string& path) const;
    static retrieval_index load(const std::string& path);

private:
    std::vector<hyperplane<Scalar>> planes_;
    std::unordered_map<quadrant_code, std::vector<record>, quadrant_code_hash> buckets_;
    std::size_t records_ = 0;
};

/// Materialize the receptacle from a solved state: one record per S point,
/// keyed by its code. payload_source maps a point to its opaque payload.
template <class Scalar, class PayloadSource>
retrieval_index<Scalar> build_index(const separation_state<Scalar>& state,
                                    PayloadSource&& payload_source) {
    if (!state.pending.empty() || state.counter != 0) {
        throw usage_error("build_index requires a finalized state (T empty)");
    }
    retrieval_index<Scalar> index(state.planes);
    for (const auto& entry : state.s_points) {
        index.store(quadrant_code::from_ov(entry.ov),
                    {entry.pt.id, payload_source(entry.pt)});
    }
    return index;
}

namespace detail {

inline constexpr std::uint32_t index_magic = 0x58495348;  // "HSIX"
inline constexpr std::uint32_t index_version = 1;

template <class T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw data_error("truncated index file");
    return v;
}

}  // namespace detail

template <class Scalar>
void retrieval_index<Scalar>::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot open " + path + " for writing");

    struct row {
        quadrant_code code;
        const record* rec;
    };
    std::vector<row> rows;
    rows.reserve(records_);
    for (const auto& [code, bucket] : buckets_) {
        for (const auto& rec : bucket) rows.push_back({code, &rec});
    }
    std::sort(rows.begin(), rows.end(), [](const row& a, const row& b) {
        if (!(a.code == b.code)) return a.code < b.code;
        return a.rec->point_id < b.rec->point_id;
    });

    const std::uint64_t q = planes_.size();
    const std::uint64_t n = dimension();
    detail::write_raw(out, detail::index_magic);
    detail::write_raw(out, detail::index_version);
    detail::write_raw(out, q);
    detail::write_raw(out, n);
    detail::write_raw(out, static_cast<std::uint64_t>(rows.size()));
    for (const auto& plane : planes_) {
        detail::write_raw(out, hypersep::to_double(plane.constant));
        for (const auto& c : plane.coeffs) {
            detail::write_raw(out, hypersep::to_double(c));
        }
    }

    const std::uint64_t word_count = (q + 63) / 64;
    std::uint64_t offset = 0;
    for (const auto& r : rows) {
        for (std::uint64_t w = 0; w < word_count; ++w) {
            detail::write_raw(out, w < r.code.words().size() ? r.code.words()[w]
                                                             : std::uint64_t(0));
        }
        detail::write_raw(out, r.rec->point_id);
        detail::write_raw(out, offset);
        detail::write_raw(out, static_cast<std::uint64_t>(r.rec->payload.size()));
        offset += r.rec->payload.size();
    }
    for (const auto& r : rows) {
        out.write(r.rec->payload.data(),
                  static_cast<std::streamsize>(r.rec->payload.size()));
    }
    if (!out) throw data_error("failed writing " + path);
}

template <class Scalar>
retrieval_index<Scalar> retrieval_index<Scalar>::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open " + path);
    if (detail::read_raw<std::uint32_t>(in) != detail::index_magic) {
        throw data_error(path + " is not an index file");
    }
    if (detail::read_raw<std::uint32_t>(in) != detail::index_version) {
        throw data_error("unsupported index version in " + path);
    }
    const std::uint64_t q = detail::read_raw<std::uint64_t>(in);
    const std::uint64_t n = detail::read_raw<std::uint64_t>(in);
    const std::uint64_t count = detail::read_raw<std::uint64_t>(in);

    std::vector<hyperplane<Scalar>> planes(q);
    for (std::uint64_t j = 0; j < q; ++j) {
        planes[j].constant = from_double<Scalar>(detail::read_raw<double>(in));
        planes[j].coeffs.resize(n);
        for (std::uint64_t c = 0; c < n; ++c) {
            planes[j].coeffs[c] = from_double<Scalar>(detail::read_raw<double>(in));
        }
        planes[j].index = j;
        planes[j].saturated = true;
    }

    const std::uint64_t word_count = (q + 63) / 64;
    struct table_row {
        quadrant_code code;
        std::int64_t point_id;
        std::uint64_t offset;
        std::uint64_t length;
    };
    std::vector<table_row> table(count);
    for (auto& r : table) {
        quadrant_code code;
        std::vector<std::uint64_t> words(word_count);
        for (auto& w : words) w = detail::read_raw<std::uint64_t>(in);
        for (std::uint64_t j = 0; j < q; ++j) {
            code.push_bit((words[j >> 6] >> (j & 63u)) & 1u);
        }
        r.code = std::move(code);
        r.point_id = detail::read_raw<std::int64_t>(in);
        r.offset = detail::read_raw<std::uint64_t>(in);
        r.length = detail::read_raw<std::uint64_t>(in);
    }

    retrieval_index index(std::move(planes));
    for (auto& r : table) {
        std::string payload(r.length, '\0');
        in.read(payload.data(), static_cast<std::streamsize>(r.length));
        if (!in) throw data_error("truncated payload blob in " + path);
        index.store(r.code, {r.point_id, std::move(payload)});
    }
    return index;
}

}  // namespace hypersep
