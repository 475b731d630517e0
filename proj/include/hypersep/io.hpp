#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hypersep/core.hpp"
#include "hypersep/engine.hpp"
#include "hypersep/retrieval.hpp"

namespace hypersep {

// ---------------------------------------------------------------------------
// points CSV: header "id,label,x1,...,xn"; blank labels allowed

struct points_file {
    std::size_t dimension = 0;
    std::vector<point<double>> points;
};

namespace io_detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string::npos) {
            fields.push_back(trim(std::string_view(line).substr(pos)));
            break;
        }
        fields.push_back(trim(std::string_view(line).substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return fields;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
    double v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw data_error("line " + std::to_string(line_no) + ": bad number '" + s + "'");
    }
    return v;
}

inline std::int64_t parse_id(const std::string& s, std::size_t line_no) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw data_error("line " + std::to_string(line_no) + ": bad id '" + s + "'");
    }
    return v;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace io_detail

inline points_file load_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open " + path);

    points_file out;
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) throw data_error(path + ": no points");
    ++line_no;
    auto header = io_detail::split_csv(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
        throw data_error("line 1: header must be id,label,x1,...,xn");
    }
    out.dimension = header.size() - 2;

    while (std::getline(in, line)) {
        ++line_no;
        if (io_detail::trim(line).empty()) continue;
        auto fields = io_detail::split_csv(line);
        if (fields.size() != header.size()) {
            throw data_error("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        }
        point<double> p;
        p.id = io_detail::parse_id(fields[0], line_no);
        p.label = fields[1];
        p.coords.reserve(out.dimension);
        for (std::size_t i = 2; i < fields.size(); ++i) {
            p.coords.push_back(io_detail::parse_double(fields[i], line_no));
        }
        out.points.push_back(std::move(p));
    }
    if (out.points.empty()) throw data_error(path + ": no points");
    return out;
}

inline void save_points_csv(const std::string& path,
                            const std::vector<point<double>>& points,
                            std::size_t dimension) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot open " + path + " for writing");
    out << "id,label";
    for (std::size_t i = 1; i <= dimension; ++i) out << ",x" << i;
    out << "\n";
    for (const auto& p : points) {
        out << p.id << ',' << p.label;
        for (double c : p.coords) out << ',' << io_detail::format_double(c);
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// state JSON. Emission is hand-rolled so numbers are always %.17g and the
// byte stream depends only on the state; parsing goes through nlohmann.

namespace io_detail {

inline void append_escaped(std::string& out, const std::string& s) {
    out.push_back('"');
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out.push_back(c);
                }
        }
    }
    out.push_back('"');
}

inline void append_coords(std::string& out, const std::vector<double>& coords) {
    out.push_back('[');
    for (std::size_t i = 0; i < coords.size(); ++i) {
        if (i) out.push_back(',');
        out += format_double(coords[i]);
    }
    out.push_back(']');
}

inline void append_point(std::string& out, const point<double>& p) {
    out += "{\"id\":" + std::to_string(p.id) + ",\"label\":";
    append_escaped(out, p.label);
    out += ",\"coords\":";
    append_coords(out, p.coords);
    out.push_back('}');
}

}  // namespace io_detail

inline const char* to_string(tau_setting t) {
    return t == tau_setting::pi_ratio ? "pi-ratio" : "off";
}
inline const char* to_string(endgame_setting e) {
    return e == endgame_setting::synthetic ? "synthetic" : "step7";
}

inline tau_setting tau_from_string(const std::string& s) {
    if (s == "off") return tau_setting::off;
    if (s == "pi-ratio") return tau_setting::pi_ratio;
    throw data_error("unknown tau mode '" + s + "'");
}
inline endgame_setting endgame_from_string(const std::string& s) {
    if (s == "step7") return endgame_setting::step7;
    if (s == "synthetic") return endgame_setting::synthetic;
    throw data_error("unknown endgame mode '" + s + "'");
}

inline std::string state_to_json(const separation_state<double>& state) {
    using io_detail::append_coords;
    using io_detail::append_escaped;
    using io_detail::append_point;
    using io_detail::format_double;

    std::string out;
    out.reserve(1024 + state.s_points.size() * 96);
    out += "{\"schema\":1";
    out += ",\"n\":" + std::to_string(state.dimension);
    out += ",\"tau\":" + format_double(state.config.tau_value());
    out += ",\"seed\":" + std::to_string(state.config.seed);

    out += ",\"config\":{";
    out += "\"delta_th\":" + format_double(state.config.delta_th);
    out += ",\"eps_rel\":" + format_double(state.config.eps_rel);
    out += ",\"residual_tol\":" + format_double(state.config.residual_tol);
    out += ",\"rank_tol\":" + format_double(state.config.rank_tol);
    out += ",\"tau_mode\":\"" + std::string(to_string(state.config.tau)) + "\"";
    out += ",\"endgame\":\"" + std::string(to_string(state.config.endgame)) + "\"";
    out += ",\"pair_cap\":" + std::to_string(state.config.pair_cap);
    out += ",\"retry_cap\":" + std::to_string(state.config.retry_cap);
    out += ",\"repair_attempts\":" + std::to_string(state.config.repair_attempts);
    out += "}";

    out += ",\"planes\":[";
    for (std::size_t j = 0; j < state.planes.size(); ++j) {
        if (j) out.push_back(',');
        out.push_back('[');
        out += format_double(state.planes[j].constant);
        for (double c : state.planes[j].coeffs) {
            out.push_back(',');
            out += format_double(c);
        }
        out.push_back(']');
    }
    out += "],\"saturated\":[";
    for (std::size_t j = 0; j < state.planes.size(); ++j) {
        if (j) out.push_back(',');
        out += state.planes[j].saturated ? "true" : "false";
    }
    out += "]";

    out += ",\"points\":[";
    for (std::size_t i = 0; i < state.s_points.size(); ++i) {
        const auto& entry = state.s_points[i];
        if (i) out.push_back(',');
        out += "{\"id\":" + std::to_string(entry.pt.id) + ",\"label\":";
        append_escaped(out, entry.pt.label);
        out += ",\"coords\":";
        append_coords(out, entry.pt.coords);
        out += ",\"code\":\"" + quadrant_code::from_ov(entry.ov).to_string() + "\"";
        if (state.synthetic_ids.count(entry.pt.id)) out += ",\"synthetic\":true";
        out.push_back('}');
    }
    out += "]";

    out += ",\"pending\":[";
    for (std::size_t i = 0; i < state.pending.size(); ++i) {
        const auto& pair = state.pending[i];
        if (i) out.push_back(',');
        out += "{\"anchor\":" + std::to_string(pair.anchor_id) + ",\"first\":";
        append_point(out, pair.first);
        if (pair.second) {
            out += ",\"second\":";
            append_point(out, *pair.second);
        }
        if (pair.third) {
            out += ",\"third\":";
            append_point(out, *pair.third);
        }
        out += ",\"mid\":";
        append_coords(out, pair.mid);
        out.push_back('}');
    }
    out += "],\"counter\":" + std::to_string(state.counter);

    out += ",\"dustbin\":[";
    for (std::size_t i = 0; i < state.dustbin.size(); ++i) {
        const auto& entry = state.dustbin[i];
        if (i) out.push_back(',');
        out += "{\"id\":" + std::to_string(entry.pt.id) + ",\"label\":";
        append_escaped(out, entry.pt.label);
        out += ",\"coords\":";
        append_coords(out, entry.pt.coords);
        out += ",\"reason\":";
        append_escaped(out, entry.reason);
        out.push_back('}');
    }
    out += "]";

    out += ",\"events\":[";
    for (std::size_t i = 0; i < state.events.size(); ++i) {
        const auto& ev = state.events[i];
        if (i) out.push_back(',');
        out += "{\"q\":" + std::to_string(ev.q_before);
        out += ",\"stage\":" + std::to_string(ev.stage_points);
        out += ",\"fresh\":" + std::to_string(ev.fresh);
        out += ",\"moved\":" + std::to_string(ev.moved) + "}";
    }
    out += "]";

    out += ",\"fresh_since_flush\":" + std::to_string(state.fresh_since_flush);
    out += ",\"flushes_done\":" + std::to_string(state.flushes_done);
    out += ",\"max_scaled_residual\":" + format_double(state.max_scaled_residual);
    out += "}\n";
    return out;
}

inline void save_state(const separation_state<double>& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot open " + path + " for writing");
    const std::string text = state_to_json(state);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw data_error("failed writing " + path);
}

namespace io_detail {

inline point<double> point_from_json(const nlohmann::json& j) {
    point<double> p;
    p.id = j.at("id").get<std::int64_t>();
    p.label = j.at("label").get<std::string>();
    p.coords = j.at("coords").get<std::vector<double>>();
    return p;
}

}  // namespace io_detail

inline separation_state<double> state_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("state file is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("schema").get<int>() != 1) throw data_error("unsupported schema");
        separation_state<double> state;
        state.dimension = j.at("n").get<std::size_t>();

        const auto& cfg = j.at("config");
        state.config.delta_th = cfg.at("delta_th").get<double>();
        state.config.eps_rel = cfg.at("eps_rel").get<double>();
        state.config.residual_tol = cfg.at("residual_tol").get<double>();
        state.config.rank_tol = cfg.at("rank_tol").get<double>();
        state.config.tau = tau_from_string(cfg.at("tau_mode").get<std::string>());
        state.config.endgame = endgame_from_string(cfg.at("endgame").get<std::string>());
        state.config.pair_cap = cfg.at("pair_cap").get<std::size_t>();
        state.config.retry_cap = cfg.at("retry_cap").get<std::size_t>();
        state.config.repair_attempts = cfg.at("repair_attempts").get<std::size_t>();
        state.config.seed = j.at("seed").get<std::uint64_t>();

        const auto& planes = j.at("planes");
        const auto& saturated = j.at("saturated");
        for (std::size_t q = 0; q < planes.size(); ++q) {
            const auto row = planes[q].get<std::vector<double>>();
            if (row.size() != state.dimension + 1) {
                throw data_error("plane " + std::to_string(q) + " has wrong arity");
            }
            hyperplane<double> plane;
            plane.constant = row[0];
            plane.coeffs.assign(row.begin() + 1, row.end());
            plane.index = q;
            plane.saturated = saturated.at(q).get<bool>();
            state.planes.push_back(std::move(plane));
        }

        for (const auto& jp : j.at("points")) {
            s_entry<double> entry;
            entry.pt = io_detail::point_from_json(jp);
            if (entry.pt.coords.size() != state.dimension) {
                throw data_error("point " + std::to_string(entry.pt.id) +
                                 " has wrong dimension");
            }
            const std::string code = jp.at("code").get<std::string>();
            if (code.size() != state.planes.size()) {
                throw data_error("point " + std::to_string(entry.pt.id) +
                                 " has a code of wrong length");
            }
            for (char c : code) {
                if (c != '0' && c != '1') throw data_error("bad code digit");
                entry.ov.push_sign(c == '1' ? side_positive : side_negative);
            }
            if (jp.value("synthetic", false)) state.synthetic_ids.insert(entry.pt.id);
            state.seen_coords.insert(entry.pt.coords);
            state.note_id(entry.pt.id);
            state.s_points.push_back(std::move(entry));
        }

        for (const auto& jp : j.at("pending")) {
            pending_pair<double> pair;
            pair.anchor_id = jp.at("anchor").get<std::int64_t>();
            pair.first = io_detail::point_from_json(jp.at("first"));
            if (jp.contains("second")) {
                pair.second = io_detail::point_from_json(jp.at("second"));
            }
            if (jp.contains("third")) {
                pair.third = io_detail::point_from_json(jp.at("third"));
            }
            pair.mid = jp.at("mid").get<std::vector<double>>();
            state.seen_coords.insert(pair.first.coords);
            state.note_id(pair.first.id);
            if (pair.second) {
                state.seen_coords.insert(pair.second->coords);
                state.note_id(pair.second->id);
            }
            if (pair.third) {
                state.seen_coords.insert(pair.third->coords);
                state.note_id(pair.third->id);
            }
            state.pending_by_anchor.emplace(pair.anchor_id, state.pending.size());
            state.pending.push_back(std::move(pair));
        }
        state.counter = j.at("counter").get<std::size_t>();

        for (const auto& jd : j.at("dustbin")) {
            dust_entry<double> entry;
            entry.pt = io_detail::point_from_json(jd);
            entry.reason = jd.at("reason").get<std::string>();
            state.seen_coords.insert(entry.pt.coords);
            state.note_id(entry.pt.id);
            state.dustbin.push_back(std::move(entry));
        }

        for (const auto& je : j.at("events")) {
            flush_event ev;
            ev.q_before = je.at("q").get<std::size_t>();
            ev.stage_points = je.at("stage").get<std::size_t>();
            ev.fresh = je.at("fresh").get<std::size_t>();
            ev.moved = je.at("moved").get<std::size_t>();
            state.events.push_back(ev);
        }

        state.fresh_since_flush = j.at("fresh_since_flush").get<std::size_t>();
        state.flushes_done = j.at("flushes_done").get<std::size_t>();
        state.max_scaled_residual = j.at("max_scaled_residual").get<double>();

        state.rebuild_lookups();
        if (state.counter != state.pending.size()) {
            throw data_error("counter does not match the pending pair count");
        }
        return state;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("malformed state file: ") + e.what());
    }
}

inline separation_state<double> load_state(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return state_from_json(buf.str());
}

}  // namespace hypersep
