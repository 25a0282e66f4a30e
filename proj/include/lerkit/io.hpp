#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lerkit/constants.hpp"
#include "lerkit/errors.hpp"
#include "lerkit/types.hpp"

namespace lerkit {

// ---------------------------------------------------------------------------
// Canonical JSON emitter. Reports must re-serialize byte-stably, so objects
// keep insertion order and every double is printed with %.12g.
// ---------------------------------------------------------------------------

class Json {
public:
    using Object = std::vector<std::pair<std::string, Json>>;
    using Array = std::vector<Json>;

    Json() : value_(nullptr) {}
    static Json object() { Json j; j.value_ = Object{}; return j; }
    static Json array() { Json j; j.value_ = Array{}; return j; }
    Json(double v) : value_(v) {}
    Json(int v) : value_(static_cast<std::int64_t>(v)) {}
    Json(std::int64_t v) : value_(v) {}
    Json(std::uint64_t v) : value_(static_cast<std::int64_t>(v)) {}
    Json(bool v) : value_(v) {}
    Json(const char* v) : value_(std::string(v)) {}
    Json(std::string v) : value_(std::move(v)) {}

    Json& set(const std::string& key, Json v) {
        std::get<Object>(value_).emplace_back(key, std::move(v));
        return *this;
    }
    Json& push(Json v) {
        std::get<Array>(value_).push_back(std::move(v));
        return *this;
    }
    bool is_object() const { return std::holds_alternative<Object>(value_); }

    std::string dump(int indent = 2) const {
        std::string out;
        write(out, indent, 0);
        out.push_back('\n');
        return out;
    }

private:
    std::variant<std::nullptr_t, bool, std::int64_t, double, std::string, Object, Array> value_;

    static std::string fmt_double(double v) {
        if (!std::isfinite(v)) return "null";
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return buf;
    }

    static void escape(std::string& out, const std::string& s) {
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
                        std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                        out += buf;
                    } else {
                        out.push_back(c);
                    }
            }
        }
        out.push_back('"');
    }

    void write(std::string& out, int indent, int depth) const {
        const std::string pad(static_cast<std::size_t>(indent) * depth, ' ');
        const std::string pad1(static_cast<std::size_t>(indent) * (depth + 1), ' ');
        if (std::holds_alternative<std::nullptr_t>(value_)) {
            out += "null";
        } else if (auto* b = std::get_if<bool>(&value_)) {
            out += *b ? "true" : "false";
        } else if (auto* i = std::get_if<std::int64_t>(&value_)) {
            out += std::to_string(*i);
        } else if (auto* d = std::get_if<double>(&value_)) {
            out += fmt_double(*d);
        } else if (auto* s = std::get_if<std::string>(&value_)) {
            escape(out, *s);
        } else if (auto* o = std::get_if<Object>(&value_)) {
            if (o->empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            for (std::size_t k = 0; k < o->size(); ++k) {
                out += pad1;
                escape(out, (*o)[k].first);
                out += ": ";
                (*o)[k].second.write(out, indent, depth + 1);
                if (k + 1 < o->size()) out.push_back(',');
                out.push_back('\n');
            }
            out += pad + "}";
        } else if (auto* a = std::get_if<Array>(&value_)) {
            if (a->empty()) {
                out += "[]";
                return;
            }
            out += "[\n";
            for (std::size_t k = 0; k < a->size(); ++k) {
                out += pad1;
                (*a)[k].write(out, indent, depth + 1);
                if (k + 1 < a->size()) out.push_back(',');
                out.push_back('\n');
            }
            out += pad + "]";
        }
    }
};

// value/sigma/unit triple used throughout report fragments
inline Json quantity(double value, double sigma, const std::string& unit) {
    Json q = Json::object();
    q.set("value", value);
    q.set("sigma", sigma);
    q.set("unit", unit);
    return q;
}

inline Json quantity(double value, const std::string& unit) {
    Json q = Json::object();
    q.set("value", value);
    q.set("unit", unit);
    return q;
}

// ---------------------------------------------------------------------------
// FNV-1a 64-bit file hash recorded in report provenance.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string file_hash_hex(const std::string& path) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(read_file(path))));
    return buf;
}

// ---------------------------------------------------------------------------
// Trace CSV: header "freq_hz,s21_re,s21_im", UTF-8, LF or CRLF.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string strip(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline double parse_number(const std::string& tok, std::size_t line) {
    const std::string t = strip(tok);
    if (t.empty()) throw parse_error("empty numeric field", line);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size()) throw parse_error("malformed number '" + t + "'", line);
    if (!std::isfinite(v)) throw parse_error("non-finite value '" + t + "'", line);
    return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace detail

inline ComplexTrace read_trace_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open " + path);
    std::string line;
    std::size_t lineno = 0;

    if (!std::getline(in, line)) throw parse_error("empty file " + path, 1);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
        auto cols = detail::split(line, ',');
        if (cols.size() != 3 || detail::strip(cols[0]) != "freq_hz" ||
            detail::strip(cols[1]) != "s21_re" || detail::strip(cols[2]) != "s21_im")
            throw parse_error("expected header 'freq_hz,s21_re,s21_im'", 1);
    }

    ComplexTrace tr;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::strip(line).empty()) continue;
        auto cols = detail::split(line, ',');
        if (cols.size() != 3) throw parse_error("expected 3 columns", lineno);
        const double f = detail::parse_number(cols[0], lineno);
        const double re = detail::parse_number(cols[1], lineno);
        const double im = detail::parse_number(cols[2], lineno);
        if (!tr.freqs.empty() && f <= tr.freqs.back())
            throw parse_error("non-monotonic frequency", lineno);
        tr.freqs.push_back(f);
        tr.s21.emplace_back(re, im);
    }
    if (tr.freqs.empty()) throw parse_error("no data rows in " + path, lineno);
    return tr;
}

inline void write_trace_csv(const std::string& path, const ComplexTrace& tr) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw parse_error("cannot write " + path);
    out << "freq_hz,s21_re,s21_im\n";
    char buf[128];
    for (std::size_t i = 0; i < tr.freqs.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", tr.freqs[i], tr.s21[i].real(),
                      tr.s21[i].imag());
        out << buf;
    }
}

// ---------------------------------------------------------------------------
// Two-port Touchstone: option line sets unit and format, S21 is extracted
// from the 9-column data lines.
// ---------------------------------------------------------------------------

inline ComplexTrace read_touchstone_s2p(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open " + path);

    double unit_scale = 1e9;  // touchstone default GHz
    enum class Fmt { ri, ma, db } fmt = Fmt::ma;
    bool have_option = false;

    ComplexTrace tr;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string s = detail::strip(line);
        if (s.empty() || s[0] == '!') continue;
        if (s[0] == '#') {
            std::istringstream os(s.substr(1));
            std::string tok;
            while (os >> tok) {
                std::string u;
                for (char c : tok) u.push_back(std::toupper(static_cast<unsigned char>(c)));
                if (u == "HZ") unit_scale = 1.0;
                else if (u == "KHZ") unit_scale = 1e3;
                else if (u == "MHZ") unit_scale = 1e6;
                else if (u == "GHZ") unit_scale = 1e9;
                else if (u == "RI") fmt = Fmt::ri;
                else if (u == "MA") fmt = Fmt::ma;
                else if (u == "DB") fmt = Fmt::db;
                else if (u == "S" || u == "R") continue;
                else if (!u.empty() && (std::isdigit(static_cast<unsigned char>(u[0])) || u[0] == '.'))
                    continue;  // reference resistance value
                else
                    throw parse_error("unsupported option token '" + tok + "'", lineno);
            }
            have_option = true;
            continue;
        }
        std::istringstream ds(s);
        std::vector<double> cols;
        double v;
        while (ds >> v) cols.push_back(v);
        if (cols.size() != 9)
            throw parse_error("expected 9 columns of two-port data", lineno);
        const double f = cols[0] * unit_scale;
        if (!std::isfinite(f)) throw parse_error("non-finite frequency", lineno);
        if (!tr.freqs.empty() && f <= tr.freqs.back())
            throw parse_error("non-monotonic frequency", lineno);
        const double a = cols[3], b = cols[4];  // S21 pair
        cplx z;
        switch (fmt) {
            case Fmt::ri: z = cplx(a, b); break;
            case Fmt::ma: z = std::polar(a, b * pi / 180.0); break;
            case Fmt::db: z = std::polar(std::pow(10.0, a / 20.0), b * pi / 180.0); break;
        }
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw parse_error("non-finite S21 value", lineno);
        tr.freqs.push_back(f);
        tr.s21.push_back(z);
    }
    if (!have_option) throw parse_error("missing '#' option line in " + path);
    if (tr.freqs.empty()) throw parse_error("no data rows in " + path);
    return tr;
}

// ---------------------------------------------------------------------------
// Flat TOML-style config: `key = value` lines, '#' comments, quoted strings.
// ---------------------------------------------------------------------------

class Config {
public:
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback = "") const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }
    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return detail::parse_number(it->second, 0);
    }
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        return static_cast<std::int64_t>(get_double(key, static_cast<double>(fallback)));
    }
    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return it->second == "true" || it->second == "1" || it->second == "yes";
    }
    const std::map<std::string, std::string>& values() const { return values_; }

    static Config parse_text(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            std::string s = detail::strip(line);
            if (s.empty() || s[0] == '#' || s[0] == ';' || s[0] == '[') continue;
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw parse_error("expected 'key = value'", lineno);
            std::string key = detail::strip(s.substr(0, eq));
            std::string val = detail::strip(s.substr(eq + 1));
            if (const auto hash = val.find(" #"); hash != std::string::npos)
                val = detail::strip(val.substr(0, hash));
            if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
                val = val.substr(1, val.size() - 2);
            if (key.empty()) throw parse_error("empty key", lineno);
            cfg.values_[key] = val;
        }
        return cfg;
    }

    static Config parse_file(const std::string& path) { return parse_text(read_file(path)); }

private:
    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Sweep manifest (JSON): trace references plus per-design chip metadata.
// ---------------------------------------------------------------------------

struct TraceRef {
    std::string path;
    std::string label;
    std::string material;
    std::optional<double> temperature_K;
    std::optional<double> source_power_dBm;
    double attenuation_dB = 0.0;
    std::string kind = "single";  // "single" | "chip"
    std::string sweep_dir = "up";
};

struct DesignMeta {
    std::string label;
    std::string material;
    double l_g = 0.0;    // H/sq (manifest stores pH/sq)
    double f_sim = 0.0;  // Hz
};

struct SweepManifest {
    std::string dataset_id;
    std::uint64_t seed = 0;
    std::string rng;
    double attenuation_dB = 0.0;
    std::vector<TraceRef> traces;
    std::vector<DesignMeta> designs;
    std::filesystem::path base_dir;  // directory of the manifest file

    std::filesystem::path resolve(const TraceRef& t) const { return base_dir / t.path; }
};

inline SweepManifest read_manifest(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("manifest: ") + e.what());
    }
    SweepManifest m;
    m.base_dir = std::filesystem::path(path).parent_path();
    try {
        m.dataset_id = j.value("dataset", "");
        m.seed = j.value("seed", std::uint64_t{0});
        m.rng = j.value("rng", "");
        m.attenuation_dB = j.value("attenuation_dB", 0.0);
        for (const auto& t : j.value("traces", nlohmann::json::array())) {
            TraceRef r;
            r.path = t.at("path").get<std::string>();
            r.label = t.value("label", "");
            r.material = t.value("material", "");
            if (t.contains("temperature_K")) r.temperature_K = t["temperature_K"].get<double>();
            if (t.contains("source_power_dBm"))
                r.source_power_dBm = t["source_power_dBm"].get<double>();
            r.attenuation_dB = t.value("attenuation_dB", m.attenuation_dB);
            if (r.attenuation_dB < 0.0)
                throw parse_error("manifest: attenuation must be nonnegative");
            r.kind = t.value("kind", "single");
            r.sweep_dir = t.value("sweep_dir", "up");
            m.traces.push_back(std::move(r));
        }
        for (const auto& d : j.value("designs", nlohmann::json::array())) {
            DesignMeta dm;
            dm.label = d.at("label").get<std::string>();
            dm.material = d.value("material", "");
            dm.l_g = d.value("l_g_pH", 0.0) * 1e-12;  // pH/sq -> H/sq
            dm.f_sim = d.value("f_sim_hz", 0.0);
            m.designs.push_back(std::move(dm));
        }
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("manifest: ") + e.what());
    }
    return m;
}

// Trace ingestion with manifest metadata: chip power = source - attenuation.
inline ComplexTrace ingest_trace(const std::string& path) {
    const auto ext = std::filesystem::path(path).extension().string();
    ComplexTrace tr;
    if (ext == ".s2p" || ext == ".ts")
        tr = read_touchstone_s2p(path);
    else
        tr = read_trace_csv(path);
    tr.validate(2);
    return tr;
}

inline ComplexTrace ingest_trace(const SweepManifest& m, const TraceRef& ref) {
    ComplexTrace tr = ingest_trace(m.resolve(ref).string());
    tr.label = ref.label;
    tr.temperature_K = ref.temperature_K;
    if (ref.source_power_dBm) tr.power_dBm = *ref.source_power_dBm - ref.attenuation_dB;
    return tr;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw parse_error("cannot write " + path);
    out << text;
}

} // namespace lerkit
