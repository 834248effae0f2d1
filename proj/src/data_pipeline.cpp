#include "pineapple/data_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "pineapple/errors.hpp"

namespace pineapple {

namespace fs = std::filesystem;

std::string_view to_string(StepKind k) {
    switch (k) {
        case StepKind::ChargeCc: return "charge_cc";
        case StepKind::ChargeCv: return "charge_cv";
        case StepKind::Discharge: return "discharge";
        case StepKind::Rest: return "rest";
        case StepKind::Other: return "other";
    }
    return "other";
}

namespace {

const std::vector<std::string> kColumns{"cycle", "step", "time_s", "voltage_V", "current_A"};
const std::set<std::string> kRequired{"cycle", "time_s", "voltage_V", "current_A"};

std::optional<StepKind> step_from_canonical(const std::string& s) {
    if (s == "charge_cc") return StepKind::ChargeCc;
    if (s == "charge_cv") return StepKind::ChargeCv;
    if (s == "discharge") return StepKind::Discharge;
    if (s == "rest") return StepKind::Rest;
    if (s == "other") return StepKind::Other;
    return std::nullopt;
}

std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    std::string out(s.substr(a, b - a));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
            cur += ch;
        } else if (ch == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [p, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && p == last;
}

bool parse_int(const std::string& s, int& out) {
    double d;
    if (!parse_double(s, d) || !std::isfinite(d) || d != std::floor(d)) return false;
    out = static_cast<int>(d);
    return true;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------

SchemaConfig SchemaConfig::defaults() {
    SchemaConfig s;
    for (const auto& c : kColumns) s.aliases[c] = {c};
    s.aliases["cycle"].push_back("Cycle_Index");
    s.aliases["step"].push_back("Step_Index");
    s.aliases["time_s"].push_back("Test_Time(s)");
    s.aliases["voltage_V"].push_back("Voltage(V)");
    s.aliases["current_A"].push_back("Current(A)");
    for (const char* k : {"charge_cc", "charge_cv", "discharge", "rest", "other"}) s.step_labels[k] = k;
    return s;
}

SchemaConfig SchemaConfig::from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{"battery_id", "aliases", "step_labels", "current_sign", "max_reject_fraction"};
    for (const auto& [k, _] : j.items())
        if (!known.count(k)) throw ConfigError("unknown schema key '" + k + "'");
    SchemaConfig s = defaults();
    try {
        s.battery_id = j.value("battery_id", s.battery_id);
        if (j.contains("aliases")) {
            for (const auto& [k, v] : j.at("aliases").items()) {
                if (std::find(kColumns.begin(), kColumns.end(), k) == kColumns.end())
                    throw ConfigError("schema.aliases: unknown column '" + k + "'");
                auto names = v.get<std::vector<std::string>>();
                auto& dst = s.aliases[k];
                for (auto& n : names)
                    if (std::find(dst.begin(), dst.end(), n) == dst.end()) dst.push_back(n);
            }
        }
        if (j.contains("step_labels")) {
            for (const auto& [k, v] : j.at("step_labels").items()) {
                const std::string canon = v.get<std::string>();
                if (!step_from_canonical(canon)) throw ConfigError("schema.step_labels: unknown step kind '" + canon + "'");
                s.step_labels[k] = canon;
            }
        }
        s.current_sign = j.value("current_sign", s.current_sign);
        s.max_reject_fraction = j.value("max_reject_fraction", s.max_reject_fraction);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("schema: ") + e.what());
    }
    if (s.current_sign != 1.0 && s.current_sign != -1.0) throw ConfigError("schema.current_sign must be 1 or -1");
    if (!(s.max_reject_fraction >= 0.0 && s.max_reject_fraction <= 1.0))
        throw ConfigError("schema.max_reject_fraction must lie in [0, 1]");
    return s;
}

nlohmann::json SchemaConfig::to_json() const {
    return {{"battery_id", battery_id},
            {"aliases", aliases},
            {"step_labels", step_labels},
            {"current_sign", current_sign},
            {"max_reject_fraction", max_reject_fraction}};
}

std::vector<int> IngestResult::cycles() const {
    std::vector<int> out;
    std::set<int> seen;
    for (const auto& r : rows)
        if (seen.insert(r.cycle).second) out.push_back(r.cycle);
    return out;
}

void IngestResult::write_rejects_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << "line,reason\n";
    for (const auto& r : rejects) out << r.line << ",\"" << r.reason << "\"\n";
}

IngestResult ingest_csv(std::istream& in, const SchemaConfig& schema, const std::string& source) {
    IngestResult res;
    res.battery_id = schema.battery_id;
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(source + ": missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv(line);

    std::map<std::string, int> col;
    for (const auto& [canon, names] : schema.aliases) {
        for (std::size_t i = 0; i < header.size() && !col.count(canon); ++i)
            for (const auto& n : names)
                if (header[i] == n) col[canon] = static_cast<int>(i);
    }
    for (const auto& req : kRequired)
        if (!col.count(req)) throw SchemaError(source + ": required column '" + req + "' not found");

    std::map<int, double> last_time;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        ++res.data_lines;
        const auto f = split_csv(line);
        auto reject = [&](std::string why) { res.rejects.push_back({lineno, std::move(why)}); };
        auto field = [&](const std::string& c) -> std::string {
            const int i = col.at(c);
            return i < static_cast<int>(f.size()) ? f[i] : std::string();
        };
        if (f.size() < header.size()) {
            reject("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
            continue;
        }
        CyclingRecordRow row;
        if (!parse_int(field("cycle"), row.cycle)) {
            reject("cycle is not an integer");
            continue;
        }
        if (!parse_double(field("time_s"), row.time_s) || !std::isfinite(row.time_s) || row.time_s < 0.0) {
            reject("time_s is not a non-negative number");
            continue;
        }
        if (!parse_double(field("voltage_V"), row.voltage_v) || !std::isfinite(row.voltage_v)) {
            reject("voltage_V is not finite");
            continue;
        }
        if (!parse_double(field("current_A"), row.current_a) || !std::isfinite(row.current_a)) {
            reject("current_A is not finite");
            continue;
        }
        row.current_a *= schema.current_sign;
        if (row.current_a == 0.0) row.current_a = 0.0;
        if (col.count("step")) {
            const std::string raw = field("step");
            auto it = schema.step_labels.find(raw);
            if (it == schema.step_labels.end()) it = schema.step_labels.find(lower(raw));
            row.step = it == schema.step_labels.end() ? StepKind::Other : *step_from_canonical(it->second);
        }
        auto lt = last_time.find(row.cycle);
        if (lt != last_time.end() && row.time_s < lt->second) {
            reject("time_s decreases within cycle " + std::to_string(row.cycle));
            continue;
        }
        last_time[row.cycle] = row.time_s;
        res.rows.push_back(row);
    }
    if (res.data_lines > 0 &&
        static_cast<double>(res.rejects.size()) > schema.max_reject_fraction * static_cast<double>(res.data_lines)) {
        throw IngestionError(source + ": " + std::to_string(res.rejects.size()) + " of " +
                             std::to_string(res.data_lines) + " rows rejected");
    }
    return res;
}

IngestResult ingest_csv(const std::string& path, const SchemaConfig& schema) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open " + path);
    return ingest_csv(in, schema, path);
}

void export_rows_csv(const std::string& path, const std::vector<CyclingRecordRow>& rows) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << "cycle,step,time_s,voltage_V,current_A\n" << std::setprecision(17);
    for (const auto& r : rows)
        out << r.cycle << ',' << to_string(r.step) << ',' << r.time_s << ',' << r.voltage_v << ',' << r.current_a << '\n';
}

// ---------------------------------------------------------------------------

ExtractResult extract_discharge(const std::vector<CyclingRecordRow>& rows, const std::string& battery_id,
                                const ExtractOptions& options) {
    ExtractResult res;
    std::vector<int> order;
    std::map<int, std::vector<const CyclingRecordRow*>> by_cycle;
    for (const auto& r : rows) {
        if (!by_cycle.count(r.cycle)) order.push_back(r.cycle);
        by_cycle[r.cycle].push_back(&r);
    }
    const double band = options.tolerance * options.current;
    for (int cycle : order) {
        const auto& rs = by_cycle[cycle];
        std::size_t best_begin = 0, best_len = 0;
        std::size_t i = 0;
        while (i < rs.size()) {
            auto ok = [&](std::size_t k) {
                return std::abs(rs[k]->current_a + options.current) <= band && rs[k]->voltage_v >= options.cutoff;
            };
            if (!ok(i)) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < rs.size() && ok(j)) ++j;
            if (j - i > best_len) {
                best_begin = i;
                best_len = j - i;
            }
            i = j;
        }
        if (best_len == 0) continue;

        DischargeCurve c;
        c.battery_id = battery_id;
        c.cycle = cycle;
        c.current = options.current;
        c.cutoff = options.cutoff;
        const double t0 = rs[best_begin]->time_s;
        for (std::size_t k = best_begin; k < best_begin + best_len; ++k) {
            const double t = rs[k]->time_s - t0;
            if (!c.t.empty() && !(t > c.t.back())) continue;  // duplicate timestamps
            c.t.push_back(t);
            c.v.push_back(rs[k]->voltage_v);
        }
        if (static_cast<int>(c.size()) < options.min_samples) {
            res.warnings.push_back("cycle " + std::to_string(cycle) + ": discharge segment has only " +
                                   std::to_string(c.size()) + " samples, dropped");
            continue;
        }
        try {
            c.validate();
        } catch (const Error& e) {
            res.warnings.push_back("cycle " + std::to_string(cycle) + ": " + e.what() + ", dropped");
            continue;
        }
        res.curves.push_back(std::move(c));
    }
    if (res.curves.empty()) res.warnings.push_back("no constant-current discharge segment found");
    if (!res.warnings.empty()) res.status = "warning";
    return res;
}

void write_curves_csv(const std::string& path, const std::vector<DischargeCurve>& curves) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << "battery,cycle,time_s,voltage_V\n" << std::setprecision(17);
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.size(); ++i) out << c.battery_id << ',' << c.cycle << ',' << c.t[i] << ',' << c.v[i] << '\n';
}

std::vector<DischargeCurve> read_curves_csv(const std::string& path, double current, double cutoff) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (split_csv(line) != std::vector<std::string>{"battery", "cycle", "time_s", "voltage_V"})
        throw FormatError(path + ": expected header battery,cycle,time_s,voltage_V");
    std::vector<DischargeCurve> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto f = split_csv(line);
        int cycle = 0;
        double t = 0.0, v = 0.0;
        if (f.size() != 4 || !parse_int(f[1], cycle) || !parse_double(f[2], t) || !parse_double(f[3], v))
            throw FormatError(path + ": malformed line " + std::to_string(lineno));
        if (out.empty() || out.back().battery_id != f[0] || out.back().cycle != cycle) {
            DischargeCurve c;
            c.battery_id = f[0];
            c.cycle = cycle;
            c.current = current;
            c.cutoff = cutoff;
            out.push_back(std::move(c));
        }
        out.back().t.push_back(t);
        out.back().v.push_back(v);
    }
    return out;
}

std::vector<DischargeCurve> load_curves(const std::string& path) {
    if (fs::path(path).extension() == ".csv") return read_curves_csv(path);
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return curves_from_json(j);
}

nlohmann::json curves_to_json(const std::vector<DischargeCurve>& curves) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : curves)
        arr.push_back({{"battery_id", c.battery_id},
                       {"cycle", c.cycle},
                       {"current", c.current},
                       {"cutoff", c.cutoff},
                       {"t", c.t},
                       {"v", c.v}});
    return {{"format", "pineapple-discharge-curves"}, {"format_version", 1}, {"curves", arr}};
}

std::vector<DischargeCurve> curves_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "pineapple-discharge-curves" || j.value("format_version", 0) != 1)
        throw FormatError("not a version-1 discharge curve file");
    std::vector<DischargeCurve> out;
    try {
        for (const auto& e : j.at("curves")) {
            DischargeCurve c;
            c.battery_id = e.at("battery_id");
            c.cycle = e.at("cycle");
            c.current = e.at("current");
            c.cutoff = e.at("cutoff");
            c.t = e.at("t").get<std::vector<double>>();
            c.v = e.at("v").get<std::vector<double>>();
            out.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("discharge curves: ") + e.what());
    }
    return out;
}

std::vector<CyclingRecordRow> embed_in_cycle(const DischargeCurve& curve, int cycle, double t0) {
    std::vector<CyclingRecordRow> rows;
    double t = t0;
    for (int k = 0; k < 30; ++k, t += 60.0) rows.push_back({cycle, StepKind::ChargeCc, t, 3.6 + 0.02 * k, 0.675});
    for (int k = 0; k < 20; ++k, t += 60.0) rows.push_back({cycle, StepKind::ChargeCv, t, 4.2, 0.675 * std::exp(-0.2 * k)});
    for (int k = 0; k < 10; ++k, t += 60.0) rows.push_back({cycle, StepKind::Rest, t, 4.15, 0.0});
    for (std::size_t i = 0; i < curve.size(); ++i)
        rows.push_back({cycle, StepKind::Discharge, t + curve.t[i], curve.v[i], -curve.current});
    t += curve.duration() + 60.0;
    for (int k = 0; k < 10; ++k, t += 60.0) rows.push_back({cycle, StepKind::Rest, t, 3.2, 0.0});
    return rows;
}

// ---------------------------------------------------------------------------

namespace {

std::string hex_digest(const unsigned char* d, unsigned n) {
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (unsigned i = 0; i < n; ++i) os << std::setw(2) << static_cast<int>(d[i]);
    return os.str();
}

struct Sha256 {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    Sha256() {
        if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) throw Error("sha256 initialization failed");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx); }
    void update(const char* p, std::size_t n) { EVP_DigestUpdate(ctx, p, n); }
    std::string finish() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned n = 0;
        EVP_DigestFinal_ex(ctx, md, &n);
        return hex_digest(md, n);
    }
};

}  // namespace

std::string sha256_string(const std::string& data) {
    Sha256 h;
    h.update(data.data(), data.size());
    return h.finish();
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path);
    Sha256 h;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return h.finish();
}

nlohmann::json RunManifest::to_json() const {
    auto entries = [](const std::vector<ManifestEntry>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& e : v) a.push_back({{"path", e.path}, {"sha256", e.sha256}, {"primary", e.primary}});
        return a;
    };
    return {{"format", "pineapple-run-manifest"},
            {"format_version", 1},
            {"command", command},
            {"config", config},
            {"seeds", seeds},
            {"tool_version", tool_version},
            {"inputs", entries(inputs)},
            {"outputs", entries(outputs)}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "pineapple-run-manifest") throw FormatError("not a run manifest");
    RunManifest m;
    try {
        m.command = j.at("command");
        m.config = j.at("config");
        m.seeds = j.at("seeds");
        m.tool_version = j.at("tool_version");
        auto read = [](const nlohmann::json& a, std::vector<ManifestEntry>& out) {
            for (const auto& e : a) out.push_back({e.at("path"), e.at("sha256"), e.value("primary", true)});
        };
        read(j.at("inputs"), m.inputs);
        read(j.at("outputs"), m.outputs);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    return m;
}

void RunManifest::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << to_json().dump(2) << '\n';
}

RunManifest RunManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return from_json(j);
}

RunDirectory::RunDirectory(std::string root) : root_(std::move(root)) { fs::create_directories(root_); }

std::string RunDirectory::file(const std::string& sub, const std::string& name) const {
    const fs::path dir = sub.empty() ? fs::path(root_) : fs::path(root_) / sub;
    fs::create_directories(dir);
    return (dir / name).string();
}

ManifestEntry RunDirectory::entry(const std::string& path, bool primary) const {
    return {fs::relative(path, root_).generic_string(), sha256_file(path), primary};
}

}  // namespace pineapple
