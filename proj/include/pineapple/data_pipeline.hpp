#pragma once

// Cycling-data ingestion, constant-current discharge extraction and run
// artifact bookkeeping (run directories and hashed manifests).

#include <cstddef>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pineapple/voltage_model.hpp"

namespace pineapple {

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Ingestion

enum class StepKind { ChargeCc, ChargeCv, Discharge, Rest, Other };

std::string_view to_string(StepKind k);

struct CyclingRecordRow {
    int cycle = 0;
    StepKind step = StepKind::Other;
    double time_s = 0.0;
    double voltage_v = 0.0;
    double current_a = 0.0;  // discharge negative

    friend bool operator==(const CyclingRecordRow&, const CyclingRecordRow&) = default;
};

/// Column aliases and conventions of an input CSV.
struct SchemaConfig {
    std::string battery_id = "battery";
    /// canonical name (cycle, step, time_s, voltage_V, current_A) -> accepted header names
    std::map<std::string, std::vector<std::string>> aliases;
    /// raw step label -> canonical (charge_cc, charge_cv, discharge, rest, other)
    std::map<std::string, std::string> step_labels;
    /// -1 when the file records discharge current as positive.
    double current_sign = 1.0;
    double max_reject_fraction = 0.1;

    static SchemaConfig defaults();
    /// Missing keys fall back to defaults. Throws ConfigError.
    static SchemaConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct RejectedRow {
    std::size_t line = 0;  // 1-based, header is line 1
    std::string reason;
};

struct IngestResult {
    std::string battery_id;
    std::vector<CyclingRecordRow> rows;
    std::vector<RejectedRow> rejects;
    std::size_t data_lines = 0;

    /// Distinct cycles in order of first appearance.
    std::vector<int> cycles() const;
    void write_rejects_csv(const std::string& path) const;
};

/// Throws SchemaError for a missing required column and IngestionError when
/// more than max_reject_fraction of the data rows are rejected.
IngestResult ingest_csv(std::istream& in, const SchemaConfig& schema, const std::string& source = "<stream>");
IngestResult ingest_csv(const std::string& path, const SchemaConfig& schema = SchemaConfig::defaults());

/// Normalized schema with the default column names.
void export_rows_csv(const std::string& path, const std::vector<CyclingRecordRow>& rows);

// ---------------------------------------------------------------------------
// Discharge extraction

struct ExtractOptions {
    double current = 1.35;    // A, magnitude
    double tolerance = 0.05;  // relative
    double cutoff = kCutoffVoltage;
    int min_samples = kMinDischargeSamples;

    static constexpr int kMinDischargeSamples = 10;
};

struct ExtractResult {
    std::vector<DischargeCurve> curves;
    std::vector<std::string> warnings;
    std::string status = "ok";  // ok | warning
};

ExtractResult extract_discharge(const std::vector<CyclingRecordRow>& rows, const std::string& battery_id,
                                const ExtractOptions& options = {});

void write_curves_csv(const std::string& path, const std::vector<DischargeCurve>& curves);
/// Reads the battery,cycle,time_s,voltage_V layout written by write_curves_csv.
std::vector<DischargeCurve> read_curves_csv(const std::string& path, double current = 1.35,
                                           double cutoff = kCutoffVoltage);
/// Curves from a .json (curves_to_json) or .csv (write_curves_csv) file.
std::vector<DischargeCurve> load_curves(const std::string& path);
nlohmann::json curves_to_json(const std::vector<DischargeCurve>& curves);
std::vector<DischargeCurve> curves_from_json(const nlohmann::json& j);

/// Builds rows for one CC-CV cycle around a discharge curve: CC charge,
/// CV hold, rest, the discharge itself (negative current) and a final rest.
std::vector<CyclingRecordRow> embed_in_cycle(const DischargeCurve& curve, int cycle, double t0 = 0.0);

// ---------------------------------------------------------------------------
// Run artifacts

/// Hex SHA-256 of a file's content.
std::string sha256_file(const std::string& path);
std::string sha256_string(const std::string& data);

struct ManifestEntry {
    std::string path;  // relative to the run directory
    std::string sha256;
    bool primary = true;  // timing-dependent outputs are not primary
};

struct RunManifest {
    std::string command;
    nlohmann::json config;
    nlohmann::json seeds;
    std::string tool_version = kToolVersion;
    std::vector<ManifestEntry> inputs;
    std::vector<ManifestEntry> outputs;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
    void write(const std::string& path) const;
    static RunManifest load(const std::string& path);
};

/// Standard layout: tasks/, labels/, basis/, inferences/, reports/.
class RunDirectory {
public:
    explicit RunDirectory(std::string root);

    const std::string& root() const { return root_; }
    /// Creates the subdirectory if needed and returns root/sub/name.
    std::string file(const std::string& sub, const std::string& name) const;
    /// Hash entry for a file under the root.
    ManifestEntry entry(const std::string& path, bool primary = true) const;

private:
    std::string root_;
};

}  // namespace pineapple
