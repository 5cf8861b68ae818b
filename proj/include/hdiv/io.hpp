#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hdiv/demand.hpp"
#include "hdiv/monte_carlo.hpp"
#include "hdiv/orthogonal_iv.hpp"

namespace hdiv::io {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

// ---- CSV ---------------------------------------------------------------

struct CsvTable {
    std::string source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    Index row_count() const { return static_cast<Index>(rows.size()); }
    std::optional<Index> find(std::string_view name) const;
    Index column(std::string_view name) const;  // throws InputError
    // Numeric cell; errors name the 1-based data row and the column.
    double number(Index row, Index col) const;
    Eigen::VectorXd numeric_column(Index col) const;
    std::vector<std::string> text_column(Index col) const;
};

// Comma separated, header required, double quotes for fields with commas.
CsvTable parse_csv(std::istream& in, const std::string& source = "<input>");
CsvTable read_csv(const std::string& path);

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest representation that parses back to the same double.
std::string format_full(double value);
// Three decimals with the leading zero dropped: -0.185 -> "-.185".
std::string format_short(double value);

// ---- schema --------------------------------------------------------------

enum class Role {
    Outcome,
    Endogenous,
    Control,
    Instrument,
    MarketId,
    FirmId,
    ProductId,
    Share,
    OutsideShare,
    Price,
    Characteristic,
    Ignore,
};

std::string_view role_name(Role role);

struct ColumnRole {
    std::string column;
    Role role = Role::Ignore;
    std::string characteristic;  // Role::Characteristic only
};

// Entries "column=role" (or "column:role") separated by commas or newlines;
// '#' starts a comment.
struct CsvSchemaMap {
    std::vector<ColumnRole> entries;

    static CsvSchemaMap parse(std::string_view text);
    // A path to an existing file is read; anything else is parsed inline.
    static CsvSchemaMap load(const std::string& spec);
    // Column names of the usual R distribution of the automobile data.
    static CsvSchemaMap blp_default();

    std::vector<const ColumnRole*> with(Role role) const;
    const ColumnRole* single(Role role) const;  // throws if repeated
    std::string serialize() const;
};

// ---- datasets --------------------------------------------------------------

struct FitInput {
    IVDataset data;
    std::string outcome_name;
    std::string endogenous_name;
    std::vector<std::string> control_names;
    std::vector<std::string> instrument_names;
    bool outcome_from_shares = false;
    // Shares and prices, kept when both are mapped so elasticities can be reported.
    std::optional<demand::DemandPanel> panel;
};

// Outcome: the outcome column, else log(share) - log(outside_share).
// Endogenous: the endogenous column, else price. A column of ones among the
// controls becomes the unpenalized intercept; otherwise one is prepended when
// add_intercept is set.
FitInput fit_input_from_csv(const CsvTable& table, const CsvSchemaMap& schema, bool add_intercept);

demand::DemandPanel panel_from_csv(const CsvTable& table, const CsvSchemaMap& schema);

// ---- simulation config ---------------------------------------------------

// key = value lines; '#' comments. Unknown keys and bad values are ConfigErrors.
mc::SimulationConfig parse_simulation_config(std::string_view text, mc::SimulationConfig base = {});
mc::SimulationConfig load_simulation_config(const std::string& path, mc::SimulationConfig base = {});
void apply_config_entry(mc::SimulationConfig& config, std::string_view key, std::string_view value);
std::vector<std::pair<std::string, std::string>> config_entries(const mc::SimulationConfig& config);

// ---- reports ---------------------------------------------------------------

struct MethodReport {
    std::string method;
    bool ok = false;
    std::string error;
    int exit_code = 0;
    double alpha_hat = 0.0;
    double std_error = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    std::optional<ScoreSet> score_set;
    std::optional<SelectionCounts> selection;
    int controls_used = -1;
    int instruments_used = -1;
    std::optional<int> inelastic_count;
};

struct RunReport {
    std::string input;
    Index n = 0;
    Index p_x = 0;
    Index p_z = 0;
    double level = 0.95;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<MethodReport> methods;
    double seconds = 0.0;
};

std::string report_json(const RunReport& report);
std::string report_table(const RunReport& report);
std::string report_csv(const RunReport& report);

// Simulation summaries carry no timing, so equal inputs give equal bytes.
std::string simulation_json(const mc::SimulationSummary& summary);
std::string simulation_table(const mc::SimulationSummary& summary, bool with_reference);
std::string simulation_csv(const mc::SimulationSummary& summary);

}  // namespace hdiv::io
