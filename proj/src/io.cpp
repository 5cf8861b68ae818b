#include "hdiv/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "hdiv/error.hpp"
#include "json.hpp"

namespace hdiv::io {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view text, double& out) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (text.empty()) return false;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

// Splits one logical record; `in` may need to supply continuation lines when
// a quoted field spans a newline.
bool read_record(std::istream& in, std::vector<std::string>& fields, long& line_no) {
    std::string line;
    if (!std::getline(in, line)) return false;
    ++line_no;
    fields.clear();
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0;; ++i) {
        if (i == line.size()) {
            if (quoted) {
                std::string next;
                if (!std::getline(in, next)) throw InputError("line " + std::to_string(line_no) + ": unterminated quote");
                ++line_no;
                field += '\n';
                line = next;
                i = static_cast<std::size_t>(-1);
                continue;
            }
            break;
        }
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(field);
    return true;
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string render_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows) {
        if (width.size() < r.size()) width.resize(r.size(), 0);
        for (std::size_t k = 0; k < r.size(); ++k) width[k] = std::max(width[k], r[k].size());
    }
    std::string out;
    for (const auto& r : rows) {
        std::string line;
        for (std::size_t k = 0; k < r.size(); ++k) {
            const std::string& cell = r[k];
            const std::string pad(width[k] - cell.size(), ' ');
            if (k == 0) {
                line += cell + pad;
            } else {
                line += "  " + pad + cell;
            }
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
    }
    return out;
}

}  // namespace

std::optional<Index> CsvTable::find(std::string_view name) const {
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (header[k] == name) return static_cast<Index>(k);
    }
    return std::nullopt;
}

Index CsvTable::column(std::string_view name) const {
    if (auto k = find(name)) return *k;
    throw InputError(source + ": column '" + std::string(name) + "' not found in header");
}

double CsvTable::number(Index row, Index col) const {
    const std::string& cell = rows[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)];
    double v = 0.0;
    if (!parse_double(cell, v)) {
        throw InputError(source + ": row " + std::to_string(row + 1) + ", column '" +
                         header[static_cast<std::size_t>(col)] + "': not a finite number ('" + cell + "')");
    }
    return v;
}

Eigen::VectorXd CsvTable::numeric_column(Index col) const {
    Eigen::VectorXd out(row_count());
    for (Index i = 0; i < row_count(); ++i) out(i) = number(i, col);
    return out;
}

std::vector<std::string> CsvTable::text_column(Index col) const {
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.emplace_back(trim(r[static_cast<std::size_t>(col)]));
    return out;
}

CsvTable parse_csv(std::istream& in, const std::string& source) {
    CsvTable table;
    table.source = source;
    long line_no = 0;
    std::vector<std::string> fields;
    if (!read_record(in, fields, line_no)) throw InputError(source + ": empty file, header row required");
    if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0].erase(0, 3);
    std::set<std::string> seen;
    for (auto& f : fields) {
        f = std::string(trim(f));
        if (f.empty()) throw InputError(source + ": empty column name in header");
        if (!seen.insert(f).second) throw InputError(source + ": duplicate column '" + f + "' in header");
    }
    table.header = fields;
    while (read_record(in, fields, line_no)) {
        if (fields.size() == 1 && trim(fields[0]).empty()) continue;
        if (fields.size() != table.header.size()) {
            throw InputError(source + ": row " + std::to_string(table.rows.size() + 1) + " (line " +
                             std::to_string(line_no) + ") has " + std::to_string(fields.size()) +
                             " fields, header has " + std::to_string(table.header.size()));
        }
        table.rows.push_back(fields);
    }
    return table;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    return parse_csv(in, path);
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) {
        if (k) out << ',';
        out << quote_if_needed(fields[k]);
    }
    out << '\n';
}

std::string format_full(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

std::string format_short(double value) {
    if (!std::isfinite(value)) return format_full(value);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", value);
    std::string s = buf;
    if (s == "-0.000") s = "0.000";
    if (s.rfind("0.", 0) == 0) s.erase(0, 1);
    else if (s.rfind("-0.", 0) == 0) s.erase(1, 1);
    return s;
}

// ---- schema --------------------------------------------------------------

std::string_view role_name(Role role) {
    switch (role) {
        case Role::Outcome: return "outcome";
        case Role::Endogenous: return "endogenous";
        case Role::Control: return "control";
        case Role::Instrument: return "instrument";
        case Role::MarketId: return "market_id";
        case Role::FirmId: return "firm_id";
        case Role::ProductId: return "product_id";
        case Role::Share: return "share";
        case Role::OutsideShare: return "outside_share";
        case Role::Price: return "price";
        case Role::Characteristic: return "characteristic";
        case Role::Ignore: return "ignore";
    }
    return "ignore";
}

CsvSchemaMap CsvSchemaMap::parse(std::string_view text) {
    CsvSchemaMap map;
    std::string normalized(text);
    std::replace(normalized.begin(), normalized.end(), '\n', ',');
    std::istringstream items(normalized);
    std::string item;
    std::set<std::string> columns;
    while (std::getline(items, item, ',')) {
        if (auto hash = item.find('#'); hash != std::string::npos) item.erase(hash);
        const std::string_view entry = trim(item);
        if (entry.empty()) continue;
        std::size_t sep = entry.find('=');
        if (sep == std::string_view::npos) sep = entry.find(':');
        if (sep == std::string_view::npos) {
            throw InputError("schema entry '" + std::string(entry) + "' is not of the form column=role");
        }
        ColumnRole cr;
        cr.column = std::string(trim(entry.substr(0, sep)));
        const std::string role(trim(entry.substr(sep + 1)));
        if (cr.column.empty()) throw InputError("schema entry '" + std::string(entry) + "' has no column name");
        if (role.rfind("characteristic:", 0) == 0) {
            cr.role = Role::Characteristic;
            cr.characteristic = std::string(trim(std::string_view(role).substr(15)));
            if (cr.characteristic.empty()) throw InputError("schema entry '" + std::string(entry) + "' names no characteristic");
        } else if (role == "characteristic") {
            cr.role = Role::Characteristic;
            cr.characteristic = cr.column;
        } else {
            bool found = false;
            for (Role r : {Role::Outcome, Role::Endogenous, Role::Control, Role::Instrument, Role::MarketId,
                           Role::FirmId, Role::ProductId, Role::Share, Role::OutsideShare, Role::Price,
                           Role::Ignore}) {
                if (role_name(r) == role) {
                    cr.role = r;
                    found = true;
                }
            }
            if (!found) throw InputError("schema entry '" + std::string(entry) + "': unknown role '" + role + "'");
        }
        if (!columns.insert(cr.column).second) {
            throw InputError("schema assigns column '" + cr.column + "' more than once");
        }
        map.entries.push_back(std::move(cr));
    }
    if (map.entries.empty()) throw InputError("schema is empty");
    return map;
}

CsvSchemaMap CsvSchemaMap::load(const std::string& spec) {
    std::error_code ec;
    if (std::filesystem::is_regular_file(spec, ec)) {
        std::ifstream in(spec);
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }
    return parse(spec);
}

CsvSchemaMap CsvSchemaMap::blp_default() {
    return parse(
        "cdid=market_id,firm.id=firm_id,id=product_id,share=share,outshr=outside_share,price=price,"
        "air=characteristic:air,hpwt=characteristic:hpwt,mpd=characteristic:mpd,"
        "space=characteristic:space");
}

std::vector<const ColumnRole*> CsvSchemaMap::with(Role role) const {
    std::vector<const ColumnRole*> out;
    for (const auto& e : entries) {
        if (e.role == role) out.push_back(&e);
    }
    return out;
}

const ColumnRole* CsvSchemaMap::single(Role role) const {
    const auto all = with(role);
    if (all.size() > 1) {
        throw InputError("schema assigns role '" + std::string(role_name(role)) + "' to more than one column");
    }
    return all.empty() ? nullptr : all.front();
}

std::string CsvSchemaMap::serialize() const {
    std::string out;
    for (const auto& e : entries) {
        out += e.column + "=" + std::string(role_name(e.role));
        if (e.role == Role::Characteristic) out += ":" + e.characteristic;
        out += "\n";
    }
    return out;
}

// ---- datasets --------------------------------------------------------------

FitInput fit_input_from_csv(const CsvTable& table, const CsvSchemaMap& schema, bool add_intercept) {
    const Index n = table.row_count();
    if (n < 3) {
        throw InputError(table.source + ": need at least 3 data rows, found " + std::to_string(n));
    }
    FitInput in;
    const auto* share = schema.single(Role::Share);
    const auto* outside = schema.single(Role::OutsideShare);
    const auto* price = schema.single(Role::Price);

    std::optional<demand::DemandPanel> panel;
    if (share && price) {
        demand::DemandPanel p;
        p.share = table.numeric_column(table.column(share->column));
        p.price = table.numeric_column(table.column(price->column));
        p.outside_share = outside ? table.numeric_column(table.column(outside->column))
                                  : Eigen::VectorXd::Constant(n, std::nan(""));
        auto ids = [&](Role r) {
            if (const auto* c = schema.single(r)) return table.text_column(table.column(c->column));
            std::vector<std::string> rows;
            for (Index i = 0; i < n; ++i) rows.push_back(std::to_string(i + 1));
            return rows;
        };
        p.market = ids(Role::MarketId);
        p.firm = ids(Role::FirmId);
        p.product = ids(Role::ProductId);
        p.characteristics.resize(n, 0);
        panel = std::move(p);
    }

    if (const auto* y = schema.single(Role::Outcome)) {
        in.outcome_name = y->column;
        in.data.y = table.numeric_column(table.column(y->column));
    } else if (share && outside) {
        demand::DemandPanel p;
        p.share = table.numeric_column(table.column(share->column));
        p.outside_share = table.numeric_column(table.column(outside->column));
        p.market.assign(static_cast<std::size_t>(n), "");
        in.data.y = demand::build_logit_outcome(p);
        in.outcome_name = "log(" + share->column + ") - log(" + outside->column + ")";
        in.outcome_from_shares = true;
    } else {
        throw InputError("schema needs an outcome column, or share and outside_share columns");
    }

    if (const auto* d = schema.single(Role::Endogenous)) {
        in.endogenous_name = d->column;
        in.data.d = table.numeric_column(table.column(d->column));
    } else if (price) {
        in.endogenous_name = price->column;
        in.data.d = table.numeric_column(table.column(price->column));
    } else {
        throw InputError("schema needs an endogenous column (or a price column)");
    }

    const auto controls = schema.with(Role::Control);
    const auto instruments = schema.with(Role::Instrument);
    std::vector<Eigen::VectorXd> xcols;
    for (const auto* c : controls) {
        xcols.push_back(table.numeric_column(table.column(c->column)));
        in.control_names.push_back(c->column);
    }
    for (std::size_t k = 0; k < xcols.size(); ++k) {
        if ((xcols[k].array() == 1.0).all()) {
            in.data.intercept_index = static_cast<Index>(k);
            break;
        }
    }
    if (!in.data.intercept_index && add_intercept) {
        xcols.insert(xcols.begin(), Eigen::VectorXd::Ones(n));
        in.control_names.insert(in.control_names.begin(), "(intercept)");
        in.data.intercept_index = 0;
    }
    in.data.X.resize(n, static_cast<Index>(xcols.size()));
    for (std::size_t k = 0; k < xcols.size(); ++k) in.data.X.col(static_cast<Index>(k)) = xcols[k];

    in.data.Z.resize(n, static_cast<Index>(instruments.size()));
    for (std::size_t k = 0; k < instruments.size(); ++k) {
        in.data.Z.col(static_cast<Index>(k)) = table.numeric_column(table.column(instruments[k]->column));
        in.instrument_names.push_back(instruments[k]->column);
    }
    in.panel = std::move(panel);
    in.data.validate();
    return in;
}

demand::DemandPanel panel_from_csv(const CsvTable& table, const CsvSchemaMap& schema) {
    auto required = [&](Role r) -> Index {
        const auto* c = schema.single(r);
        if (!c) throw InputError("demand panel schema needs a " + std::string(role_name(r)) + " column");
        return table.column(c->column);
    };
    demand::DemandPanel p;
    const Index n = table.row_count();
    p.market = table.text_column(required(Role::MarketId));
    p.firm = table.text_column(required(Role::FirmId));
    if (const auto* c = schema.single(Role::ProductId)) {
        p.product = table.text_column(table.column(c->column));
    } else {
        for (Index i = 0; i < n; ++i) p.product.push_back(std::to_string(i + 1));
    }
    p.share = table.numeric_column(required(Role::Share));
    p.outside_share = table.numeric_column(required(Role::OutsideShare));
    p.price = table.numeric_column(required(Role::Price));
    const auto chars = schema.with(Role::Characteristic);
    p.characteristics.resize(n, static_cast<Index>(chars.size()));
    for (std::size_t k = 0; k < chars.size(); ++k) {
        p.characteristic_names.push_back(chars[k]->characteristic);
        p.characteristics.col(static_cast<Index>(k)) = table.numeric_column(table.column(chars[k]->column));
    }
    p.validate();
    return p;
}

// ---- simulation config ---------------------------------------------------

namespace {

template <class T>
T parse_integer(std::string_view key, std::string_view value) {
    value = trim(value);
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError("config key '" + std::string(key) + "': expected an integer, got '" + std::string(value) + "'");
    }
    return out;
}

double parse_real(std::string_view key, std::string_view value) {
    double out = 0.0;
    if (!parse_double(value, out)) {
        throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" + std::string(trim(value)) + "'");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    value = trim(value);
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config key '" + std::string(key) + "': expected true or false");
}

}  // namespace

void apply_config_entry(mc::SimulationConfig& c, std::string_view key, std::string_view value) {
    key = trim(key);
    if (key == "n") c.n = parse_integer<int>(key, value);
    else if (key == "p_x") c.p_x = parse_integer<int>(key, value);
    else if (key == "p_z") c.p_z = parse_integer<int>(key, value);
    else if (key == "alpha0") c.alpha0 = parse_real(key, value);
    else if (key == "sparsity") c.sparsity = parse_integer<int>(key, value);
    else if (key == "coefficient_decay") c.coefficient_decay = parse_real(key, value);
    else if (key == "beta_scale") c.beta_scale = parse_real(key, value);
    else if (key == "gamma_scale") c.gamma_scale = parse_real(key, value);
    else if (key == "delta_scale") {
        if (trim(value) == "auto") c.delta_scale.reset();
        else c.delta_scale = parse_real(key, value);
    }
    else if (key == "concentration_target") c.concentration_target = parse_real(key, value);
    else if (key == "pi_diagonal") c.pi_diagonal = parse_real(key, value);
    else if (key == "error_correlation") c.error_correlation = parse_real(key, value);
    else if (key == "x_correlation") c.x_correlation = parse_real(key, value);
    else if (key == "include_intercept") c.include_intercept = parse_bool(key, value);
    else if (key == "replications") c.replications = parse_integer<int>(key, value);
    else if (key == "seed") c.seed = parse_integer<std::uint64_t>(key, value);
    else if (key == "test_level") c.test_level = parse_real(key, value);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

mc::SimulationConfig parse_simulation_config(std::string_view text, mc::SimulationConfig base) {
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string_view entry = trim(line);
        if (entry.empty()) continue;
        const auto eq = entry.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        apply_config_entry(base, entry.substr(0, eq), entry.substr(eq + 1));
    }
    base.validate();
    return base;
}

mc::SimulationConfig load_simulation_config(const std::string& path, mc::SimulationConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_simulation_config(buf.str(), base);
}

std::vector<std::pair<std::string, std::string>> config_entries(const mc::SimulationConfig& c) {
    return {
        {"n", std::to_string(c.n)},
        {"p_x", std::to_string(c.p_x)},
        {"p_z", std::to_string(c.p_z)},
        {"alpha0", format_full(c.alpha0)},
        {"sparsity", std::to_string(c.sparsity)},
        {"coefficient_decay", format_full(c.coefficient_decay)},
        {"beta_scale", format_full(c.beta_scale)},
        {"gamma_scale", format_full(c.gamma_scale)},
        {"delta_scale", c.delta_scale ? format_full(*c.delta_scale) : "auto"},
        {"concentration_target", format_full(c.concentration_target)},
        {"pi_diagonal", format_full(c.pi_diagonal)},
        {"error_correlation", format_full(c.error_correlation)},
        {"x_correlation", format_full(c.x_correlation)},
        {"include_intercept", c.include_intercept ? "true" : "false"},
        {"replications", std::to_string(c.replications)},
        {"seed", std::to_string(c.seed)},
        {"test_level", format_full(c.test_level)},
    };
}

// ---- reports ---------------------------------------------------------------

namespace {

using json = nlohmann::ordered_json;

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json score_set_json(const ScoreSet& s) {
    json j;
    switch (s.kind) {
        case ScoreSet::Kind::Interval: j["kind"] = "interval"; break;
        case ScoreSet::Kind::Complement: j["kind"] = "complement"; break;
        case ScoreSet::Kind::LowerRay: j["kind"] = "lower_ray"; break;
        case ScoreSet::Kind::UpperRay: j["kind"] = "upper_ray"; break;
        case ScoreSet::Kind::RealLine: j["kind"] = "real_line"; break;
    }
    j["lower"] = number_or_null(s.lower);
    j["upper"] = number_or_null(s.upper);
    return j;
}

std::string selection_line(const SelectionCounts& s) {
    return "outcome on controls: " + std::to_string(s.outcome_controls) +
           " controls; first stage: " + std::to_string(s.first_stage_controls) + " controls, " +
           std::to_string(s.first_stage_instruments) + " instruments; projection on controls: " +
           std::to_string(s.projection_controls) + " controls";
}

}  // namespace

std::string report_json(const RunReport& r) {
    json j;
    j["schema_version"] = kReportSchemaVersion;
    j["command"] = "fit";
    j["version"] = kVersion;
    j["input"] = r.input;
    j["n"] = r.n;
    j["p_x"] = r.p_x;
    j["p_z"] = r.p_z;
    j["level"] = r.level;
    json cfg = json::object();
    for (const auto& [k, v] : r.config) cfg[k] = v;
    j["config"] = cfg;
    json methods = json::array();
    for (const auto& m : r.methods) {
        json e;
        e["method"] = m.method;
        e["ok"] = m.ok;
        if (!m.ok) {
            e["error"] = m.error;
            e["exit_code"] = m.exit_code;
        } else {
            e["alpha_hat"] = number_or_null(m.alpha_hat);
            e["std_error"] = number_or_null(m.std_error);
            e["ci_lower"] = number_or_null(m.ci_lower);
            e["ci_upper"] = number_or_null(m.ci_upper);
            if (m.score_set) e["score_set"] = score_set_json(*m.score_set);
            if (m.selection) {
                json s;
                s["outcome_controls"] = m.selection->outcome_controls;
                s["first_stage_controls"] = m.selection->first_stage_controls;
                s["first_stage_instruments"] = m.selection->first_stage_instruments;
                s["projection_controls"] = m.selection->projection_controls;
                s["converged"] = m.selection->converged;
                s["warnings"] = m.selection->warnings;
                e["selection"] = s;
            }
            if (m.controls_used >= 0) e["controls_used"] = m.controls_used;
            if (m.instruments_used >= 0) e["instruments_used"] = m.instruments_used;
            if (m.inelastic_count) e["inelastic_count"] = *m.inelastic_count;
        }
        methods.push_back(e);
    }
    j["methods"] = methods;
    j["seconds"] = r.seconds;
    return j.dump(2) + "\n";
}

std::string report_table(const RunReport& r) {
    std::string out = "input: " + r.input + "  n=" + std::to_string(r.n) + "  controls=" +
                      std::to_string(r.p_x) + "  instruments=" + std::to_string(r.p_z) +
                      "  level=" + format_full(r.level) + "\n";
    std::vector<std::vector<std::string>> rows{
        {"method", "alpha", "se", "ci_lower", "ci_upper", "inelastic", "score set"}};
    std::vector<std::string> notes;
    for (const auto& m : r.methods) {
        if (!m.ok) {
            rows.push_back({m.method, "-", "-", "-", "-", "-", "-"});
            notes.push_back(m.method + ": " + m.error);
            continue;
        }
        rows.push_back({m.method, format_short(m.alpha_hat), format_short(m.std_error),
                        format_short(m.ci_lower), format_short(m.ci_upper),
                        m.inelastic_count ? std::to_string(*m.inelastic_count) : "-",
                        m.score_set ? m.score_set->describe() : "-"});
        if (m.selection) notes.push_back(m.method + ": " + selection_line(*m.selection));
        if (m.selection) {
            for (const auto& w : m.selection->warnings) notes.push_back(m.method + ": warning: " + w);
        }
    }
    out += render_table(rows);
    for (const auto& n : notes) out += n + "\n";
    return out;
}

std::string report_csv(const RunReport& r) {
    std::ostringstream os;
    write_csv_row(os, {"method", "ok", "alpha_hat", "std_error", "ci_lower", "ci_upper", "inelastic_count",
                       "outcome_controls", "first_stage_controls", "first_stage_instruments",
                       "projection_controls", "error"});
    for (const auto& m : r.methods) {
        const auto sel = [&](int SelectionCounts::*f) {
            return m.selection ? std::to_string((*m.selection).*f) : std::string();
        };
        write_csv_row(os, {m.method, m.ok ? "true" : "false", m.ok ? format_full(m.alpha_hat) : "",
                           m.ok ? format_full(m.std_error) : "", m.ok ? format_full(m.ci_lower) : "",
                           m.ok ? format_full(m.ci_upper) : "",
                           m.inelastic_count ? std::to_string(*m.inelastic_count) : "",
                           sel(&SelectionCounts::outcome_controls), sel(&SelectionCounts::first_stage_controls),
                           sel(&SelectionCounts::first_stage_instruments),
                           sel(&SelectionCounts::projection_controls), m.error});
    }
    return os.str();
}

std::string simulation_json(const mc::SimulationSummary& s) {
    json j;
    j["schema_version"] = kReportSchemaVersion;
    j["command"] = "simulate";
    j["version"] = kVersion;
    json cfg = json::object();
    for (const auto& [k, v] : config_entries(s.config)) cfg[k] = v;
    j["config"] = cfg;
    j["resolved_delta_scale"] = s.config.resolved_delta_scale();
    j["valid"] = s.valid;
    json rows = json::array();
    for (const auto& e : s.estimators) {
        json r;
        r["id"] = std::string(mc::estimator_id(e.estimator));
        r["label"] = std::string(mc::estimator_label(e.estimator));
        r["bias"] = number_or_null(e.bias);
        r["mad"] = number_or_null(e.mad);
        r["size"] = number_or_null(e.size);
        r["score_size"] = e.score_size < 0 ? json(nullptr) : json(e.score_size);
        r["successes"] = e.successes;
        r["failures"] = e.failures;
        r["valid"] = e.valid;
        rows.push_back(r);
    }
    j["estimators"] = rows;
    return j.dump(2) + "\n";
}

std::string simulation_table(const mc::SimulationSummary& s, bool with_reference) {
    std::vector<std::vector<std::string>> rows{{"Estimator", "Bias", "MAD", "Size", "Score size", "Failures"}};
    std::string out;
    for (const auto& e : s.estimators) {
        rows.push_back({std::string(mc::estimator_label(e.estimator)), format_short(e.bias),
                        format_short(e.mad), format_short(e.size),
                        e.score_size < 0 ? "-" : format_short(e.score_size),
                        std::to_string(e.failures) + (e.valid ? "" : " (invalid)")});
    }
    out += render_table(rows);
    if (with_reference) {
        out += "\nreference (bias / MAD / size):\n";
        std::vector<std::vector<std::string>> ref;
        for (const auto& e : s.estimators) {
            const auto pub = mc::published_metrics(e.estimator);
            if (!pub) continue;
            ref.push_back({std::string(mc::estimator_label(e.estimator)), "ours:", format_short(e.bias),
                           format_short(e.mad), format_short(e.size), "  paper:", format_short(pub->bias),
                           format_short(pub->mad), format_short(pub->size)});
        }
        out += render_table(ref);
    }
    return out;
}

std::string simulation_csv(const mc::SimulationSummary& s) {
    std::ostringstream os;
    write_csv_row(os, {"estimator", "bias", "mad", "size", "score_size", "successes", "failures", "valid"});
    for (const auto& e : s.estimators) {
        write_csv_row(os, {std::string(mc::estimator_id(e.estimator)), format_full(e.bias), format_full(e.mad),
                           format_full(e.size), e.score_size < 0 ? "" : format_full(e.score_size),
                           std::to_string(e.successes), std::to_string(e.failures), e.valid ? "true" : "false"});
    }
    return os.str();
}

}  // namespace hdiv::io
