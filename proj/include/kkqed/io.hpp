#pragma once

#include "fockspace.hpp"
#include "layered1d.hpp"
#include "permittivity.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kkqed::io
{

using json = nlohmann::json;
namespace fs = std::filesystem;

/// Malformed input file. line() is 1-based, 0 when the problem is structural rather than
/// syntactic (the message then names the offending key).
class ParseError : public std::runtime_error
{
public:
    ParseError(const std::string& what, int line = 0) : std::runtime_error(what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* material_path_env = "KKQED_MATERIAL_PATH";

inline std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json parse_json(const std::string& text, const std::string& source)
{
    try
    {
        return json::parse(text);
    }
    catch (const json::parse_error& e)
    {
        const auto upto = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
        throw ParseError(source + ":" + std::to_string(line) + ": " + e.what(), line);
    }
}

inline json read_json_file(const fs::path& path) { return parse_json(read_text(path), path.string()); }

inline void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << text;
    if (!out)
        throw IoError("write failed for " + path.string());
}

inline void write_json_file(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Shortest text that round-trips: 17 significant digits, '.' separator.
inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter
{
public:
    explicit CsvWriter(std::vector<std::string> header) : columns_(header.size())
    {
        append_row(header);
    }

    void row(const std::vector<double>& values)
    {
        if (values.size() != columns_)
            throw std::invalid_argument("CsvWriter: row width differs from header");
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values)
            cells.push_back(std::isnan(v) ? std::string{} : format_double(v));
        append_row(cells);
    }

    const std::string& text() const noexcept { return text_; }
    void save(const fs::path& path) const { write_text(path, text_); }

private:
    void append_row(const std::vector<std::string>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i)
        {
            if (i)
                text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }

    std::size_t columns_;
    std::string text_;
};

// ---------------------------------------------------------------------------
// Typed access with key paths in error messages
// ---------------------------------------------------------------------------

inline const json& require(const json& j, const std::string& key, const std::string& ctx)
{
    if (!j.is_object())
        throw ParseError(ctx + ": expected an object");
    const auto it = j.find(key);
    if (it == j.end())
        throw ParseError(ctx + ": missing key '" + key + "'");
    return *it;
}

inline double as_number(const json& j, const std::string& ctx)
{
    if (!j.is_number())
        throw ParseError(ctx + ": expected a number");
    return j.get<double>();
}

inline int as_int(const json& j, const std::string& ctx)
{
    if (!j.is_number_integer())
        throw ParseError(ctx + ": expected an integer");
    return j.get<int>();
}

inline double number_at(const json& j, const std::string& key, const std::string& ctx)
{
    return as_number(require(j, key, ctx), ctx + "." + key);
}

inline double number_or(const json& j, const std::string& key, double fallback, const std::string& ctx)
{
    return j.contains(key) ? as_number(j.at(key), ctx + "." + key) : fallback;
}

inline int int_or(const json& j, const std::string& key, int fallback, const std::string& ctx)
{
    return j.contains(key) ? as_int(j.at(key), ctx + "." + key) : fallback;
}

/// A complex number is either a bare real or [re, im].
inline complex as_complex(const json& j, const std::string& ctx)
{
    if (j.is_number())
        return {j.get<double>(), 0.0};
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
        return {j[0].get<double>(), j[1].get<double>()};
    throw ParseError(ctx + ": expected a number or [re, im]");
}

inline json to_json(complex z) { return json::array({z.real(), z.imag()}); }

inline Eigen::MatrixXcd as_matrix(const json& j, const std::string& ctx)
{
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ParseError(ctx + ": expected a matrix as a list of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXcd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
    {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw ParseError(ctx + ": row " + std::to_string(r) + " has the wrong length");
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = as_complex(row[static_cast<std::size_t>(c)], ctx + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
    return m;
}

template <typename Derived>
json to_json(const Eigen::MatrixBase<Derived>& m)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
    {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(to_json(complex(m(r, c))));
        rows.push_back(row);
    }
    return rows;
}

inline Matrix2c as_matrix2(const json& j, const std::string& ctx)
{
    const Eigen::MatrixXcd m = as_matrix(j, ctx);
    if (m.rows() != 2 || m.cols() != 2)
        throw ParseError(ctx + ": expected a 2x2 matrix");
    return m;
}

// ---------------------------------------------------------------------------
// Materials and stacks
// ---------------------------------------------------------------------------

/// Material file (frequencies in rad/s):
///   {"type": "lorentz", "terms": [[omega_p, omega_T, gamma], ...]}
///   {"type": "tabulated", "grid": [..], "re": [..], "im": [..]}
///   {"type": "constant", "eps": [re, im]}
///   {"type": "vacuum"}
inline PermittivityModel material_from_json(const json& j, const std::string& ctx)
{
    const json& type = require(j, "type", ctx);
    if (!type.is_string())
        throw ParseError(ctx + ".type: expected a string");
    const std::string t = type.get<std::string>();
    try
    {
        if (t == "vacuum")
            return vacuum();
        if (t == "constant")
            return ConstantModel{as_complex(require(j, "eps", ctx), ctx + ".eps")};
        if (t == "lorentz")
        {
            const json& terms = require(j, "terms", ctx);
            if (!terms.is_array())
                throw ParseError(ctx + ".terms: expected a list");
            std::vector<LorentzTerm> out;
            for (std::size_t i = 0; i < terms.size(); ++i)
            {
                const std::string c = ctx + ".terms[" + std::to_string(i) + "]";
                const json& term = terms[i];
                if (!term.is_array() || term.size() != 3)
                    throw ParseError(c + ": expected [omega_p, omega_T, gamma]");
                out.push_back({as_number(term[0], c + "[0]"), as_number(term[1], c + "[1]"), as_number(term[2], c + "[2]")});
            }
            return LorentzModel(std::move(out));
        }
        if (t == "tabulated")
        {
            auto list = [&](const char* key) {
                const json& v = require(j, key, ctx);
                if (!v.is_array())
                    throw ParseError(ctx + "." + key + ": expected a list");
                std::vector<double> out;
                for (std::size_t i = 0; i < v.size(); ++i)
                    out.push_back(as_number(v[i], ctx + "." + key + "[" + std::to_string(i) + "]"));
                return out;
            };
            const auto w = list("grid");
            const auto re = list("re");
            const auto im = list("im");
            if (re.size() != w.size() || im.size() != w.size())
                throw ParseError(ctx + ": grid, re and im must have equal length");
            std::vector<complex> vals(w.size());
            for (std::size_t i = 0; i < w.size(); ++i)
                vals[i] = {re[i], im[i]};
            return TabulatedModel(w, std::move(vals));
        }
    }
    catch (const std::invalid_argument& e)
    {
        throw ParseError(ctx + ": " + e.what());
    }
    throw ParseError(ctx + ".type: unknown material type '" + t + "'");
}

inline std::vector<fs::path> material_search_path()
{
    std::vector<fs::path> dirs;
    if (const char* env = std::getenv(material_path_env))
    {
        std::string s = env;
        std::size_t start = 0;
        while (start <= s.size())
        {
            const auto end = s.find(':', start);
            const auto piece = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
            if (!piece.empty())
                dirs.emplace_back(piece);
            if (end == std::string::npos)
                break;
            start = end + 1;
        }
    }
    return dirs;
}

/// Relative paths are tried against the referring file's directory, then each entry of
/// the material search path.
inline fs::path resolve_file(const std::string& ref, const fs::path& base_dir)
{
    const fs::path p(ref);
    if (p.is_absolute())
    {
        if (fs::exists(p))
            return p;
        throw IoError("file not found: " + ref);
    }
    std::vector<fs::path> tried{base_dir / p};
    for (const auto& dir : material_search_path())
        tried.push_back(dir / p);
    for (const auto& cand : tried)
        if (fs::exists(cand))
            return cand;
    std::string msg = "file not found: " + ref + " (searched";
    for (const auto& cand : tried)
        msg += " " + cand.string();
    throw IoError(msg + ")");
}

inline PermittivityModel load_material(const fs::path& path)
{
    return material_from_json(read_json_file(path), path.string());
}

/// A material reference is either an inline material object or a path to a material file.
inline PermittivityModel material_ref(const json& j, const fs::path& base_dir, const std::string& ctx)
{
    if (j.is_string())
        return load_material(resolve_file(j.get<std::string>(), base_dir));
    if (j.is_object())
        return material_from_json(j, ctx);
    throw ParseError(ctx + ": expected a material object or a file path");
}

/// {"left_cladding": ref, "right_cladding": ref, "layers": [{"thickness_m": .., "material": ref}]}
inline DielectricStack stack_from_json(const json& j, const fs::path& base_dir, const std::string& ctx)
{
    DielectricStack s;
    if (j.contains("left_cladding"))
        s.left_cladding = material_ref(j.at("left_cladding"), base_dir, ctx + ".left_cladding");
    if (j.contains("right_cladding"))
        s.right_cladding = material_ref(j.at("right_cladding"), base_dir, ctx + ".right_cladding");
    if (j.contains("layers"))
    {
        const json& layers = j.at("layers");
        if (!layers.is_array())
            throw ParseError(ctx + ".layers: expected a list");
        for (std::size_t i = 0; i < layers.size(); ++i)
        {
            const std::string c = ctx + ".layers[" + std::to_string(i) + "]";
            s.layers.push_back({number_at(layers[i], "thickness_m", c), material_ref(require(layers[i], "material", c), base_dir, c + ".material")});
        }
    }
    try
    {
        s.validate();
    }
    catch (const std::invalid_argument& e)
    {
        throw ParseError(ctx + ": " + e.what());
    }
    return s;
}

inline DielectricStack stack_ref(const json& j, const fs::path& base_dir, const std::string& ctx)
{
    if (j.is_string())
    {
        const auto path = resolve_file(j.get<std::string>(), base_dir);
        return stack_from_json(read_json_file(path), path.parent_path(), path.string());
    }
    return stack_from_json(j, base_dir, ctx);
}

// ---------------------------------------------------------------------------
// Fock states
// ---------------------------------------------------------------------------

inline json state_to_json(const FockDensity& rho)
{
    return {{"basis_ordering", "lexicographic, first mode most significant"},
            {"modes", rho.modes()},
            {"cutoff", rho.cutoff()},
            {"matrix", to_json(rho.matrix())}};
}

inline FockDensity state_from_json(const json& j, const std::string& ctx)
{
    const int modes = as_int(require(j, "modes", ctx), ctx + ".modes");
    const int cutoff = as_int(require(j, "cutoff", ctx), ctx + ".cutoff");
    try
    {
        return FockDensity(modes, cutoff, as_matrix(require(j, "matrix", ctx), ctx + ".matrix"));
    }
    catch (const std::invalid_argument& e)
    {
        throw ParseError(ctx + ": " + e.what());
    }
}

/// One channel: "vacuum", {"fock": n} or {"density": matrix}.
inline ChannelPrep channel_from_json(const json& j, const std::string& ctx)
{
    if (j.is_string() && j.get<std::string>() == "vacuum")
        return VacuumPrep{};
    if (j.is_object() && j.contains("fock"))
    {
        const int n = as_int(j.at("fock"), ctx + ".fock");
        if (n < 0)
            throw ParseError(ctx + ".fock: photon number must be non-negative");
        return FockPrep{n};
    }
    if (j.is_object() && j.contains("density"))
        return DensityPrep{as_matrix(j.at("density"), ctx + ".density")};
    throw ParseError(ctx + ": expected \"vacuum\", {\"fock\": n} or {\"density\": matrix}");
}

/// {"fock": [n1, n2]} for field Fock inputs with vacuum device channels, or
/// {"channels": [c1, c2, c3, c4]} (missing trailing channels are vacuum).
inline InputSpec input_from_json(const json& j, const std::string& ctx)
{
    InputSpec spec;
    if (j.contains("fock"))
    {
        const json& f = j.at("fock");
        if (!f.is_array() || f.size() != 2)
            throw ParseError(ctx + ".fock: expected [n1, n2]");
        for (std::size_t i = 0; i < 2; ++i)
            spec.channels[i] = channel_from_json(json{{"fock", f[i]}}, ctx + ".fock[" + std::to_string(i) + "]");
        return spec;
    }
    const json& ch = require(j, "channels", ctx);
    if (!ch.is_array() || ch.size() > 4)
        throw ParseError(ctx + ".channels: expected up to four channel preparations");
    for (std::size_t i = 0; i < ch.size(); ++i)
        spec.channels[i] = channel_from_json(ch[i], ctx + ".channels[" + std::to_string(i) + "]");
    return spec;
}

} // namespace kkqed::io
