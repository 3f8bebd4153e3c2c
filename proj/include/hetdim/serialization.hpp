#pragma once

#include "hetdim/abs_lorenz.hpp"
#include "hetdim/cycle_solver.hpp"
#include "hetdim/saddle_model.hpp"
#include "hetdim/tangency_forge.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hetdim {

using Json = nlohmann::ordered_json;

inline constexpr int kCertificateSchema = 1;

/// Malformed or invalid input. `where` is "line:col" for syntax errors and a JSON
/// pointer for validation errors.
struct InputError : std::runtime_error {
    InputError(const std::string& where_, const std::string& what)
        : std::runtime_error(where_.empty() ? what : where_ + ": " + what), where(where_) {}
    std::string where;
};

/// Everything needed to rebuild a SaddleModel.
struct ModelSpec {
    Multipliers multipliers;
    int dim = 3;
    Nonlinearity nonlinearity;
    Vec symmetry_signs = Vec::Constant(1, -1.0);
    bool symmetric = true;

    [[nodiscard]] SaddleModel build() const;
};

Json parse_json(const std::string& text);

/// Line and column of every value in a JSON text, keyed by JSON pointer.
class SourceMap {
public:
    static SourceMap of(const std::string& text);
    /// "line:col" of the pointer, or of its nearest recorded ancestor; empty if none.
    [[nodiscard]] std::string locate(std::string pointer) const;

private:
    std::map<std::string, std::pair<int, int>> where_;
};
Json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

Json to_json(const Vec& v);
Json to_json(const Mat& m);
Json to_json(const SplitVector& p);
Json to_json(const std::vector<std::complex<double>>& values);

/// Field readers; every failure is an InputError naming the JSON pointer.
double read_number(const Json& j, const std::string& ptr);
int read_int(const Json& j, const std::string& ptr);
Vec read_vec(const Json& j, const std::string& ptr);
Mat read_mat(const Json& j, const std::string& ptr);

Json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const Json& j, const std::string& ptr = "");

Json to_json(const GlobalMapCoeffs& k);
GlobalMapCoeffs coeffs_from_json(const Json& j, int dim, const std::string& ptr = "");

Json to_json(const PeriodTwoOrbit& orbit);
PeriodTwoOrbit orbit_from_json(const Json& j, const std::string& ptr = "");

Json to_json(const std::vector<CertificateCheck>& checks);

/// Self-contained certificate document: model, coefficients, solution and checks.
struct CertificateDocument {
    ModelSpec model;
    GlobalMapCoeffs coeffs;
    std::optional<GlobalMapCoeffs> coeffs2;
    CycleCertificate cert;
    std::vector<CertificateCheck> checks;
};

Json to_json(const CertificateDocument& doc);
CertificateDocument certificate_from_json(const Json& j);

Json to_json(const TangencyBranch& t);
Json to_json(const FlowExponents& e);
Json to_json(const C3PrimeCheck& c);

/// Shortest round-trip text for a double; the same value always prints the same way.
std::string format_number(double v);

/// Row-oriented CSV buffer.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);
    CsvTable& row(const std::vector<std::string>& cells);
    [[nodiscard]] std::string str() const;
    [[nodiscard]] std::size_t rows() const { return rows_.size(); }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// Formats each argument: doubles via format_number, bools as 0/1, strings verbatim.
template <typename... Args>
std::vector<std::string> cells(const Args&... args);

namespace detail {
inline std::string cell(double v) { return format_number(v); }
inline std::string cell(int v) { return std::to_string(v); }
inline std::string cell(long v) { return std::to_string(v); }
inline std::string cell(std::size_t v) { return std::to_string(v); }
inline std::string cell(bool v) { return v ? "1" : "0"; }
inline std::string cell(const std::string& v) { return v; }
inline std::string cell(const char* v) { return v; }
inline std::string cell(char v) { return std::string(1, v); }
}  // namespace detail

template <typename... Args>
std::vector<std::string> cells(const Args&... args) {
    return {detail::cell(args)...};
}

}  // namespace hetdim
