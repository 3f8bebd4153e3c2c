#include "hetdim/serialization.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string_view>

namespace hetdim {

namespace {

std::string join(const std::string& ptr, const std::string& key) { return ptr + "/" + key; }

void expect_object(const Json& j, const std::string& ptr, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw InputError(ptr.empty() ? "/" : ptr, "expected an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.contains(key)) throw InputError(join(ptr, key), "unknown key");
}

const Json& field(const Json& j, const std::string& key, const std::string& ptr) {
    if (!j.contains(key)) throw InputError(join(ptr, key), "missing required field");
    return j.at(key);
}

double number_or(const Json& j, const std::string& key, double fallback, const std::string& ptr) {
    return j.contains(key) ? read_number(j.at(key), join(ptr, key)) : fallback;
}

Vec vec_or(const Json& j, const std::string& key, const std::string& ptr) {
    return j.contains(key) ? read_vec(j.at(key), join(ptr, key)) : Vec();
}

std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
    int line = 1;
    int col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

Json nan_safe(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }

double nan_read(const Json& j, const std::string& ptr) {
    return j.is_null() ? std::nan("") : read_number(j, ptr);
}

std::vector<std::complex<double>> read_complex_list(const Json& j, const std::string& ptr) {
    if (!j.is_array()) throw InputError(ptr, "expected an array of [re, im] pairs");
    std::vector<std::complex<double>> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto p = join(ptr, std::to_string(i));
        const Vec v = read_vec(j[i], p);
        if (v.size() != 2) throw InputError(p, "expected [re, im]");
        out.emplace_back(v(0), v(1));
    }
    return out;
}

SplitVector read_point(const Json& j, const std::string& ptr) {
    expect_object(j, ptr, {"x", "y", "z"});
    return {read_number(field(j, "x", ptr), join(ptr, "x")), read_number(field(j, "y", ptr), join(ptr, "y")),
            read_vec(field(j, "z", ptr), join(ptr, "z"))};
}

}  // namespace

SaddleModel ModelSpec::build() const {
    return build_model(multipliers, dim, nonlinearity, symmetry_signs, symmetric);
}

Json parse_json(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        const auto [line, col] = line_col(text, e.byte);
        std::string msg = e.what();
        // Drop the library prefix up to the last ": " before the description.
        if (const auto pos = msg.find("syntax error"); pos != std::string::npos) msg = msg.substr(pos);
        throw InputError(std::to_string(line) + ":" + std::to_string(col), msg);
    }
}

namespace {

// Where the parser is, and where the most recent token began.
struct ReadState {
    const char* token_start = nullptr;
    bool armed = true;  ///< the next significant character starts a token
};

// Forward iterator that reports token starts to a ReadState.
struct TrackingIter {
    using iterator_category = std::forward_iterator_tag;
    using value_type = char;
    using difference_type = std::ptrdiff_t;
    using pointer = const char*;
    using reference = const char&;

    const char* p = nullptr;
    ReadState* state = nullptr;

    reference operator*() const { return *p; }
    TrackingIter& operator++() {
        if (state->armed && std::string_view(" \t\r\n:,").find(*p) == std::string_view::npos) {
            state->token_start = p;
            state->armed = false;
        }
        ++p;
        return *this;
    }
    TrackingIter operator++(int) {
        auto t = *this;
        ++*this;
        return t;
    }
    bool operator==(const TrackingIter& o) const { return p == o.p; }
};

std::string escape_token(const std::string& key) {
    std::string out;
    for (char c : key) {
        if (c == '~') out += "~0";
        else if (c == '/') out += "~1";
        else out += c;
    }
    return out;
}

class LocatingSax {
public:
    LocatingSax(const std::string& text, ReadState* state, std::map<std::string, std::pair<int, int>>& out)
        : text_(text), state_(state), out_(out) {}

    bool null() { return value(); }
    bool boolean(bool) { return value(); }
    bool number_integer(Json::number_integer_t) { return value(); }
    bool number_unsigned(Json::number_unsigned_t) { return value(); }
    bool number_float(Json::number_float_t, const std::string&) { return value(); }
    bool string(std::string&) { return value(); }
    bool binary(Json::binary_t&) { return value(); }
    bool start_object(std::size_t) { return open(false); }
    bool end_object() { return close(); }
    bool start_array(std::size_t) { return open(true); }
    bool end_array() { return close(); }
    bool key(std::string& k) {
        stack_.back().key = escape_token(k);
        record(stack_.back().ptr + "/" + stack_.back().key);
        return rearm();
    }
    bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) { return false; }

private:
    struct Frame {
        std::string ptr;
        bool array = false;
        std::size_t index = 0;
        std::string key;
    };

    std::string next_pointer() {
        if (stack_.empty()) return "";
        auto& f = stack_.back();
        if (f.array) {
            auto p = f.ptr + "/" + std::to_string(f.index++);
            record(p);
            return p;
        }
        return f.ptr + "/" + f.key;
    }
    bool value() {
        next_pointer();
        return rearm();
    }
    bool open(bool array) {
        auto p = next_pointer();
        if (stack_.empty()) record(p);
        stack_.push_back({std::move(p), array, 0, {}});
        return rearm();
    }
    bool close() {
        stack_.pop_back();
        return rearm();
    }
    bool rearm() {
        state_->armed = true;
        return true;
    }
    void record(const std::string& p) {
        if (!out_.contains(p)) out_[p] = line_col(text_, static_cast<std::size_t>(state_->token_start - text_.data()) + 1);
    }

    const std::string& text_;
    ReadState* state_;
    std::map<std::string, std::pair<int, int>>& out_;
    std::vector<Frame> stack_;
};

}  // namespace

SourceMap SourceMap::of(const std::string& text) {
    SourceMap map;
    ReadState state{text.data()};
    LocatingSax sax(text, &state, map.where_);
    Json::sax_parse(TrackingIter{text.data(), &state}, TrackingIter{text.data() + text.size(), &state}, &sax,
                    nlohmann::detail::input_format_t::json, false);
    return map;
}

std::string SourceMap::locate(std::string pointer) const {
    while (true) {
        if (const auto it = where_.find(pointer); it != where_.end())
            return std::to_string(it->second.first) + ":" + std::to_string(it->second.second);
        const auto cut = pointer.rfind('/');
        if (cut == std::string::npos) return "";
        pointer.resize(cut);
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(path.string(), "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json read_json_file(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    try {
        return parse_json(text);
    } catch (const InputError& e) {
        throw InputError(path.string() + ":" + e.where, std::string(e.what()).substr(e.where.size() + 2));
    }
}

Json to_json(const Vec& v) {
    Json j = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

Json to_json(const Mat& m) {
    Json j = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(to_json(Vec(m.row(r).transpose())));
    return j;
}

Json to_json(const SplitVector& p) { return Json{{"x", p.x}, {"y", p.y}, {"z", to_json(p.z)}}; }

Json to_json(const std::vector<std::complex<double>>& values) {
    Json j = Json::array();
    for (const auto& v : values) j.push_back(Json::array({v.real(), v.imag()}));
    return j;
}

double read_number(const Json& j, const std::string& ptr) {
    if (!j.is_number()) throw InputError(ptr, "expected a number");
    return j.get<double>();
}

int read_int(const Json& j, const std::string& ptr) {
    if (!j.is_number_integer()) throw InputError(ptr, "expected an integer");
    return j.get<int>();
}

Vec read_vec(const Json& j, const std::string& ptr) {
    if (!j.is_array()) throw InputError(ptr, "expected an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = read_number(j[i], join(ptr, std::to_string(i)));
    return v;
}

Mat read_mat(const Json& j, const std::string& ptr) {
    if (!j.is_array() || j.empty()) throw InputError(ptr, "expected a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    Mat m;
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto p = join(ptr, std::to_string(r));
        const Vec row = read_vec(j[static_cast<std::size_t>(r)], p);
        if (r == 0) m.resize(rows, row.size());
        if (row.size() != m.cols()) throw InputError(p, "ragged matrix row");
        m.row(r) = row.transpose();
    }
    return m;
}

Json to_json(const ModelSpec& spec) {
    const auto& mu = spec.multipliers;
    return Json{{"dim", spec.dim},
                {"lambda", mu.lambda},
                {"gamma", mu.gamma},
                {"strong", to_json(mu.strong)},
                {"lambda_hat", mu.lambda_hat},
                {"gamma_hat", mu.gamma_hat},
                {"lambda0", mu.lambda0},
                {"nonlinearity",
                 {{"kind", spec.nonlinearity.kind == NonlinearityKind::linear ? "linear" : "polynomial"},
                  {"eps", spec.nonlinearity.eps}}},
                {"symmetry_signs", to_json(spec.symmetry_signs)},
                {"symmetric", spec.symmetric}};
}

ModelSpec model_spec_from_json(const Json& j, const std::string& ptr) {
    expect_object(j, ptr,
                  {"dim", "lambda", "gamma", "strong", "lambda_hat", "gamma_hat", "lambda0", "nonlinearity",
                   "symmetry_signs", "symmetric"});
    ModelSpec s;
    if (j.contains("dim")) s.dim = read_int(j.at("dim"), join(ptr, "dim"));
    if (s.dim < 3) throw InputError(join(ptr, "dim"), "dim must be at least 3");
    auto& mu = s.multipliers;
    mu.lambda = number_or(j, "lambda", mu.lambda, ptr);
    mu.gamma = number_or(j, "gamma", mu.gamma, ptr);
    mu.strong = j.contains("strong") ? read_vec(j.at("strong"), join(ptr, "strong")) : Vec::Constant(s.dim - 2, 0.25);
    if (mu.strong.size() != s.dim - 2) throw InputError(join(ptr, "strong"), "needs dim - 2 entries");
    mu.lambda_hat = number_or(j, "lambda_hat", mu.lambda_hat, ptr);
    mu.gamma_hat = number_or(j, "gamma_hat", mu.gamma_hat, ptr);
    mu.lambda0 = number_or(j, "lambda0", mu.lambda0, ptr);
    if (j.contains("nonlinearity")) {
        const auto p = join(ptr, "nonlinearity");
        const auto& nl = j.at("nonlinearity");
        expect_object(nl, p, {"kind", "eps"});
        const auto& kind = field(nl, "kind", p);
        if (kind == "linear") {
            s.nonlinearity.kind = NonlinearityKind::linear;
        } else if (kind == "polynomial") {
            s.nonlinearity.kind = NonlinearityKind::polynomial;
        } else {
            throw InputError(join(p, "kind"), "expected \"linear\" or \"polynomial\"");
        }
        s.nonlinearity.eps = number_or(nl, "eps", 0.0, p);
    }
    s.symmetry_signs = j.contains("symmetry_signs") ? read_vec(j.at("symmetry_signs"), join(ptr, "symmetry_signs"))
                                                    : Vec::Constant(s.dim - 2, -1.0);
    if (j.contains("symmetric")) {
        if (!j.at("symmetric").is_boolean()) throw InputError(join(ptr, "symmetric"), "expected a boolean");
        s.symmetric = j.at("symmetric").get<bool>();
    }
    return s;
}

Json to_json(const GlobalMapCoeffs& k) {
    return Json{{"mu", k.mu},         {"x_plus", k.x_plus},   {"y_minus", k.y_minus}, {"z_plus", to_json(k.z_plus)},
                {"a", k.a},           {"b", k.b},             {"c", k.c},             {"d", k.d},
                {"a_t", to_json(k.a_t)}, {"b_t", to_json(k.b_t)}, {"alpha", to_json(k.alpha)},
                {"h", {{"e3", k.h.e3}}}};
}

GlobalMapCoeffs coeffs_from_json(const Json& j, int dim, const std::string& ptr) {
    expect_object(j, ptr, {"mu", "x_plus", "y_minus", "z_plus", "a", "b", "c", "d", "a_t", "b_t", "alpha", "h"});
    const auto num = [&](const char* key) { return read_number(field(j, key, ptr), join(ptr, key)); };
    GlobalMapCoeffs k = planar_coeffs(dim, number_or(j, "mu", 0.0, ptr), num("x_plus"), num("y_minus"),
                                      number_or(j, "a", 0.0, ptr), num("b"), num("c"), num("d"));
    if (j.contains("z_plus")) k.z_plus = read_vec(j.at("z_plus"), join(ptr, "z_plus"));
    if (j.contains("a_t")) k.a_t = read_vec(j.at("a_t"), join(ptr, "a_t"));
    if (j.contains("b_t")) k.b_t = read_vec(j.at("b_t"), join(ptr, "b_t"));
    if (j.contains("alpha")) k.alpha = read_mat(j.at("alpha"), join(ptr, "alpha"));
    if (j.contains("h")) {
        const auto p = join(ptr, "h");
        expect_object(j.at("h"), p, {"e3"});
        k.h.e3 = number_or(j.at("h"), "e3", 0.0, p);
    }
    try {
        k.validate(dim);
    } catch (const ModelError& e) {
        throw InputError(ptr.empty() ? "/" : ptr, e.what());
    }
    return k;
}

Json to_json(const PeriodTwoOrbit& o) {
    return Json{{"k", o.k},
                {"m", o.m},
                {"q01", to_json(o.q01)},
                {"q11", to_json(o.q11)},
                {"q02", to_json(o.q02)},
                {"q12", to_json(o.q12)},
                {"eta1", o.eta1},
                {"eta2", o.eta2},
                {"s_value", o.s_value},
                {"closure_residual", o.closure_residual},
                {"leg_residual", o.leg_residual},
                {"jacobian_2", to_json(o.jacobian_2)}};
}

PeriodTwoOrbit orbit_from_json(const Json& j, const std::string& ptr) {
    expect_object(j, ptr,
                  {"k", "m", "q01", "q11", "q02", "q12", "eta1", "eta2", "s_value", "closure_residual", "leg_residual",
                   "jacobian_2"});
    PeriodTwoOrbit o;
    o.k = read_int(field(j, "k", ptr), join(ptr, "k"));
    o.m = read_int(field(j, "m", ptr), join(ptr, "m"));
    o.q01 = read_point(field(j, "q01", ptr), join(ptr, "q01"));
    o.q11 = read_point(field(j, "q11", ptr), join(ptr, "q11"));
    o.q02 = read_point(field(j, "q02", ptr), join(ptr, "q02"));
    o.q12 = read_point(field(j, "q12", ptr), join(ptr, "q12"));
    o.eta1 = read_number(field(j, "eta1", ptr), join(ptr, "eta1"));
    o.eta2 = read_number(field(j, "eta2", ptr), join(ptr, "eta2"));
    o.s_value = number_or(j, "s_value", 0.0, ptr);
    o.closure_residual = number_or(j, "closure_residual", 0.0, ptr);
    o.leg_residual = number_or(j, "leg_residual", 0.0, ptr);
    if (j.contains("jacobian_2")) o.jacobian_2 = read_mat(j.at("jacobian_2"), join(ptr, "jacobian_2"));
    return o;
}

Json to_json(const std::vector<CertificateCheck>& checks) {
    Json j = Json::array();
    for (const auto& c : checks)
        j.push_back(Json{{"name", c.name}, {"value", nan_safe(c.value)}, {"tolerance", c.tolerance}, {"pass", c.pass}});
    return j;
}

Json to_json(const CertificateDocument& doc) {
    const auto& c = doc.cert;
    Json j;
    j["schema_version"] = kCertificateSchema;
    j["mode"] = to_string(c.mode);
    j["k"] = c.k;
    j["m"] = c.m;
    j["branch"] = c.branch;
    j["s_target"] = c.s_target;
    j["parameters"] = Json{{"mu", c.mu},       {"mu2", c.mu2},       {"mu_shift", c.mu_shift},
                           {"gamma", c.gamma}, {"lambda", c.lambda}, {"theta", c.theta}};
    j["model"] = to_json(doc.model);
    j["coeffs"] = to_json(doc.coeffs);
    if (doc.coeffs2) j["coeffs2"] = to_json(*doc.coeffs2);
    j["orbit"] = to_json(c.orbit);
    j["index_evidence"] = to_json(c.index_evidence);
    j["index"] = c.index;
    j["index2"] = Json{{"s", c.index2.s},
                       {"s_measured", c.index2.s_measured},
                       {"trace_measured", c.index2.trace_measured},
                       {"det_measured", c.index2.det_measured},
                       {"trace_predicted", c.index2.trace_predicted},
                       {"det_predicted", c.index2.det_predicted},
                       {"match", c.index2.match}};
    j["quasi_connection"] = Json{{"t_param", c.quasi.t_param},
                                 {"gap", c.quasi.gap},
                                 {"curve_point", to_json(c.quasi.curve_point)},
                                 {"leaf_point", to_json(c.quasi.leaf_point)}};
    if (c.transverse) {
        const auto& t = *c.transverse;
        j["transverse_connection"] = Json{{"iterations_used", t.iterations_used},
                                          {"iteration_bound", t.iteration_bound},
                                          {"crossing_point", to_json(t.crossing_point)},
                                          {"slope", t.slope},
                                          {"area_factor", t.area_factor},
                                          {"predicted_area_factor", t.predicted_area_factor},
                                          {"curve_points", t.curve_points}};
    }
    j["theta_decomposition"] = Json{{"m_over_k", c.theta_decomposition.m_over_k},
                                    {"c_star", c.theta_decomposition.c_star},
                                    {"theta_predicted", c.theta_decomposition.theta_predicted},
                                    {"c_star_reference", c.theta_decomposition.c_star_reference}};
    j["product"] = c.product;
    j["product_reference"] = c.product_reference;
    j["solver"] = Json{{"joint_residual", c.joint_residual},
                       {"newton_iterations", c.newton_iterations},
                       {"seed", to_json(c.seed)}};
    j["checks"] = to_json(doc.checks);
    return j;
}

CertificateDocument certificate_from_json(const Json& j) {
    expect_object(j, "",
                  {"schema_version", "mode", "k", "m", "branch", "s_target", "parameters", "model", "coeffs",
                   "coeffs2", "orbit", "index_evidence", "index", "index2", "quasi_connection",
                   "transverse_connection", "theta_decomposition", "product", "product_reference", "solver",
                   "checks"});
    const int schema = read_int(field(j, "schema_version", ""), "/schema_version");
    if (schema != kCertificateSchema)
        throw InputError("/schema_version", "unsupported schema version " + std::to_string(schema));
    CertificateDocument doc;
    doc.model = model_spec_from_json(field(j, "model", ""), "/model");
    doc.coeffs = coeffs_from_json(field(j, "coeffs", ""), doc.model.dim, "/coeffs");
    if (j.contains("coeffs2")) doc.coeffs2 = coeffs_from_json(j.at("coeffs2"), doc.model.dim, "/coeffs2");
    auto& c = doc.cert;
    const auto& mode = field(j, "mode", "");
    if (mode == "symmetric") {
        c.mode = CycleMode::symmetric;
    } else if (mode == "general") {
        c.mode = CycleMode::general;
    } else {
        throw InputError("/mode", "expected \"symmetric\" or \"general\"");
    }
    if (c.mode == CycleMode::general && !doc.coeffs2) throw InputError("/coeffs2", "general certificate needs coeffs2");
    c.k = read_int(field(j, "k", ""), "/k");
    c.m = read_int(field(j, "m", ""), "/m");
    c.branch = j.contains("branch") ? read_int(j.at("branch"), "/branch") : 1;
    c.s_target = number_or(j, "s_target", 0.0, "");
    const auto& par = field(j, "parameters", "");
    expect_object(par, "/parameters", {"mu", "mu2", "mu_shift", "gamma", "lambda", "theta"});
    c.mu = read_number(field(par, "mu", "/parameters"), "/parameters/mu");
    c.mu2 = number_or(par, "mu2", c.mu, "/parameters");
    c.mu_shift = par.contains("mu_shift") && par.at("mu_shift").is_boolean() && par.at("mu_shift").get<bool>();
    c.gamma = read_number(field(par, "gamma", "/parameters"), "/parameters/gamma");
    c.lambda = number_or(par, "lambda", doc.model.multipliers.lambda, "/parameters");
    c.theta = read_number(field(par, "theta", "/parameters"), "/parameters/theta");
    c.orbit = orbit_from_json(field(j, "orbit", ""), "/orbit");
    if (c.orbit.k != c.k || c.orbit.m != c.m) throw InputError("/orbit", "itinerary differs from the certificate's");
    if (j.contains("index_evidence")) c.index_evidence = read_complex_list(j.at("index_evidence"), "/index_evidence");
    if (j.contains("index")) c.index = read_int(j.at("index"), "/index");
    const auto& td = field(j, "theta_decomposition", "");
    c.theta_decomposition.m_over_k = number_or(td, "m_over_k", 0.0, "/theta_decomposition");
    c.theta_decomposition.c_star =
        read_number(field(td, "c_star", "/theta_decomposition"), "/theta_decomposition/c_star");
    c.theta_decomposition.theta_predicted = number_or(td, "theta_predicted", 0.0, "/theta_decomposition");
    c.theta_decomposition.c_star_reference = number_or(td, "c_star_reference", 0.0, "/theta_decomposition");
    if (j.contains("index2")) {
        const auto& q = j.at("index2");
        const std::string p = "/index2";
        c.index2.s = number_or(q, "s", 0.0, p);
        c.index2.s_measured = number_or(q, "s_measured", 0.0, p);
        c.index2.trace_measured = number_or(q, "trace_measured", 0.0, p);
        c.index2.det_measured = number_or(q, "det_measured", 0.0, p);
        c.index2.trace_predicted = number_or(q, "trace_predicted", 0.0, p);
        c.index2.det_predicted = number_or(q, "det_predicted", 0.0, p);
        c.index2.match = q.contains("match") && q.at("match").is_boolean() && q.at("match").get<bool>();
        c.index2.index = c.index;
    }
    if (j.contains("quasi_connection")) {
        const auto& q = j.at("quasi_connection");
        const std::string p = "/quasi_connection";
        c.quasi.t_param = number_or(q, "t_param", 0.0, p);
        c.quasi.gap = number_or(q, "gap", 0.0, p);
        c.quasi.curve_point = vec_or(q, "curve_point", p);
        c.quasi.leaf_point = vec_or(q, "leaf_point", p);
    }
    if (j.contains("transverse_connection")) {
        const auto& t = j.at("transverse_connection");
        const std::string p = "/transverse_connection";
        TransverseWitness w;
        w.iterations_used = t.contains("iterations_used") ? read_int(t.at("iterations_used"), p + "/iterations_used") : 0;
        w.iteration_bound = t.contains("iteration_bound") ? read_int(t.at("iteration_bound"), p + "/iteration_bound") : 0;
        w.crossing_point = vec_or(t, "crossing_point", p);
        w.slope = number_or(t, "slope", 0.0, p);
        w.area_factor = number_or(t, "area_factor", 0.0, p);
        w.predicted_area_factor = number_or(t, "predicted_area_factor", 0.0, p);
        w.curve_points = t.contains("curve_points") ? read_int(t.at("curve_points"), p + "/curve_points") : 0;
        c.transverse = w;
    }
    c.product = number_or(j, "product", 0.0, "");
    c.product_reference = number_or(j, "product_reference", 0.0, "");
    if (j.contains("solver")) {
        const auto& sv = j.at("solver");
        c.joint_residual = number_or(sv, "joint_residual", 0.0, "/solver");
        c.newton_iterations = sv.contains("newton_iterations") ? read_int(sv.at("newton_iterations"), "/solver/newton_iterations") : 0;
        c.seed = vec_or(sv, "seed", "/solver");
    }
    if (j.contains("checks")) {
        for (std::size_t i = 0; i < j.at("checks").size(); ++i) {
            const auto& e = j.at("checks")[i];
            const auto p = "/checks/" + std::to_string(i);
            CertificateCheck ch;
            ch.name = field(e, "name", p).get<std::string>();
            ch.value = nan_read(field(e, "value", p), p + "/value");
            ch.tolerance = number_or(e, "tolerance", 0.0, p);
            ch.pass = e.contains("pass") && e.at("pass").is_boolean() && e.at("pass").get<bool>();
            doc.checks.push_back(std::move(ch));
        }
    }
    return doc;
}

Json to_json(const TangencyBranch& t) {
    Json tp = Json::array();
    for (const auto& p : t.transverse_points)
        tp.push_back(Json{{"K", p.K}, {"t", p.t}, {"preimage", to_json(p.preimage)}, {"slope", p.slope}});
    return Json{{"k", t.k},
                {"branch", t.branch},
                {"stage", t.stage},
                {"mu_k", t.mu_k},
                {"X", t.X},
                {"Y", t.Y},
                {"t", t.t},
                {"c_sign", t.c_sign},
                {"c_value", t.c_value},
                {"case", to_string(t.case_tag)},
                {"straddle_ok", t.straddle_ok},
                {"residual", t.residual},
                {"model_residual", t.model_residual},
                {"tangency_point", to_json(t.tangency_point)},
                {"transverse_points", tp}};
}

Json to_json(const FlowExponents& e) {
    Json strong = Json::array();
    for (double a : e.alpha_strong) strong.push_back(a);
    return Json{{"beta", e.beta}, {"alpha", e.alpha}, {"alpha_strong", strong}};
}

Json to_json(const C3PrimeCheck& c) {
    return Json{{"ok", c.ok}, {"strong_margin", c.strong_margin}, {"weak_margin", c.weak_margin}};
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    return fmt::format("{}", v);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row(const std::vector<std::string>& cells) {
    if (cells.size() != header_.size()) throw ContractError("csv row width differs from the header");
    rows_.push_back(cells);
    return *this;
}

std::string CsvTable::str() const {
    std::string out;
    const auto line = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
}

}  // namespace hetdim
