#include "nlmarkov/scenario.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "nlmarkov/error.hpp"
#include "nlmarkov/measures.hpp"
#include "nlmarkov/oracles.hpp"
#include "nlmarkov/sensitivity.hpp"

namespace nlmarkov {

namespace {

using json = nlohmann::json;

// ---- parsing helpers -------------------------------------------------------

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(where, "expected an object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError(where.empty() ? key : where + "." + key, "unknown field");
    }
}

std::string join(const std::string& where, const std::string& key) { return where.empty() ? key : where + "." + key; }

double number(const json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError(where, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ConfigError(where, "must be finite");
    return v;
}

template <class T>
std::optional<T> opt(const json& j, const std::string& key, const std::string& where);

template <>
std::optional<double> opt(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) return std::nullopt;
    return number(j.at(key), join(where, key));
}

template <>
std::optional<bool> opt(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) return std::nullopt;
    if (!j.at(key).is_boolean()) throw ConfigError(join(where, key), "expected true or false");
    return j.at(key).get<bool>();
}

template <>
std::optional<std::string> opt(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) return std::nullopt;
    if (!j.at(key).is_string()) throw ConfigError(join(where, key), "expected a string");
    return j.at(key).get<std::string>();
}

template <>
std::optional<std::size_t> opt(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) return std::nullopt;
    const json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(join(where, key), "expected a non-negative integer");
    return static_cast<std::size_t>(v.get<long long>());
}

template <>
std::optional<std::vector<double>> opt(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) return std::nullopt;
    const json& v = j.at(key);
    const std::string w = join(where, key);
    if (!v.is_array()) throw ConfigError(w, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], w + "[" + std::to_string(i) + "]"));
    return out;
}

template <class T>
T req(const json& j, const std::string& key, const std::string& where) {
    auto v = opt<T>(j, key, where);
    if (!v) throw ConfigError(join(where, key), "required field is missing");
    return *v;
}

const json& obj(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(join(where, key), "required field is missing");
    return j.at(key);
}

Affine parse_affine(const json& j, const std::string& where) {
    if (j.is_number()) return Affine{number(j, where), {}, {}, {}};
    check_keys(j, where, {"constant", "weights", "alpha_scaled", "time"});
    Affine a{opt<double>(j, "constant", where), opt<std::vector<double>>(j, "weights", where),
             opt<bool>(j, "alpha_scaled", where), opt<std::string>(j, "time", where)};
    if (a.time && *a.time != "none" && *a.time != "sin" && *a.time != "cos" && *a.time != "linear") {
        throw ConfigError(join(where, "time"), "must be none, sin, cos or linear");
    }
    return a;
}

// Canonical forms: a bare number for a constant, a bare string for an unscaled
// moment, a number for a 1-d displacement.
json dump_affine(const Affine& a) {
    if (a.constant && !a.weights && !a.alpha_scaled && !a.time) return *a.constant;
    json j = json::object();
    if (a.constant) j["constant"] = *a.constant;
    if (a.weights) j["weights"] = *a.weights;
    if (a.alpha_scaled) j["alpha_scaled"] = *a.alpha_scaled;
    if (a.time) j["time"] = *a.time;
    return j;
}

std::array<double, 2> parse_point(const json& j, const std::string& where) {
    if (j.is_number()) return {number(j, where), 0.0};
    if (j.is_array() && (j.size() == 1 || j.size() == 2)) {
        return {number(j[0], where + "[0]"), j.size() == 2 ? number(j[1], where + "[1]") : 0.0};
    }
    throw ConfigError(where, "expected a number or [y0, y1]");
}

const std::set<std::string> kMomentKinds{"one", "x", "x2", "y", "sin", "cos"};
const std::set<std::string> kPresets{"meanfield_drift", "heat",         "compound_poisson", "lattice_jumps",
                                     "interacting_poisson", "checker_pass", "heavy_tail"};

FamilySpec parse_family(const json& j, const std::string& where) {
    check_keys(j, where,
               {"kind", "preset", "params", "name", "alpha", "moments", "G", "b", "drift", "drift_x", "jumps", "tail",
                "jump_radius"});
    FamilySpec f;
    f.kind = req<std::string>(j, "kind", where);
    if (f.kind != "levy" && f.kind != "order_one") throw ConfigError(join(where, "kind"), "must be levy or order_one");
    f.preset = opt<std::string>(j, "preset", where);
    if (f.preset && !kPresets.count(*f.preset)) throw ConfigError(join(where, "preset"), "unknown preset '" + *f.preset + "'");
    if (j.contains("params")) {
        const json& p = j.at("params");
        if (!p.is_object()) throw ConfigError(join(where, "params"), "expected an object of numbers");
        std::map<std::string, double> params;
        for (const auto& [k, v] : p.items()) params[k] = number(v, join(where, "params." + k));
        f.params = params;
    }
    f.name = opt<std::string>(j, "name", where);
    f.alpha = opt<double>(j, "alpha", where);
    if (j.contains("moments")) {
        const json& m = j.at("moments");
        const std::string w = join(where, "moments");
        if (!m.is_array()) throw ConfigError(w, "expected an array");
        std::vector<MomentSpec> moments;
        for (std::size_t i = 0; i < m.size(); ++i) {
            const std::string wi = w + "[" + std::to_string(i) + "]";
            MomentSpec ms;
            if (m[i].is_string()) {
                ms.kind = m[i].get<std::string>();
            } else {
                check_keys(m[i], wi, {"kind", "scale", "shift"});
                ms.kind = req<std::string>(m[i], "kind", wi);
                ms.scale = opt<double>(m[i], "scale", wi);
                ms.shift = opt<double>(m[i], "shift", wi);
            }
            if (!kMomentKinds.count(ms.kind)) throw ConfigError(wi, "unknown moment kind '" + ms.kind + "'");
            moments.push_back(ms);
        }
        f.moments = moments;
    }
    if (j.contains("G")) f.g = parse_affine(j.at("G"), join(where, "G"));
    if (j.contains("b")) {
        const json& b = j.at("b");
        const std::string w = join(where, "b");
        std::vector<Affine> bs;
        if (b.is_array()) {
            for (std::size_t i = 0; i < b.size(); ++i) bs.push_back(parse_affine(b[i], w + "[" + std::to_string(i) + "]"));
        } else {
            bs.push_back(parse_affine(b, w));
        }
        f.b = bs;
    }
    if (j.contains("drift")) f.drift = parse_affine(j.at("drift"), join(where, "drift"));
    if (j.contains("drift_x")) f.drift_x = parse_affine(j.at("drift_x"), join(where, "drift_x"));
    if (j.contains("jumps")) {
        const json& js = j.at("jumps");
        const std::string w = join(where, "jumps");
        if (!js.is_array()) throw ConfigError(w, "expected an array");
        std::vector<AtomSpec> atoms;
        for (std::size_t i = 0; i < js.size(); ++i) {
            const std::string wi = w + "[" + std::to_string(i) + "]";
            check_keys(js[i], wi, {"y", "rate"});
            atoms.push_back({parse_point(obj(js[i], "y", wi), wi + ".y"), parse_affine(obj(js[i], "rate", wi), wi + ".rate")});
        }
        f.jumps = atoms;
    }
    if (j.contains("tail")) {
        const json& t = j.at("tail");
        const std::string w = join(where, "tail");
        check_keys(t, w, {"exponent", "scale", "from"});
        f.tail = TailSpec{req<double>(t, "exponent", w), req<double>(t, "scale", w), req<double>(t, "from", w)};
        if (!(f.tail->exponent > 0) || f.tail->scale < 0 || !(f.tail->from > 0)) {
            throw ConfigError(w, "needs exponent > 0, scale >= 0, from > 0");
        }
    }
    f.jump_radius = opt<double>(j, "jump_radius", where);
    if (f.jump_radius && *f.jump_radius < 0) throw ConfigError(join(where, "jump_radius"), "must be >= 0");
    if (f.kind == "levy" && (f.drift || f.drift_x || f.tail)) {
        throw ConfigError(where, "drift, drift_x and tail belong to order_one families");
    }
    if (f.kind == "order_one" && (f.g || f.b)) throw ConfigError(where, "G and b belong to levy families");
    return f;
}

json dump_family(const FamilySpec& f) {
    json j = {{"kind", f.kind}};
    if (f.preset) j["preset"] = *f.preset;
    if (f.params) j["params"] = *f.params;
    if (f.name) j["name"] = *f.name;
    if (f.alpha) j["alpha"] = *f.alpha;
    if (f.moments) {
        json m = json::array();
        for (const MomentSpec& ms : *f.moments) {
            if (!ms.scale && !ms.shift) {
                m.push_back(ms.kind);
                continue;
            }
            json e = {{"kind", ms.kind}};
            if (ms.scale) e["scale"] = *ms.scale;
            if (ms.shift) e["shift"] = *ms.shift;
            m.push_back(e);
        }
        j["moments"] = m;
    }
    if (f.g) j["G"] = dump_affine(*f.g);
    if (f.b) {
        json b = json::array();
        for (const Affine& a : *f.b) b.push_back(dump_affine(a));
        j["b"] = b;
    }
    if (f.drift) j["drift"] = dump_affine(*f.drift);
    if (f.drift_x) j["drift_x"] = dump_affine(*f.drift_x);
    if (f.jumps) {
        json js = json::array();
        for (const AtomSpec& a : *f.jumps) js.push_back({{"y", a.y[1] == 0.0 ? json(a.y[0]) : json({a.y[0], a.y[1]})}, {"rate", dump_affine(a.rate)}});
        j["jumps"] = js;
    }
    if (f.tail) j["tail"] = {{"exponent", f.tail->exponent}, {"scale", f.tail->scale}, {"from", f.tail->from}};
    if (f.jump_radius) j["jump_radius"] = *f.jump_radius;
    return j;
}

const std::set<std::string> kInitialKinds{"gaussian", "dirac", "dipole", "histogram"};

InitialSpec parse_initial(const json& j, const std::string& where) {
    check_keys(j, where, {"kind", "mean", "stddev", "x", "width", "path"});
    InitialSpec s;
    s.kind = req<std::string>(j, "kind", where);
    if (!kInitialKinds.count(s.kind)) throw ConfigError(join(where, "kind"), "must be gaussian, dirac, dipole or histogram");
    s.mean = opt<double>(j, "mean", where);
    s.stddev = opt<double>(j, "stddev", where);
    s.x = opt<double>(j, "x", where);
    s.width = opt<double>(j, "width", where);
    s.path = opt<std::string>(j, "path", where);
    if (s.kind == "gaussian") {
        if (!s.mean) throw ConfigError(join(where, "mean"), "required field is missing");
        if (!s.stddev || !(*s.stddev > 0)) throw ConfigError(join(where, "stddev"), "must be present and positive");
    } else if (s.kind == "dirac" || s.kind == "dipole") {
        if (!s.x) throw ConfigError(join(where, "x"), "required field is missing");
        if (s.kind == "dipole" && (!s.width || !(*s.width > 0))) {
            throw ConfigError(join(where, "width"), "must be present and positive");
        }
    } else if (!s.path) {
        throw ConfigError(join(where, "path"), "required field is missing");
    }
    return s;
}

json dump_initial(const InitialSpec& s) {
    json j = {{"kind", s.kind}};
    if (s.mean) j["mean"] = *s.mean;
    if (s.stddev) j["stddev"] = *s.stddev;
    if (s.x) j["x"] = *s.x;
    if (s.width) j["width"] = *s.width;
    if (s.path) j["path"] = *s.path;
    return j;
}

void positive(const std::optional<double>& v, const std::string& where) {
    if (v && !(*v > 0)) throw ConfigError(where, "must be positive");
}

double time_factor(const std::optional<std::string>& kind, double t) {
    if (!kind || *kind == "none") return 1.0;
    if (*kind == "sin") return std::sin(t);
    if (*kind == "cos") return std::cos(t);
    return t;
}

double param(const std::map<std::string, double>& p, const std::string& key, double fallback) {
    const auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

Affine constant(double v) { return Affine{v, {}, {}, {}}; }

// Sentinel derivative index meaning "the value itself".
constexpr int kValue = std::numeric_limits<int>::min();

}  // namespace

// ---- spec types ------------------------------------------------------------

Grid GridSpec::build() const { return Grid(lower, upper, n, dim.value_or(1)); }

MomentFn MomentSpec::build() const {
    const double a = scale.value_or(1.0);
    const double s = shift.value_or(0.0);
    if (kind == "one") return [a, s](double, double) { return a + s; };
    if (kind == "x") return [a, s](double x, double) { return a * x + s; };
    if (kind == "x2") return [a, s](double x, double) { return a * x * x + s; };
    if (kind == "y") return [a, s](double, double y) { return a * y + s; };
    if (kind == "sin") return [a, s](double x, double) { return a * std::sin(x) + s; };
    if (kind == "cos") return [a, s](double x, double) { return a * std::cos(x) + s; };
    throw ConfigError("moments", "unknown moment kind '" + kind + "'");
}

double Affine::value(const Vector& c, double alpha, double t) const {
    double v = constant.value_or(0.0);
    if (weights) {
        if (static_cast<Eigen::Index>(weights->size()) > c.size()) throw ConfigError("weights", "more weights than moments");
        for (std::size_t j = 0; j < weights->size(); ++j) v += (*weights)[j] * c[static_cast<Eigen::Index>(j)];
    }
    if (alpha_scaled.value_or(false)) v *= alpha;
    return v * time_factor(time, t);
}

double Affine::partial(const Vector& c, double alpha, double t, int j) const {
    const double m = time_factor(time, t);
    const bool scaled = alpha_scaled.value_or(false);
    if (j == kAlpha) {
        if (!scaled) return 0.0;
        Affine base = *this;
        base.alpha_scaled = false;
        return base.value(c, alpha, t);
    }
    if (!weights || j < 0 || static_cast<std::size_t>(j) >= weights->size()) return 0.0;
    return (*weights)[static_cast<std::size_t>(j)] * (scaled ? alpha : 1.0) * m;
}

// ---- scenario I/O ----------------------------------------------------------

Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<document>", std::string("invalid JSON: ") + e.what());
    }
    check_keys(j, "", {"schema", "name", "grid", "family", "initial", "horizon", "delta", "tolerances", "seed", "outputs",
                       "sensitivity", "compare"});
    Scenario s;
    s.base_dir = base_dir;
    s.schema = req<std::string>(j, "schema", "");
    if (s.schema != kScenarioSchema) throw ConfigError("schema", "expected '" + std::string(kScenarioSchema) + "'");
    s.name = req<std::string>(j, "name", "");

    const json& g = obj(j, "grid", "");
    check_keys(g, "grid", {"lower", "upper", "n", "dim"});
    s.grid.lower = req<double>(g, "lower", "grid");
    s.grid.upper = req<double>(g, "upper", "grid");
    s.grid.n = req<std::size_t>(g, "n", "grid");
    if (g.contains("dim")) s.grid.dim = static_cast<int>(req<std::size_t>(g, "dim", "grid"));
    if (!(s.grid.upper > s.grid.lower)) throw ConfigError("grid.upper", "must exceed grid.lower");
    if (s.grid.n < 8) throw ConfigError("grid.n", "must be at least 8");
    if (s.grid.dim && *s.grid.dim != 1 && *s.grid.dim != 2) throw ConfigError("grid.dim", "must be 1 or 2");

    s.family = parse_family(obj(j, "family", ""), "family");
    s.initial = parse_initial(obj(j, "initial", ""), "initial");
    if (s.initial.kind == "dipole") throw ConfigError("initial.kind", "the initial law must be a probability measure");
    s.horizon = req<double>(j, "horizon", "");
    if (!(s.horizon > 0)) throw ConfigError("horizon", "must be positive");
    s.delta = req<double>(j, "delta", "");
    if (!(s.delta > 0)) throw ConfigError("delta", "must be positive");
    if (s.delta > s.horizon) throw ConfigError("delta", "must not exceed the horizon");

    if (j.contains("tolerances")) {
        const json& t = j.at("tolerances");
        check_keys(t, "tolerances", {"solver", "checker_eps", "lipschitz_cap"});
        s.tolerances = Tolerances{opt<double>(t, "solver", "tolerances"), opt<double>(t, "checker_eps", "tolerances"),
                                  opt<double>(t, "lipschitz_cap", "tolerances")};
        positive(s.tolerances->solver, "tolerances.solver");
        positive(s.tolerances->checker_eps, "tolerances.checker_eps");
        positive(s.tolerances->lipschitz_cap, "tolerances.lipschitz_cap");
    }
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
        s.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("outputs")) {
        const json& o = j.at("outputs");
        check_keys(o, "outputs", {"output_every", "particles", "particle_count", "particle_snapshots"});
        s.outputs = Outputs{opt<std::size_t>(o, "output_every", "outputs"), opt<bool>(o, "particles", "outputs"),
                            opt<std::size_t>(o, "particle_count", "outputs"),
                            opt<bool>(o, "particle_snapshots", "outputs")};
        if (s.outputs->output_every && *s.outputs->output_every == 0) {
            throw ConfigError("outputs.output_every", "must be at least 1");
        }
        if (s.outputs->particle_count && *s.outputs->particle_count == 0) {
            throw ConfigError("outputs.particle_count", "must be at least 1");
        }
    }
    if (j.contains("sensitivity")) {
        const json& t = j.at("sensitivity");
        check_keys(t, "sensitivity", {"alpha", "xi0", "h_list", "sample_times"});
        SensitivitySpec ss;
        ss.alpha = opt<double>(t, "alpha", "sensitivity");
        if (t.contains("xi0")) ss.xi0 = parse_initial(t.at("xi0"), "sensitivity.xi0");
        ss.h_list = opt<std::vector<double>>(t, "h_list", "sensitivity");
        ss.sample_times = opt<std::vector<double>>(t, "sample_times", "sensitivity");
        if (ss.h_list) {
            for (std::size_t i = 0; i < ss.h_list->size(); ++i) {
                if (!((*ss.h_list)[i] > 0) || (i > 0 && !((*ss.h_list)[i] < (*ss.h_list)[i - 1]))) {
                    throw ConfigError("sensitivity.h_list", "must be positive and decreasing");
                }
            }
        }
        s.sensitivity = ss;
    }
    if (j.contains("compare")) {
        const json& c = j.at("compare");
        check_keys(c, "compare", {"family_b", "initial_b", "sample_times"});
        CompareSpec cs{parse_family(obj(c, "family_b", "compare"), "compare.family_b"), {}, {}};
        if (c.contains("initial_b")) cs.initial_b = parse_initial(c.at("initial_b"), "compare.initial_b");
        cs.sample_times = opt<std::vector<double>>(c, "sample_times", "compare");
        s.compare = cs;
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path.parent_path());
}

std::string to_json(const Scenario& s) {
    json j = {{"schema", s.schema}, {"name", s.name}};
    json g = {{"lower", s.grid.lower}, {"upper", s.grid.upper}, {"n", s.grid.n}};
    if (s.grid.dim) g["dim"] = *s.grid.dim;
    j["grid"] = g;
    j["family"] = dump_family(s.family);
    j["initial"] = dump_initial(s.initial);
    j["horizon"] = s.horizon;
    j["delta"] = s.delta;
    if (s.tolerances) {
        json t = json::object();
        if (s.tolerances->solver) t["solver"] = *s.tolerances->solver;
        if (s.tolerances->checker_eps) t["checker_eps"] = *s.tolerances->checker_eps;
        if (s.tolerances->lipschitz_cap) t["lipschitz_cap"] = *s.tolerances->lipschitz_cap;
        j["tolerances"] = t;
    }
    if (s.seed) j["seed"] = *s.seed;
    if (s.outputs) {
        json o = json::object();
        if (s.outputs->output_every) o["output_every"] = *s.outputs->output_every;
        if (s.outputs->particles) o["particles"] = *s.outputs->particles;
        if (s.outputs->particle_count) o["particle_count"] = *s.outputs->particle_count;
        if (s.outputs->particle_snapshots) o["particle_snapshots"] = *s.outputs->particle_snapshots;
        j["outputs"] = o;
    }
    if (s.sensitivity) {
        json t = json::object();
        if (s.sensitivity->alpha) t["alpha"] = *s.sensitivity->alpha;
        if (s.sensitivity->xi0) t["xi0"] = dump_initial(*s.sensitivity->xi0);
        if (s.sensitivity->h_list) t["h_list"] = *s.sensitivity->h_list;
        if (s.sensitivity->sample_times) t["sample_times"] = *s.sensitivity->sample_times;
        j["sensitivity"] = t;
    }
    if (s.compare) {
        json c = {{"family_b", dump_family(s.compare->family_b)}};
        if (s.compare->initial_b) c["initial_b"] = dump_initial(*s.compare->initial_b);
        if (s.compare->sample_times) c["sample_times"] = *s.compare->sample_times;
        j["compare"] = c;
    }
    return j.dump(2);
}

// ---- families --------------------------------------------------------------

FamilySpec expand_preset(const FamilySpec& spec) {
    if (!spec.preset) return spec;
    const std::map<std::string, double> p = spec.params.value_or(std::map<std::string, double>{});
    FamilySpec f;
    f.kind = spec.kind;
    f.name = spec.name ? spec.name : spec.preset;
    f.alpha = spec.alpha;
    const std::string& name = *spec.preset;
    auto need_kind = [&](const char* kind) {
        if (spec.kind != kind) throw ConfigError("family.kind", "preset '" + name + "' is a " + kind + " family");
    };
    if (name == "meanfield_drift") {
        // b = -alpha * pair(x, mu).
        need_kind("levy");
        f.moments = std::vector<MomentSpec>{{"x", {}, {}}};
        f.g = constant(param(p, "G", 0.02));
        f.b = std::vector<Affine>{{{}, std::vector<double>{-param(p, "rate", 1.0)}, true, {}}};
    } else if (name == "heat") {
        need_kind("levy");
        f.g = constant(param(p, "G", 1.0));
        f.b = std::vector<Affine>{constant(param(p, "b", 0.0))};
    } else if (name == "compound_poisson") {
        need_kind("levy");
        f.g = constant(0.0);
        f.b = std::vector<Affine>{constant(0.0)};
        f.jumps = std::vector<AtomSpec>{{{param(p, "y", 1.0), 0.0}, constant(param(p, "lambda", 0.5))}};
    } else if (name == "lattice_jumps") {
        need_kind("levy");
        const double y = param(p, "y", 0.5);
        const double rate = param(p, "rate", 1.0);
        f.g = constant(0.0);
        f.b = std::vector<Affine>{constant(0.0)};
        f.jumps = std::vector<AtomSpec>{{{y, 0.0}, constant(rate)}, {{-y, 0.0}, constant(rate)}};
    } else if (name == "interacting_poisson") {
        // nu(mu) = lambda * pair(beta - x, mu) * delta_{y0}.
        need_kind("order_one");
        const double y0 = param(p, "y0", 2.0);
        f.moments = std::vector<MomentSpec>{{"x", -1.0, param(p, "beta", 16.0)}};
        f.jumps = std::vector<AtomSpec>{{{y0, 0.0}, {{}, std::vector<double>{param(p, "lambda", 0.01)}, {}, {}}}};
        f.jump_radius = param(p, "jump_radius", 2.0 * y0);
    } else if (name == "checker_pass" || name == "heavy_tail") {
        // b = pair(phi, mu) with phi = 0.5 sin, a functional of unit C^1 norm.
        need_kind("order_one");
        f.moments = std::vector<MomentSpec>{{"sin", 0.5, {}}};
        f.drift = Affine{{}, std::vector<double>{1.0}, {}, {}};
        f.jump_radius = param(p, "jump_radius", 2.0);
        if (name == "checker_pass") {
            const double rate = param(p, "rate", 0.2);
            f.jumps = std::vector<AtomSpec>{{{0.5, 0.0}, constant(rate)},
                                            {{-0.5, 0.0}, constant(rate)},
                                            {{1.0, 0.0}, constant(0.5 * rate)},
                                            {{-1.0, 0.0}, constant(0.5 * rate)}};
        } else {
            f.tail = TailSpec{param(p, "exponent", 0.5), param(p, "scale", 0.1), param(p, "from", 0.5)};
        }
    }
    return f;
}

Family build_family(const FamilySpec& raw, const Grid& grid) {
    const FamilySpec spec = expand_preset(raw);
    std::vector<MomentFn> moments;
    if (spec.moments) {
        for (const MomentSpec& m : *spec.moments) moments.push_back(m.build());
    }
    const std::size_t nm = moments.size();
    auto check_weights = [&](const Affine& a, const std::string& where) {
        if (a.weights && a.weights->size() > nm) throw ConfigError(where, "more weights than moment functionals");
    };
    const std::string name = spec.name.value_or(spec.kind);
    const double alpha = spec.alpha.value_or(1.0);

    if (spec.kind == "levy") {
        const int dim = grid.dim();
        const Affine g = spec.g.value_or(constant(0.0));
        std::vector<Affine> b = spec.b.value_or(std::vector<Affine>(static_cast<std::size_t>(dim), constant(0.0)));
        if (b.size() != static_cast<std::size_t>(dim)) throw ConfigError("family.b", "needs one entry per dimension");
        const std::vector<AtomSpec> atoms = spec.jumps.value_or(std::vector<AtomSpec>{});
        check_weights(g, "family.G");
        for (const Affine& a : b) check_weights(a, "family.b");
        for (const AtomSpec& a : atoms) {
            check_weights(a.rate, "family.jumps");
            if (dim == 1 && a.y[1] != 0.0) throw ConfigError("family.jumps", "2-d atom on a 1-d grid");
        }
        auto eval = [=](const Vector& c, double al, double t, int j) {
            auto f = [&](const Affine& a) { return j == kValue ? a.value(c, al, t) : a.partial(c, al, t, j); };
            LevyCoefficients out{f(g) * Matrix::Identity(dim, dim), Vector(dim), {}};
            for (int i = 0; i < dim; ++i) out.b[i] = f(b[static_cast<std::size_t>(i)]);
            for (const AtomSpec& a : atoms) out.nu.push_back({a.y, f(a.rate)});
            return out;
        };
        LevyFamily fam;
        fam.name = name;
        fam.dim = dim;
        fam.moments = moments;
        fam.alpha = alpha;
        fam.coefficients = [eval](const Vector& c, double al, double t) { return eval(c, al, t, kValue); };
        fam.derivative = [eval](const Vector& c, double al, double t, int j) { return eval(c, al, t, j); };
        return fam;
    }

    if (grid.dim() != 1) throw ConfigError("grid.dim", "order_one families live on 1-d grids");
    const Affine drift = spec.drift.value_or(constant(0.0));
    const Affine drift_x = spec.drift_x.value_or(constant(0.0));
    check_weights(drift, "family.drift");
    check_weights(drift_x, "family.drift_x");
    std::vector<AtomSpec> atoms = spec.jumps.value_or(std::vector<AtomSpec>{});
    for (const AtomSpec& a : atoms) check_weights(a.rate, "family.jumps");
    if (spec.tail) {
        const double h = grid.spacing();
        const double width = grid.upper() - grid.lower();
        for (std::size_t k = 1; static_cast<double>(k) * h < width; ++k) {
            const double y = static_cast<double>(k) * h;
            if (y < spec.tail->from) continue;
            const double rate = spec.tail->scale * std::pow(y, -1.0 - spec.tail->exponent) * h;
            atoms.push_back({{y, 0.0}, constant(rate)});
            atoms.push_back({{-y, 0.0}, constant(rate)});
        }
    }
    OrderOneFamily fam;
    fam.name = name;
    fam.moments = moments;
    fam.alpha = alpha;
    fam.jump_radius = spec.jump_radius.value_or(0.0);
    fam.drift = [drift, drift_x](double x, const Vector& c, double al, double t) {
        return drift.value(c, al, t) + drift_x.value(c, al, t) * x;
    };
    fam.drift_derivative = [drift, drift_x](double x, const Vector& c, double al, double t, int j) {
        return drift.partial(c, al, t, j) + drift_x.partial(c, al, t, j) * x;
    };
    if (!atoms.empty()) {
        fam.jumps = [atoms](double, const Vector& c, double al, double t) {
            std::vector<Jump> out;
            out.reserve(atoms.size());
            for (const AtomSpec& a : atoms) out.push_back({a.y, a.rate.value(c, al, t)});
            return out;
        };
    }
    fam.jumps_derivative = [atoms](double, const Vector& c, double al, double t, int j) {
        std::vector<Jump> out;
        out.reserve(atoms.size());
        for (const AtomSpec& a : atoms) out.push_back({a.y, a.rate.partial(c, al, t, j)});
        return out;
    };
    return fam;
}

GridMeasure build_initial(const InitialSpec& spec, const Grid& grid, const std::filesystem::path& base_dir) {
    if (spec.kind == "gaussian") return GridMeasure::gaussian(grid, *spec.mean, *spec.stddev);
    if (spec.kind == "dirac") return GridMeasure::dirac(grid, *spec.x);
    if (spec.kind == "dipole") {
        // (delta_{x + w} - delta_x) / w on nodes: zero mass, first moment 1.
        GridMeasure a = GridMeasure::dirac(grid, *spec.x);
        GridMeasure b = GridMeasure::dirac(grid, *spec.x + *spec.width);
        Eigen::Index ia, ib;
        a.weights.maxCoeff(&ia);
        b.weights.maxCoeff(&ib);
        const double w = grid.coordinate(static_cast<std::size_t>(ib)) - grid.coordinate(static_cast<std::size_t>(ia));
        if (ia == ib) throw ConfigError("dipole.width", "shorter than the grid spacing");
        return {grid, (b.weights - a.weights) / w};
    }
    std::filesystem::path p = *spec.path;
    if (p.is_relative()) p = base_dir / p;
    try {
        return read_measure_csv(p.string(), grid);
    } catch (const Error& e) {
        throw ConfigError("initial.path", e.what());
    }
}

SolverOptions solver_options(const Scenario& s) {
    SolverOptions o;
    if (s.tolerances && s.tolerances->solver) o.tol = *s.tolerances->solver;
    return o;
}

std::vector<GridMeasure> checker_samples(const GridMeasure& mu0) {
    const Grid& g = mu0.grid;
    const double w = g.upper() - g.lower();
    const double mid = 0.5 * (g.lower() + g.upper());
    return {mu0, GridMeasure::gaussian(g, mid, w / 16.0), GridMeasure::gaussian(g, mid - w / 8.0, w / 32.0),
            GridMeasure::gaussian(g, mid + w / 8.0, w / 24.0)};
}

std::string checker_report_json(const OrderOneReport& r) {
    const json j = {{"boundedness", r.boundedness},
                    {"gradient_boundedness", r.gradient_boundedness},
                    {"jump_radius", r.jump_radius},
                    {"tightness_k", r.tightness_k},
                    {"tail_at_largest_k", r.tail_at_largest_k},
                    {"gradient_tail_at_largest_k", r.gradient_tail_at_largest_k},
                    {"small_ball", r.small_ball},
                    {"lipschitz_nu", r.lipschitz_nu},
                    {"lipschitz_b", r.lipschitz_b},
                    {"boundedness_pass", r.boundedness_pass},
                    {"tightness_pass", r.tightness_pass},
                    {"lipschitz_pass", r.lipschitz_pass}};
    return j.dump(2);
}

// ---- command drivers -------------------------------------------------------

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text << '\n';
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    return out;
}

std::vector<double> default_samples(const Scenario& s) {
    const Partition part = Partition::with_step(0.0, s.horizon, s.delta);
    std::vector<double> t;
    const std::size_t steps = part.steps();
    for (std::size_t k = 1; k <= 4; ++k) t.push_back(part.node(k * steps / 4));
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

// Runs the hypothesis checker on order-one families; returns false (and writes the report) on failure.
bool check_hypotheses(const Scenario& s, const Family& family, const GridMeasure& mu0,
                      const std::filesystem::path& out_dir) {
    const auto* of = std::get_if<OrderOneFamily>(&family);
    if (of == nullptr) return true;
    OrderOneCheckOptions o;
    double eps = 1e-3;
    if (s.tolerances) {
        if (s.tolerances->checker_eps) eps = *s.tolerances->checker_eps;
        if (s.tolerances->lipschitz_cap) o.lipschitz_cap = *s.tolerances->lipschitz_cap;
    }
    const OrderOneReport rep = validate_order_one_conditions(*of, eps, checker_samples(mu0), o);
    write_text(out_dir / "checker.json", checker_report_json(rep));
    if (!rep.all_pass()) {
        spdlog::error("hypothesis checker failed (boundedness {}, tightness {}, lipschitz {}); see {}",
                      rep.boundedness_pass, rep.tightness_pass, rep.lipschitz_pass, (out_dir / "checker.json").string());
    }
    return rep.all_pass();
}

}  // namespace

int run_simulate(const Scenario& s, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const Grid grid = s.grid.build();
    const Family family = build_family(s.family, grid);
    const GridMeasure mu0 = build_initial(s.initial, grid, s.base_dir);
    try {
        mu0.check_probability(1e-10, 1e-8);
    } catch (const InvariantViolation& e) {
        throw ConfigError("initial", e.what());
    }
    if (!check_hypotheses(s, family, mu0, out_dir)) return 2;
    KineticSolution sol;
    try {
        sol = solve_kinetic(family, mu0, s.horizon, s.delta, solver_options(s));
    } catch (const WellPosednessFailure& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
    const std::size_t every = s.outputs && s.outputs->output_every ? *s.outputs->output_every : 1;
    {
        std::ofstream out = open_out(out_dir / "solution.csv");
        write_solution_csv(out, sol.curve, every);
    }
    write_text(out_dir / "report.json", run_report_json(sol, s.name));
    if (s.outputs && s.outputs->particles.value_or(false)) {
        ParticleOptions po;
        po.r = s.horizon;
        po.delta = s.delta;
        po.record_every = every;
        std::ofstream snaps;
        if (s.outputs->particle_snapshots.value_or(false)) {
            snaps = open_out(out_dir / "particle_snapshots.csv");
            po.snapshots = &snaps;
        }
        const ParticleResult pr =
            particle_simulate(family, mu0, s.outputs->particle_count.value_or(1000), s.seed.value_or(0), po);
        std::ofstream out = open_out(out_dir / "particles.csv");
        write_curve_csv(out, pr.histogram);
    }
    spdlog::info("simulate '{}': {} windows, max contraction ratio {:.3g}, mass drift {:.3g}", s.name,
                 sol.windows.size(), sol.max_ratio(), sol.max_mass_drift);
    return 0;
}

int run_sensitivity(const Scenario& s, const std::filesystem::path& out_dir) {
    if (!s.sensitivity) throw ConfigError("sensitivity", "required block is missing");
    if (!s.sensitivity->alpha) throw ConfigError("sensitivity.alpha", "required field is missing");
    std::filesystem::create_directories(out_dir);
    const double alpha = *s.sensitivity->alpha;
    const Grid grid = s.grid.build();
    const Family family = build_family(s.family, grid);
    const GridMeasure mu0 = build_initial(s.initial, grid, s.base_dir);
    if (!check_hypotheses(s, family, mu0, out_dir)) return 2;
    const GridMeasure xi0 =
        s.sensitivity->xi0 ? build_initial(*s.sensitivity->xi0, grid, s.base_dir) : GridMeasure::zero(grid);
    if (std::abs(xi0.mass()) > 1e-10 * std::max(1.0, xi0.weights.lpNorm<1>())) {
        throw ConfigError("sensitivity.xi0", "must have zero mass");
    }
    const SolverOptions opts = solver_options(s);
    try {
        const SensitivityRun run = nlmarkov::run_sensitivity(family, mu0, xi0, alpha, s.horizon, s.delta, opts);
        const std::size_t every = s.outputs && s.outputs->output_every ? *s.outputs->output_every : 1;
        {
            std::ofstream out = open_out(out_dir / "sensitivity.csv");
            write_sensitivity_csv(out, run.xi, every);
        }
        const std::vector<double> h_list = s.sensitivity->h_list.value_or(std::vector<double>{1e-2, 1e-3});
        const std::vector<double> samples = s.sensitivity->sample_times.value_or(default_samples(s));
        // The initial law moves along xi0 with the parameter.
        const InitialFamily mu0_of = [&](double a) { return GridMeasure(grid, mu0.weights + (a - alpha) * xi0.weights); };
        const FdReport rep = fd_validate(family, mu0_of, alpha, h_list, s.horizon, s.delta, samples, opts);
        nlohmann::json j = nlohmann::json::parse(fd_report_json(rep));
        j["scenario"] = s.name;
        j["max_mass"] = run.max_mass;
        write_text(out_dir / "fd_validation.json", j.dump(2));
        spdlog::info("sensitivity '{}': fitted order {:.3g}, zero-mass defect {:.3g}", s.name, rep.fitted_order,
                     run.max_mass);
        return rep.passed ? 0 : 2;
    } catch (const WellPosednessFailure& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
}

int run_compare(const Scenario& s, const std::filesystem::path& out_dir) {
    if (!s.compare) throw ConfigError("compare", "required block is missing");
    std::filesystem::create_directories(out_dir);
    const Grid grid = s.grid.build();
    const Family a = build_family(s.family, grid);
    const Family b = build_family(s.compare->family_b, grid);
    const GridMeasure mu = build_initial(s.initial, grid, s.base_dir);
    const GridMeasure eta = s.compare->initial_b ? build_initial(*s.compare->initial_b, grid, s.base_dir) : mu;
    if (a.index() != b.index()) throw ConfigError("compare.family_b.kind", "must match family.kind");
    const std::vector<double> samples = s.compare->sample_times.value_or(default_samples(s));
    try {
        const StabilityReport rep = stability_compare(a, b, mu, eta, s.horizon, s.delta, samples, solver_options(s));
        const nlohmann::json j = {{"scenario", s.name},
                                  {"sup_distance", rep.sup_distance},
                                  {"kappa_hat", rep.kappa_hat},
                                  {"initial_distance", rep.initial_distance},
                                  {"ratio", rep.ratio},
                                  {"sample_times", samples},
                                  {"distances", rep.distances}};
        write_text(out_dir / "compare.json", j.dump(2));
        spdlog::info("compare '{}': sup distance {:.3g}, kappa {:.3g}, ratio {:.3g}", s.name, rep.sup_distance,
                     rep.kappa_hat, rep.ratio);
        return 0;
    } catch (const WellPosednessFailure& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
}

}  // namespace nlmarkov
