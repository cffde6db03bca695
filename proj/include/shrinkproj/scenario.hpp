#pragma once

// Declarative scenarios: a JSON document (or a built-in name) describing the
// space, the problem bundle and the solver settings; running one produces a
// RunReport with the per-iteration trace and the audited invariant slacks.
//
// Document layout (every key outside this layout is rejected):
//
//   { "name": "...", "seed": 7,
//     "space":  { "dimension": 8, "p": 3 },
//     "bundle": { "base_set": { "kind": "ball" | "box" | "whole_space", ... },
//                 "operators": { "members": [ { "map": "shift" | "duality", "alpha": 0.5 } ],
//                                "weights": [ ... ] },
//                 "bifunctions": [ { "kind": "potential", "center": [...], "weight": 1 }
//                                | { "kind": "dual_pairing", "map": "inverse_duality" | "affine",
//                                    "matrix": [[...]], "offset": [...] } ],
//                 "mixed_term": { "kind": "zero" | "dual_norm" | "weighted_l1" | "quadratic", ... },
//                 "perturbation": { "kind": "zero" | "duality" | "affine", ... },
//                 "r": 1, "start": [...] | "random", "reference_solution": [...] },
//     "config": { "mode": "banach" | "hilbert", "outer_tol": 1e-6, "max_outer": 200,
//                 "resolvent_tol": 1e-8, "retraction_tol": 1e-8, "max_cuts": 500,
//                 "audit": true, "audit_samples": 32 } }

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "audits.hpp"
#include "hybrid_solver.hpp"

namespace shrinkproj {

using Json = nlohmann::json;

struct BaseSetSpec {
    enum class Kind { WholeSpace, Ball, Box };
    Kind kind = Kind::Ball;
    double radius = 1.0;
    std::optional<double> exponent; // defaults to the space exponent
    Vector lower, upper;
};

struct MemberSpec {
    JStarMap::Kind map = JStarMap::Kind::Shift;
    double alpha = 0.5;
};

struct BifunctionSpec {
    enum class Kind { Potential, DualPairing };
    Kind kind = Kind::DualPairing;
    // potential
    Vector center;
    double weight = 1.0;
    // dual pairing; affine when matrix is non-empty
    Matrix matrix;
    Vector offset;
};

struct MixedTermSpec {
    MixedTerm::Kind kind = MixedTerm::Kind::Zero;
    double lambda = 0.0;
    Vector center;
};

struct PerturbationSpec {
    PerturbationMap::Kind kind = PerturbationMap::Kind::Zero;
    Matrix matrix;
    Vector offset;
};

struct BundleSpec {
    BaseSetSpec base_set;
    std::vector<MemberSpec> members;
    std::optional<Vector> weights; // uniform when absent
    std::vector<BifunctionSpec> bifunctions;
    MixedTermSpec mixed_term;
    PerturbationSpec perturbation;
    double r = 1.0;              // constant r_n; also the lower bound a
    std::optional<Vector> start; // random feasible point from the seed when absent
    std::optional<Vector> reference_solution;
};

struct ScenarioSpec {
    std::string name;
    int dimension = 8;
    double p = 3.0;
    BundleSpec bundle;
    SolverConfig config; // r_schedule, r_lower, seed and reference are derived from the rest
    std::uint64_t seed = 7;
};

// ---------------------------------------------------------------------------
// Loading

namespace detail {

inline std::string join_path(const std::string& parent, const std::string& key)
{
    return parent.empty() ? key : parent + "." + key;
}

[[noreturn]] inline void invalid(const std::string& path, const std::string& what)
{
    throw Error(ErrorCode::ValidationError, path + ": " + what);
}

/// Strict view of a JSON object: every key must be consumed by get/opt.
class Fields {
public:
    Fields(const Json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) {
            invalid(path_.empty() ? "<root>" : path_, "expected an object");
        }
    }

    const Json* opt(const std::string& key)
    {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    const Json& get(const std::string& key)
    {
        const Json* v = opt(key);
        if (!v) {
            invalid(at(key), "required field missing");
        }
        return *v;
    }

    std::string at(const std::string& key) const { return join_path(path_, key); }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                invalid(at(it.key()), "unknown key");
            }
        }
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline double as_number(const Json& v, const std::string& path)
{
    if (!v.is_number()) {
        invalid(path, "expected a number");
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
        invalid(path, "must be finite");
    }
    return x;
}

inline std::int64_t as_integer(const Json& v, const std::string& path)
{
    if (!v.is_number_integer()) {
        invalid(path, "expected an integer");
    }
    return v.get<std::int64_t>();
}

inline std::string as_string(const Json& v, const std::string& path)
{
    if (!v.is_string()) {
        invalid(path, "expected a string");
    }
    return v.get<std::string>();
}

inline Vector as_vector(const Json& v, const std::string& path, int length)
{
    if (!v.is_array()) {
        invalid(path, "expected an array of numbers");
    }
    if (static_cast<int>(v.size()) != length) {
        invalid(path, "expected " + std::to_string(length) + " entries, got " + std::to_string(v.size()));
    }
    Vector out(length);
    for (int i = 0; i < length; ++i) {
        out[i] = as_number(v[static_cast<std::size_t>(i)], path + "[" + std::to_string(i) + "]");
    }
    return out;
}

inline Matrix as_matrix(const Json& v, const std::string& path, int d)
{
    if (!v.is_array() || static_cast<int>(v.size()) != d) {
        invalid(path, "expected " + std::to_string(d) + " rows");
    }
    Matrix m(d, d);
    for (int i = 0; i < d; ++i) {
        m.row(i) = as_vector(v[static_cast<std::size_t>(i)], path + "[" + std::to_string(i) + "]", d).transpose();
    }
    return m;
}

template <class Enum>
Enum as_choice(const Json& v, const std::string& path, const std::vector<std::pair<std::string, Enum>>& choices)
{
    const std::string s = as_string(v, path);
    std::string allowed;
    for (const auto& [name, value] : choices) {
        if (name == s) {
            return value;
        }
        allowed += (allowed.empty() ? "" : ", ") + name;
    }
    invalid(path, "'" + s + "' is not one of " + allowed);
}

inline BaseSetSpec parse_base_set(const Json& j, const std::string& path, int d)
{
    Fields f(j, path);
    BaseSetSpec b;
    b.kind = as_choice<BaseSetSpec::Kind>(f.get("kind"), f.at("kind"),
                                          {{"ball", BaseSetSpec::Kind::Ball},
                                           {"box", BaseSetSpec::Kind::Box},
                                           {"whole_space", BaseSetSpec::Kind::WholeSpace}});
    if (b.kind == BaseSetSpec::Kind::Ball) {
        b.radius = as_number(f.get("radius"), f.at("radius"));
        if (!(b.radius > 0.0)) {
            invalid(f.at("radius"), "must be positive");
        }
        if (const Json* e = f.opt("exponent")) {
            b.exponent = as_number(*e, f.at("exponent"));
            if (!(*b.exponent > 1.0)) {
                invalid(f.at("exponent"), "must exceed 1");
            }
        }
    } else if (b.kind == BaseSetSpec::Kind::Box) {
        b.lower = as_vector(f.get("lower"), f.at("lower"), d);
        b.upper = as_vector(f.get("upper"), f.at("upper"), d);
        if ((b.lower.array() > b.upper.array()).any()) {
            invalid(f.at("upper"), "must be >= lower in every coordinate");
        }
    }
    f.finish();
    return b;
}

inline std::pair<Matrix, Vector> parse_affine(Fields& f, int d)
{
    Matrix m = as_matrix(f.get("matrix"), f.at("matrix"), d);
    Vector b = Vector::Zero(d);
    if (const Json* o = f.opt("offset")) {
        b = as_vector(*o, f.at("offset"), d);
    }
    return {std::move(m), std::move(b)};
}

inline BifunctionSpec parse_bifunction(const Json& j, const std::string& path, int d)
{
    Fields f(j, path);
    BifunctionSpec b;
    b.kind = as_choice<BifunctionSpec::Kind>(
        f.get("kind"), f.at("kind"),
        {{"potential", BifunctionSpec::Kind::Potential}, {"dual_pairing", BifunctionSpec::Kind::DualPairing}});
    if (b.kind == BifunctionSpec::Kind::Potential) {
        b.center = as_vector(f.get("center"), f.at("center"), d);
        if (const Json* w = f.opt("weight")) {
            b.weight = as_number(*w, f.at("weight"));
            if (!(b.weight >= 0.0)) {
                invalid(f.at("weight"), "must be nonnegative");
            }
        }
    } else {
        const std::string map = as_string(f.get("map"), f.at("map"));
        if (map == "affine") {
            std::tie(b.matrix, b.offset) = parse_affine(f, d);
        } else if (map != "inverse_duality") {
            invalid(f.at("map"), "'" + map + "' is not one of inverse_duality, affine");
        }
    }
    f.finish();
    return b;
}

inline MixedTermSpec parse_mixed(const Json& j, const std::string& path, int d)
{
    Fields f(j, path);
    MixedTermSpec m;
    m.kind = as_choice<MixedTerm::Kind>(f.get("kind"), f.at("kind"),
                                        {{"zero", MixedTerm::Kind::Zero},
                                         {"dual_norm", MixedTerm::Kind::DualNorm},
                                         {"weighted_l1", MixedTerm::Kind::WeightedL1},
                                         {"quadratic", MixedTerm::Kind::Quadratic}});
    if (m.kind == MixedTerm::Kind::WeightedL1) {
        m.lambda = as_number(f.get("lambda"), f.at("lambda"));
        if (!(m.lambda >= 0.0)) {
            invalid(f.at("lambda"), "must be nonnegative");
        }
    } else if (m.kind == MixedTerm::Kind::Quadratic) {
        m.center = Vector::Zero(d);
        if (const Json* c = f.opt("center")) {
            m.center = as_vector(*c, f.at("center"), d);
        }
    }
    f.finish();
    return m;
}

inline PerturbationSpec parse_perturbation(const Json& j, const std::string& path, int d)
{
    Fields f(j, path);
    PerturbationSpec a;
    a.kind = as_choice<PerturbationMap::Kind>(f.get("kind"), f.at("kind"),
                                              {{"zero", PerturbationMap::Kind::Zero},
                                               {"duality", PerturbationMap::Kind::Duality},
                                               {"affine", PerturbationMap::Kind::Affine}});
    if (a.kind == PerturbationMap::Kind::Affine) {
        std::tie(a.matrix, a.offset) = parse_affine(f, d);
    }
    f.finish();
    return a;
}

inline BundleSpec parse_bundle(const Json& j, int d)
{
    Fields f(j, "bundle");
    BundleSpec b;
    b.base_set = parse_base_set(f.get("base_set"), f.at("base_set"), d);
    if (const Json* ops = f.opt("operators")) {
        Fields of(*ops, f.at("operators"));
        if (const Json* members = of.opt("members")) {
            if (!members->is_array()) {
                invalid(of.at("members"), "expected an array");
            }
            for (std::size_t i = 0; i < members->size(); ++i) {
                const std::string mp = of.at("members") + "[" + std::to_string(i) + "]";
                Fields mf((*members)[i], mp);
                MemberSpec m;
                m.map = as_choice<JStarMap::Kind>(mf.get("map"), mf.at("map"),
                                                  {{"shift", JStarMap::Kind::Shift},
                                                   {"duality", JStarMap::Kind::Duality}});
                if (const Json* a = mf.opt("alpha")) {
                    m.alpha = as_number(*a, mf.at("alpha"));
                }
                mf.finish();
                b.members.push_back(m);
            }
        }
        if (const Json* w = of.opt("weights")) {
            b.weights = as_vector(*w, of.at("weights"), static_cast<int>(b.members.size()) + 1);
        }
        of.finish();
    }
    if (const Json* bifs = f.opt("bifunctions")) {
        if (!bifs->is_array()) {
            invalid(f.at("bifunctions"), "expected an array");
        }
        for (std::size_t i = 0; i < bifs->size(); ++i) {
            b.bifunctions.push_back(parse_bifunction((*bifs)[i], f.at("bifunctions") + "[" + std::to_string(i) + "]", d));
        }
    }
    if (const Json* m = f.opt("mixed_term")) {
        b.mixed_term = parse_mixed(*m, f.at("mixed_term"), d);
    }
    if (const Json* a = f.opt("perturbation")) {
        b.perturbation = parse_perturbation(*a, f.at("perturbation"), d);
    }
    if (const Json* r = f.opt("r")) {
        b.r = as_number(*r, f.at("r"));
        if (!(b.r > 0.0)) {
            invalid(f.at("r"), "must be positive");
        }
    }
    if (const Json* s = f.opt("start")) {
        if (!(s->is_string() && s->get<std::string>() == "random")) {
            b.start = as_vector(*s, f.at("start"), d);
        }
    }
    if (const Json* ref = f.opt("reference_solution")) {
        b.reference_solution = as_vector(*ref, f.at("reference_solution"), d);
    }
    f.finish();
    return b;
}

inline SolverConfig parse_config(const Json* j)
{
    SolverConfig c;
    if (!j) {
        return c;
    }
    Fields f(*j, "config");
    if (const Json* m = f.opt("mode")) {
        c.mode = as_choice<Mode>(*m, f.at("mode"), {{"hilbert", Mode::HilbertMain}, {"banach", Mode::BanachMain2}});
    }
    auto positive = [&](const char* key, double& slot, bool allow_zero) {
        if (const Json* v = f.opt(key)) {
            slot = as_number(*v, f.at(key));
            if (allow_zero ? !(slot >= 0.0) : !(slot > 0.0)) {
                invalid(f.at(key), allow_zero ? "must be nonnegative" : "must be positive");
            }
        }
    };
    positive("outer_tol", c.outer_tol, true);
    positive("resolvent_tol", c.resolvent_tol, false);
    positive("retraction_tol", c.retraction_tol, false);
    auto count = [&](const char* key, int& slot, int lowest) {
        if (const Json* v = f.opt(key)) {
            const auto n = as_integer(*v, f.at(key));
            if (n < lowest || n > 1000000) {
                invalid(f.at(key), "must lie in " + std::to_string(lowest) + "..1000000");
            }
            slot = static_cast<int>(n);
        }
    };
    count("max_outer", c.max_outer, 0);
    count("max_cuts", c.max_cuts, 1);
    count("audit_samples", c.audit_samples, 1);
    if (const Json* a = f.opt("audit")) {
        if (!a->is_boolean()) {
            invalid(f.at("audit"), "expected true or false");
        }
        c.audit = a->get<bool>();
    }
    f.finish();
    return c;
}

inline std::string location(const std::string& text, std::size_t byte)
{
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline bool valid_name(const std::string& s)
{
    if (s.empty() || s.size() > 128) {
        return false;
    }
    for (char ch : s) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                        ch == '_' || ch == '-';
        if (!ok) {
            return false;
        }
    }
    return true;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Bundle construction

struct ScenarioProblem {
    ProblemBundle bundle;
    SolverConfig config;
};

namespace detail {

inline ConstraintSet make_omega(const BaseSetSpec& b, const SpaceConfig& s)
{
    switch (b.kind) {
    case BaseSetSpec::Kind::WholeSpace: return ConstraintSet(BaseSet::whole_space(Frame::Primal));
    case BaseSetSpec::Kind::Ball:
        return ConstraintSet(BaseSet::ball(b.radius, b.exponent.value_or(s.exponent()), Frame::Primal));
    case BaseSetSpec::Kind::Box: return ConstraintSet(BaseSet::box(b.lower, b.upper, Frame::Primal));
    }
    throw Error(ErrorCode::InvalidArgument, "unknown base set");
}

/// Seeded start point inside the base set.
inline Vector random_start(const BaseSetSpec& b, const SpaceConfig& s, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    const int d = s.dimension();
    if (b.kind == BaseSetSpec::Kind::Box) {
        Vector v(d);
        for (int i = 0; i < d; ++i) {
            v[i] = std::uniform_real_distribution<double>(b.lower[i], b.upper[i])(rng);
        }
        return v;
    }
    Vector v(d);
    for (int i = 0; i < d; ++i) {
        v[i] = n01(rng);
    }
    if (b.kind == BaseSetSpec::Kind::WholeSpace) {
        return v;
    }
    std::uniform_real_distribution<double> u(0.2, 0.9);
    const double e = b.exponent.value_or(s.exponent());
    return u(rng) * b.radius * v / lp_norm(v, e);
}

} // namespace detail

/// Builds the solver inputs; InvalidArgument from the library becomes a
/// VALIDATION_ERROR, unsupported resolvent classes stay UNSUPPORTED_COMBINATION.
inline ScenarioProblem build_problem(const ScenarioSpec& spec)
{
    try {
        const SpaceConfig s(spec.dimension, spec.p);
        const BundleSpec& b = spec.bundle;
        ConstraintSet omega = detail::make_omega(b.base_set, s);

        std::vector<RelaxedFamily> members;
        for (const auto& m : b.members) {
            members.emplace_back(m.map == JStarMap::Kind::Shift ? JStarMap::shift() : JStarMap::duality(),
                                 constant_schedule(m.alpha));
        }
        OperatorFamily::WeightSchedule weights;
        if (b.weights) {
            weights = [w = *b.weights](int) { return w; };
        }
        OperatorFamily family(std::move(members), std::move(weights));

        std::vector<Bifunction> bifs;
        for (const auto& f : b.bifunctions) {
            if (f.kind == BifunctionSpec::Kind::Potential) {
                bifs.push_back(Bifunction::potential(Potential::quadratic(f.center, f.weight)));
            } else if (f.matrix.size() > 0) {
                bifs.push_back(Bifunction::dual_pairing(PairingMap::affine(f.matrix, f.offset)));
            } else {
                bifs.push_back(Bifunction::dual_pairing(PairingMap::inverse_duality()));
            }
        }
        MixedTerm phi = MixedTerm::zero();
        switch (b.mixed_term.kind) {
        case MixedTerm::Kind::Zero: break;
        case MixedTerm::Kind::DualNorm: phi = MixedTerm::dual_norm(); break;
        case MixedTerm::Kind::WeightedL1: phi = MixedTerm::weighted_l1(b.mixed_term.lambda); break;
        case MixedTerm::Kind::Quadratic: phi = MixedTerm::quadratic(b.mixed_term.center); break;
        }
        PerturbationMap a = PerturbationMap::zero();
        if (b.perturbation.kind == PerturbationMap::Kind::Duality) {
            a = PerturbationMap::duality();
        } else if (b.perturbation.kind == PerturbationMap::Kind::Affine) {
            a = PerturbationMap::affine(b.perturbation.matrix, b.perturbation.offset);
        }

        const Vector start = b.start ? *b.start : detail::random_start(b.base_set, s, spec.seed);
        ResolventProblem res(std::move(bifs), std::move(phi), std::move(a), omega, b.r, PrimalPoint::zero(s));
        ScenarioProblem out{ProblemBundle{omega, std::move(family), std::move(res), PrimalPoint(s, start)},
                            spec.config};
        out.config.r_schedule = constant_schedule(b.r);
        out.config.r_lower = b.r;
        out.config.seed = spec.seed;
        out.config.reference_solution.reset();
        if (b.reference_solution) {
            out.config.reference_solution = PrimalPoint(s, *b.reference_solution);
        }
        if (out.config.mode == Mode::HilbertMain && !s.is_hilbert()) {
            throw Error(ErrorCode::UnsupportedCombination, "config.mode: hilbert mode needs p = 2");
        }
        validate(out.config, out.bundle);
        return out;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidArgument) {
            throw Error(ErrorCode::ValidationError, "scenario '" + spec.name + "': " + e.message());
        }
        throw;
    }
}

/// Parses and validates a scenario document.
inline ScenarioSpec parse_scenario(const std::string& text)
{
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::ParseError, detail::location(text, e.byte) + ": " + e.what());
    }
    detail::Fields f(j, "");
    ScenarioSpec spec;
    spec.name = detail::as_string(f.get("name"), "name");
    if (!detail::valid_name(spec.name)) {
        detail::invalid("name", "must be 1-128 characters from [A-Za-z0-9_-]");
    }
    if (const Json* seed = f.opt("seed")) {
        const auto v = detail::as_integer(*seed, "seed");
        if (v < 0) {
            detail::invalid("seed", "must be nonnegative");
        }
        spec.seed = static_cast<std::uint64_t>(v);
    }
    {
        detail::Fields sf(f.get("space"), "space");
        const auto d = detail::as_integer(sf.get("dimension"), "space.dimension");
        if (d < 1 || d > 10000) {
            detail::invalid("space.dimension", "must lie in 1..10000");
        }
        spec.dimension = static_cast<int>(d);
        spec.p = detail::as_number(sf.get("p"), "space.p");
        if (!(spec.p > 1.0)) {
            detail::invalid("space.p", "must exceed 1");
        }
        sf.finish();
    }
    spec.bundle = detail::parse_bundle(f.get("bundle"), spec.dimension);
    spec.config = detail::parse_config(f.opt("config"));
    f.finish();
    build_problem(spec); // rejects unsupported combinations at load time
    return spec;
}

// ---------------------------------------------------------------------------
// Serialization of specs (the inverse of parse_scenario)

namespace detail {

inline Json vector_json(const Vector& v)
{
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(v[i]);
    }
    return a;
}

inline Json matrix_json(const Matrix& m)
{
    Json a = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        a.push_back(vector_json(m.row(i).transpose()));
    }
    return a;
}

} // namespace detail

inline Json to_json(const ScenarioSpec& spec)
{
    const BundleSpec& b = spec.bundle;
    Json base;
    switch (b.base_set.kind) {
    case BaseSetSpec::Kind::WholeSpace: base = {{"kind", "whole_space"}}; break;
    case BaseSetSpec::Kind::Ball:
        base = {{"kind", "ball"}, {"radius", b.base_set.radius}};
        if (b.base_set.exponent) {
            base["exponent"] = *b.base_set.exponent;
        }
        break;
    case BaseSetSpec::Kind::Box:
        base = {{"kind", "box"},
                {"lower", detail::vector_json(b.base_set.lower)},
                {"upper", detail::vector_json(b.base_set.upper)}};
        break;
    }
    Json members = Json::array();
    for (const auto& m : b.members) {
        members.push_back({{"map", m.map == JStarMap::Kind::Shift ? "shift" : "duality"}, {"alpha", m.alpha}});
    }
    Json ops = {{"members", members}};
    if (b.weights) {
        ops["weights"] = detail::vector_json(*b.weights);
    }
    Json bifs = Json::array();
    for (const auto& f : b.bifunctions) {
        if (f.kind == BifunctionSpec::Kind::Potential) {
            bifs.push_back({{"kind", "potential"}, {"center", detail::vector_json(f.center)}, {"weight", f.weight}});
        } else if (f.matrix.size() > 0) {
            bifs.push_back({{"kind", "dual_pairing"},
                            {"map", "affine"},
                            {"matrix", detail::matrix_json(f.matrix)},
                            {"offset", detail::vector_json(f.offset)}});
        } else {
            bifs.push_back({{"kind", "dual_pairing"}, {"map", "inverse_duality"}});
        }
    }
    Json mixed;
    switch (b.mixed_term.kind) {
    case MixedTerm::Kind::Zero: mixed = {{"kind", "zero"}}; break;
    case MixedTerm::Kind::DualNorm: mixed = {{"kind", "dual_norm"}}; break;
    case MixedTerm::Kind::WeightedL1: mixed = {{"kind", "weighted_l1"}, {"lambda", b.mixed_term.lambda}}; break;
    case MixedTerm::Kind::Quadratic:
        mixed = {{"kind", "quadratic"}, {"center", detail::vector_json(b.mixed_term.center)}};
        break;
    }
    Json pert;
    switch (b.perturbation.kind) {
    case PerturbationMap::Kind::Zero: pert = {{"kind", "zero"}}; break;
    case PerturbationMap::Kind::Duality: pert = {{"kind", "duality"}}; break;
    case PerturbationMap::Kind::Affine:
        pert = {{"kind", "affine"},
                {"matrix", detail::matrix_json(b.perturbation.matrix)},
                {"offset", detail::vector_json(b.perturbation.offset)}};
        break;
    }
    Json bundle = {{"base_set", base},      {"operators", ops},    {"bifunctions", bifs},
                   {"mixed_term", mixed},   {"perturbation", pert}, {"r", b.r},
                   {"start", b.start ? detail::vector_json(*b.start) : Json("random")}};
    if (b.reference_solution) {
        bundle["reference_solution"] = detail::vector_json(*b.reference_solution);
    }
    const SolverConfig& c = spec.config;
    Json config = {{"mode", c.mode == Mode::HilbertMain ? "hilbert" : "banach"},
                   {"outer_tol", c.outer_tol},
                   {"max_outer", c.max_outer},
                   {"resolvent_tol", c.resolvent_tol},
                   {"retraction_tol", c.retraction_tol},
                   {"max_cuts", c.max_cuts},
                   {"audit", c.audit},
                   {"audit_samples", c.audit_samples}};
    return {{"name", spec.name},
            {"seed", spec.seed},
            {"space", {{"dimension", spec.dimension}, {"p", spec.p}}},
            {"bundle", bundle},
            {"config", config}};
}

// ---------------------------------------------------------------------------
// Built-ins

inline ScenarioSpec lp_shift_example()
{
    ScenarioSpec s;
    s.name = "lp_shift_example";
    s.dimension = 8;
    s.p = 3.0;
    s.bundle.base_set.kind = BaseSetSpec::Kind::Ball;
    s.bundle.base_set.radius = 1.0;
    s.bundle.members = {MemberSpec{JStarMap::Kind::Shift, 0.5}};
    s.bundle.weights = Vector::Constant(2, 0.5);
    BifunctionSpec f;
    f.kind = BifunctionSpec::Kind::DualPairing;
    s.bundle.bifunctions = {f};
    s.bundle.mixed_term.kind = MixedTerm::Kind::DualNorm;
    s.bundle.perturbation.kind = PerturbationMap::Kind::Duality;
    s.bundle.r = 1.0;
    s.bundle.reference_solution = Vector::Zero(8);
    s.config.mode = Mode::BanachMain2;
    return s;
}

inline ScenarioSpec hilbert_family()
{
    ScenarioSpec s;
    s.name = "hilbert_family";
    s.dimension = 4;
    s.p = 2.0;
    s.bundle.base_set.kind = BaseSetSpec::Kind::Ball;
    s.bundle.base_set.radius = 1.0;
    s.bundle.members = {MemberSpec{JStarMap::Kind::Shift, 0.5}, MemberSpec{JStarMap::Kind::Shift, 0.25}};
    s.bundle.r = 1.0;
    s.bundle.reference_solution = Vector::Zero(4);
    s.config.mode = Mode::HilbertMain;
    return s;
}

inline ScenarioSpec optimization_app()
{
    ScenarioSpec s;
    s.name = "optimization_app";
    s.dimension = 3;
    s.p = 2.0;
    s.bundle.base_set.kind = BaseSetSpec::Kind::Box;
    s.bundle.base_set.lower = Vector::Constant(3, -5.0);
    s.bundle.base_set.upper = Vector::Constant(3, 5.0);
    BifunctionSpec f;
    f.kind = BifunctionSpec::Kind::Potential;
    f.center = Eigen::Vector3d(1.0, -2.0, 0.5);
    s.bundle.bifunctions = {f};
    s.bundle.mixed_term.kind = MixedTerm::Kind::WeightedL1;
    s.bundle.mixed_term.lambda = 0.3;
    s.bundle.r = 1.0;
    s.bundle.start = Vector::Zero(3);
    // soft-thresholding of b at 0.3, inside the box
    s.bundle.reference_solution = Eigen::Vector3d(0.7, -1.7, 0.2);
    s.config.mode = Mode::HilbertMain;
    return s;
}

inline std::vector<ScenarioSpec> builtin_scenarios() { return {lp_shift_example(), hilbert_family(), optimization_app()}; }

inline std::optional<ScenarioSpec> find_builtin(const std::string& name)
{
    for (auto& s : builtin_scenarios()) {
        if (s.name == name) {
            return s;
        }
    }
    return std::nullopt;
}

/// A built-in name, or else a path to a scenario document.
inline ScenarioSpec load_scenario(const std::string& name_or_path)
{
    if (auto s = find_builtin(name_or_path)) {
        return *s;
    }
    std::ifstream in(name_or_path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "'" + name_or_path + "' is neither a built-in scenario nor a readable file");
    }
    std::ostringstream text;
    text << in.rdbuf();
    try {
        return parse_scenario(text.str());
    } catch (const Error& e) {
        throw Error(e.code(), name_or_path + ": " + e.message());
    }
}

// ---------------------------------------------------------------------------
// Running and reporting

enum class Outcome { Converged, IterationCap, Failed };

inline const char* to_string(Outcome o)
{
    switch (o) {
    case Outcome::Converged: return "CONVERGED";
    case Outcome::IterationCap: return "ITERATION_CAP";
    case Outcome::Failed: return "FAILED";
    }
    return "FAILED";
}

/// Worst observed slack of one audited inequality; absent when it was not
/// measured (no reference solution, or the run failed).
struct InvariantSlack {
    std::string name;
    std::optional<double> worst;
    double limit = 0.0;
    bool ok = true;
};

struct RunReport {
    std::string scenario;
    Outcome outcome = Outcome::Failed;
    std::string error; // empty unless outcome is FAILED
    Vector x_star;
    int iterations = 0;
    std::vector<InvariantSlack> invariants;
    double wall_seconds = 0.0;
    std::vector<IterationRecord> history; // written to the CSV only
    std::optional<ScenarioSpec> spec;

    bool audits_passed() const
    {
        for (const auto& i : invariants) {
            if (!i.ok) {
                return false;
            }
        }
        return true;
    }
};

inline const std::vector<std::string>& invariant_names()
{
    static const std::vector<std::string> names = {"anchor_monotonicity", "fejer_u",       "fejer_y",
                                                   "feasibility",         "vanishing_gap", "resolvent_gap",
                                                   "retraction_residual"};
    return names;
}

namespace detail {

inline std::vector<InvariantSlack> slacks_of(const SolverResult& res, const SolverConfig& cfg,
                                             const AuditTolerances& tols)
{
    const AuditSummary& a = res.audit;
    auto fejer = [&](const std::optional<double>& v) {
        return InvariantSlack{"", v, tols.fejer, !v || *v <= tols.fejer};
    };
    std::vector<InvariantSlack> out{
        {"", a.anchor_monotonicity, tols.anchor_monotonicity, a.anchor_monotonicity_ok},
        fejer(a.fejer_u),
        fejer(a.fejer_y),
        {"", a.feasibility, tols.feasibility, a.feasibility_ok},
        {"", a.final_gap_xu, tols.vanishing_gap_factor * cfg.outer_tol, a.vanishing_gap_ok},
        {"", a.resolvent_gap, cfg.resolvent_tol, a.resolvent_ok},
        {"", a.retraction_residual, tols.retraction_residual, a.retraction_ok},
    };
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].name = invariant_names()[i];
        if (!cfg.audit && i != 4) {
            out[i].worst.reset();
            out[i].ok = true;
        }
    }
    return out;
}

} // namespace detail

inline RunReport run_scenario(const ScenarioSpec& spec, const AuditTolerances& tols = AuditTolerances{})
{
    const auto t0 = std::chrono::steady_clock::now();
    RunReport rep;
    rep.scenario = spec.name;
    rep.spec = spec;
    const ScenarioProblem prob = build_problem(spec);
    rep.x_star = prob.bundle.anchor.coords();
    try {
        SolverResult res = run(prob.bundle, prob.config, tols);
        rep.outcome = res.converged ? Outcome::Converged : Outcome::IterationCap;
        rep.x_star = res.x_star.coords();
        rep.iterations = static_cast<int>(res.history.size());
        rep.invariants = detail::slacks_of(res, prob.config, tols);
        rep.history = std::move(res.history);
    } catch (const Error& e) {
        rep.outcome = Outcome::Failed;
        rep.error = e.what();
        for (const auto& n : invariant_names()) {
            rep.invariants.push_back({n, std::nullopt, 0.0, true});
        }
    }
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

/// 0 converged with all audits passing, 2 audit failure, 3 non-convergence.
inline int exit_code(const RunReport& rep)
{
    if (rep.outcome == Outcome::Failed) {
        return 3;
    }
    if (!rep.audits_passed()) {
        return 2;
    }
    return rep.outcome == Outcome::Converged ? 0 : 3;
}

namespace detail {

inline std::string fmt17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// RFC 4180: quote fields holding a comma, quote, CR or LF; double inner quotes.
inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char ch : s) {
        out += ch;
        if (ch == '"') {
            out += '"';
        }
    }
    return out + "\"";
}

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

} // namespace detail

inline const char* kCsvHeader = "n,x_norm,phi_anchor,gap_xu,resolvent_gap,retraction_residual,fejer_slack,cut_count";

inline std::string iteration_csv(const RunReport& rep)
{
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& r : rep.history) {
        const std::vector<std::string> fields = {
            std::to_string(r.n),
            detail::fmt17(norm(r.x)),
            detail::fmt17(r.phi_anchor),
            detail::fmt17(r.gap_xu),
            detail::fmt17(r.resolvent_gap),
            detail::fmt17(r.retraction_residual),
            r.fejer_slack ? detail::fmt17(*r.fejer_slack) : std::string(),
            std::to_string(r.cut_count),
        };
        for (std::size_t i = 0; i < fields.size(); ++i) {
            out += (i ? "," : "") + detail::csv_field(fields[i]);
        }
        out += "\n";
    }
    return out;
}

inline Json to_json(const RunReport& rep)
{
    Json inv = Json::array();
    for (const auto& i : rep.invariants) {
        inv.push_back({{"name", i.name}, {"worst", detail::optional_json(i.worst)}, {"limit", i.limit}, {"ok", i.ok}});
    }
    Json j = {{"scenario", rep.scenario},
              {"outcome", to_string(rep.outcome)},
              {"error", rep.error.empty() ? Json(nullptr) : Json(rep.error)},
              {"x_star", detail::vector_json(rep.x_star)},
              {"iterations", rep.iterations},
              {"invariants", inv},
              {"audits_passed", rep.audits_passed()},
              {"wall_seconds", rep.wall_seconds}};
    j["spec"] = rep.spec ? to_json(*rep.spec) : Json(nullptr);
    return j;
}

/// Inverse of to_json(RunReport); the embedded spec is re-validated.
inline RunReport report_from_json(const std::string& text)
{
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::ParseError, detail::location(text, e.byte) + ": " + e.what());
    }
    detail::Fields f(j, "");
    RunReport rep;
    rep.scenario = detail::as_string(f.get("scenario"), "scenario");
    rep.outcome = detail::as_choice<Outcome>(f.get("outcome"), "outcome",
                                             {{"CONVERGED", Outcome::Converged},
                                              {"ITERATION_CAP", Outcome::IterationCap},
                                              {"FAILED", Outcome::Failed}});
    if (const Json* e = f.opt("error")) {
        rep.error = detail::as_string(*e, "error");
    }
    const Json& xs = f.get("x_star");
    rep.x_star = detail::as_vector(xs, "x_star", xs.is_array() ? static_cast<int>(xs.size()) : 0);
    rep.iterations = static_cast<int>(detail::as_integer(f.get("iterations"), "iterations"));
    const Json& inv = f.get("invariants");
    if (!inv.is_array()) {
        detail::invalid("invariants", "expected an array");
    }
    for (std::size_t i = 0; i < inv.size(); ++i) {
        const std::string p = "invariants[" + std::to_string(i) + "]";
        detail::Fields inf(inv[i], p);
        InvariantSlack s;
        s.name = detail::as_string(inf.get("name"), inf.at("name"));
        if (const Json* w = inf.opt("worst")) {
            s.worst = detail::as_number(*w, inf.at("worst"));
        }
        s.limit = detail::as_number(inf.get("limit"), inf.at("limit"));
        if (!inf.get("ok").is_boolean()) {
            detail::invalid(inf.at("ok"), "expected true or false");
        }
        s.ok = inf.get("ok").get<bool>();
        inf.finish();
        rep.invariants.push_back(std::move(s));
    }
    f.get("audits_passed");
    rep.wall_seconds = detail::as_number(f.get("wall_seconds"), "wall_seconds");
    if (const Json* s = f.opt("spec")) {
        rep.spec = parse_scenario(s->dump());
    }
    f.finish();
    return rep;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
    }
    out << content;
    out.flush();
    if (!out) {
        throw Error(ErrorCode::IoError, "write to '" + path.string() + "' failed");
    }
}

} // namespace detail

struct ReportPaths {
    std::filesystem::path csv;
    std::filesystem::path summary;
};

/// Writes <dir>/<scenario>.csv and <dir>/<scenario>.json.
inline ReportPaths emit_report(const RunReport& rep, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw Error(ErrorCode::IoError,
                    "cannot create output directory '" + dir.string() + "'" + (ec ? ": " + ec.message() : ""));
    }
    ReportPaths paths{dir / (rep.scenario + ".csv"), dir / (rep.scenario + ".json")};
    detail::write_file(paths.csv, iteration_csv(rep));
    detail::write_file(paths.summary, to_json(rep).dump(2) + "\n");
    return paths;
}

/// The invariant audit suites for one scenario: geometry and retraction in
/// its space, J*-nonexpansiveness of its operator family, the resolvent of
/// its equilibrium class (when a reference solution is declared) and the
/// negative controls.
inline std::vector<SuiteResult> verify_scenario(const ScenarioSpec& spec, int samples = 200)
{
    const ScenarioProblem prob = build_problem(spec);
    const SpaceConfig& s = prob.bundle.anchor.space();
    const std::uint64_t seed = spec.seed;
    std::vector<SuiteResult> out;
    out.push_back(geometry_suite(s.dimension(), {s.exponent()}, samples, seed));
    out.push_back(retraction_suite(s.dimension(), {s.exponent()}, std::max(1, samples / 10), seed));
    out.push_back(operator_suite(prob.bundle.family, s, prob.bundle.omega, samples, seed));
    if (prob.config.reference_solution) {
        double reach = 2.0;
        const BaseSetSpec& b = spec.bundle.base_set;
        if (b.kind == BaseSetSpec::Kind::Ball) {
            // the solver only resolves points of the base set; outside it the
            // l_p class is not certified to have a resolvent at all
            reach = b.radius;
        } else if (b.kind == BaseSetSpec::Kind::Box) {
            reach = 1.5 * std::max(b.lower.cwiseAbs().maxCoeff(), b.upper.cwiseAbs().maxCoeff());
        }
        const ResolventProblem tmpl = prob.bundle.resolvent;
        const double r = spec.bundle.r;
        const int d = s.dimension();
        const double p = s.exponent();
        ResolventCase cs{spec.name,
                         s,
                         [tmpl, r](const PrimalPoint& x) { return tmpl.with_input(x, r); },
                         *prob.config.reference_solution,
                         [d, p, reach](std::mt19937_64& rng) { return detail::random_with_length(rng, d, p, 0.0, reach); },
                         prob.config.resolvent_tol};
        out.push_back(resolvent_suite({cs}, std::max(1, samples / 20), seed));
    }
    out.push_back(negative_controls(seed));
    return out;
}

} // namespace shrinkproj
