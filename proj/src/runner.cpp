#include "qexodus/runner.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace qexodus {

namespace fs = std::filesystem;

std::string_view to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::ChainCertify: return "chain_certify";
        case ExperimentKind::ChainLimits: return "chain_limits";
        case ExperimentKind::ChainBounds: return "chain_bounds";
        case ExperimentKind::Diffusion: return "diffusion";
    }
    return "unknown";
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        fail(ErrorKind::InvalidArgument, "SHA-256 failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
}

namespace {

// ------------------------------------------------------------- validation

using Errors = std::vector<std::string>;

std::string type_name(const Json& j) { return j.type_name(); }

// Reads one JSON object against a fixed key set, filling defaults into `out`
// and recording every problem instead of stopping at the first.
class Section {
  public:
    Section(const Json* doc, std::string path, Errors& errors) : doc_(doc), path_(std::move(path)), errors_(errors) {
        if (doc_ && !doc_->is_object()) {
            error("", "expected an object, got " + type_name(*doc_));
            doc_ = nullptr;
        }
    }

    const std::string& path() const { return path_; }
    bool present(const char* key) const { return doc_ && doc_->contains(key); }

    void error(const std::string& key, const std::string& what) {
        errors_.push_back((key.empty() ? path_ : path_ + "/" + key) + ": " + what);
    }

    double number(const char* key, std::optional<double> def, bool positive = false) {
        seen_.insert(key);
        double v = def.value_or(0.0);
        if (const Json* j = get(key, def.has_value())) {
            if (!j->is_number()) error(key, "expected a number");
            else v = j->get<double>();
        }
        if (!std::isfinite(v)) error(key, "must be finite");
        else if (positive && !(v > 0.0)) error(key, "must be positive");
        out_[key] = v;
        return v;
    }

    std::int64_t integer(const char* key, std::optional<std::int64_t> def, std::int64_t min) {
        seen_.insert(key);
        std::int64_t v = def.value_or(min);
        if (const Json* j = get(key, def.has_value())) {
            if (!j->is_number_integer()) error(key, "expected an integer");
            else v = j->get<std::int64_t>();
        }
        if (v < min) error(key, "must be at least " + std::to_string(min));
        out_[key] = v;
        return v;
    }

    bool boolean(const char* key, bool def) {
        seen_.insert(key);
        bool v = def;
        if (const Json* j = get(key, true)) {
            if (!j->is_boolean()) error(key, "expected a boolean");
            else v = j->get<bool>();
        }
        out_[key] = v;
        return v;
    }

    std::string choice(const char* key, std::optional<std::string> def, const std::vector<std::string>& options) {
        seen_.insert(key);
        std::string v = def.value_or(options.front());
        if (const Json* j = get(key, def.has_value())) {
            if (!j->is_string() || std::find(options.begin(), options.end(), j->get<std::string>()) == options.end()) {
                std::string all;
                for (const auto& o : options) all += (all.empty() ? "" : ", ") + o;
                error(key, "expected one of " + all);
            } else {
                v = j->get<std::string>();
            }
        }
        out_[key] = v;
        return v;
    }

    std::vector<double> numbers(const char* key, std::optional<std::vector<double>> def, bool increasing) {
        seen_.insert(key);
        std::vector<double> v = def.value_or(std::vector<double>{});
        if (const Json* j = get(key, def.has_value())) {
            v.clear();
            if (!j->is_array() || j->empty()) {
                error(key, "expected a non-empty array of numbers");
            } else {
                for (std::size_t i = 0; i < j->size(); ++i) {
                    if (!(*j)[i].is_number() || !std::isfinite((*j)[i].get<double>()))
                        error(std::string(key) + "/" + std::to_string(i), "expected a finite number");
                    else v.push_back((*j)[i].get<double>());
                }
            }
        }
        if (increasing)
            for (std::size_t i = 1; i < v.size(); ++i)
                if (!(v[i] > v[i - 1])) {
                    error(key, "must be strictly increasing");
                    break;
                }
        out_[key] = v;
        return v;
    }

    std::vector<std::int64_t> integers(const char* key, std::vector<std::int64_t> def, std::int64_t min) {
        seen_.insert(key);
        std::vector<std::int64_t> v = def;
        if (const Json* j = get(key, true)) {
            v.clear();
            if (!j->is_array() || j->empty()) error(key, "expected a non-empty array of integers");
            else
                for (std::size_t i = 0; i < j->size(); ++i) {
                    if (!(*j)[i].is_number_integer() || (*j)[i].get<std::int64_t>() < min)
                        error(std::string(key) + "/" + std::to_string(i),
                              "expected an integer >= " + std::to_string(min));
                    else v.push_back((*j)[i].get<std::int64_t>());
                }
        }
        out_[key] = v;
        return v;
    }

    // Optional sub-object; nullopt when absent.
    std::optional<Section> child(const char* key) {
        seen_.insert(key);
        if (!present(key)) return std::nullopt;
        return Section(&doc_->at(key), path_ + "/" + key, errors_);
    }

    // Keeps a raw value without interpreting it.
    const Json* raw(const char* key) {
        seen_.insert(key);
        return present(key) ? &doc_->at(key) : nullptr;
    }

    void put(const char* key, Json value) { out_[key] = std::move(value); }

    Json finish() {
        if (doc_)
            for (const auto& [key, _] : doc_->items())
                if (!seen_.count(key)) error(key, "unknown field");
        return out_;
    }

  private:
    const Json* get(const char* key, bool optional) {
        if (present(key)) return &doc_->at(key);
        if (!optional) error(key, "missing required field");
        return nullptr;
    }

    const Json* doc_;
    std::string path_;
    Errors& errors_;
    std::set<std::string> seen_;
    Json out_ = Json::object();
};

std::string parse_error_text(const std::string& source, std::string_view text, const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t stop = e.byte == 0 ? 0 : std::min<std::size_t>(e.byte - 1, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    std::string what = e.what();
    const auto cut = what.find("syntax error");
    if (cut != std::string::npos) what = what.substr(cut);
    return source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": parse error: " + what;
}

std::optional<Json> parse_json(std::string_view text, const std::string& source, Errors& errors) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        errors.push_back(parse_error_text(source, text, e));
    }
    return std::nullopt;
}

std::optional<std::string> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json validate_drift(Section s) {
    const auto kind = s.choice("kind", std::nullopt, {"zero", "linear", "cubic_shifted", "power", "table"});
    if (kind == "linear") s.number("k", 1.0);
    if (kind == "cubic_shifted") s.number("c", 0.0);
    if (kind == "power") {
        s.number("alpha", std::nullopt, true);
        s.number("c", 0.0);
    }
    if (kind == "table") {
        const auto xs = s.numbers("x", std::nullopt, true);
        const auto vs = s.numbers("v", std::nullopt, false);
        if (xs.size() != vs.size() || xs.size() < 2) s.error("", "table needs x and v of equal length >= 2");
    }
    return s.finish();
}

Json validate_boundary(Section s) {
    const auto kind = s.choice("kind", std::nullopt, {"constant", "sine", "exp_decay"});
    if (kind == "constant") {
        if (s.number("level", 0.0) < 0.0) s.error("level", "must be non-negative");
    } else if (kind == "sine") {
        const double mean = s.number("mean", std::nullopt);
        const double amp = s.number("amplitude", std::nullopt);
        s.number("period", std::nullopt, true);
        if (mean - std::abs(amp) < 0.0) s.error("", "sine boundary must stay non-negative");
    } else {
        if (s.number("h0", std::nullopt) < 0.0) s.error("h0", "must be non-negative");
        if (s.number("rate", std::nullopt) < 0.0) s.error("rate", "must be non-negative");
    }
    return s.finish();
}

Json validate_diffusion_model(Section s) {
    if (auto d = s.child("drift")) s.put("drift", validate_drift(*d));
    else s.error("drift", "missing required field");
    if (auto b = s.child("boundary")) s.put("boundary", validate_boundary(*b));
    else s.error("boundary", "missing required field");
    s.number("dt", 1e-3, true);
    s.number("horizon", 1.0, true);
    if (const Json* cap = s.raw("x_cap")) {
        if (!cap->is_number() || !(cap->get<double>() > 0.0)) s.error("x_cap", "expected a positive number");
        else s.put("x_cap", cap->get<double>());
    }
    s.boolean("bridge", true);
    return s.finish();
}

Drift drift_from(const Json& d) {
    const auto kind = d.at("kind").get<std::string>();
    if (kind == "linear") return Drift::linear(d.at("k").get<double>());
    if (kind == "cubic_shifted") return Drift::cubic_shifted(d.at("c").get<double>());
    if (kind == "power") return Drift::power(d.at("alpha").get<double>(), d.at("c").get<double>());
    if (kind == "table") return Drift::table(d.at("x").get<std::vector<double>>(), d.at("v").get<std::vector<double>>());
    return Drift::zero();
}

Boundary boundary_from(const Json& b) {
    const auto kind = b.at("kind").get<std::string>();
    if (kind == "sine") return Boundary::sine(b.at("mean"), b.at("amplitude"), b.at("period"));
    if (kind == "exp_decay") return Boundary::exp_decay(b.at("h0"), b.at("rate"));
    return Boundary::constant(b.at("level"));
}

DiffusionModel diffusion_from(const Json& m, std::uint64_t seed) {
    DiffusionModel model;
    model.drift = drift_from(m.at("drift"));
    model.boundary = boundary_from(m.at("boundary"));
    model.dt = m.at("dt");
    model.horizon = m.at("horizon");
    if (m.contains("x_cap")) model.x_cap = m.at("x_cap").get<double>();
    model.bridge = m.at("bridge");
    model.seed = seed;
    return model;
}

void validate_certify_params(Section& p) {
    p.integer("t0_max", 3, 1);
    p.integer("horizon", 400, 1);
}

Json validate_mu(const Json* mu, const KilledChain* chain, Errors& errors) {
    if (!mu) return Json(nullptr);
    const std::string path = "/params/mu";
    if (!mu->is_object() || mu->empty()) {
        errors.push_back(path + ": expected an object mapping state labels to weights");
        return Json(nullptr);
    }
    double total = 0.0;
    for (const auto& [label, w] : mu->items()) {
        if (!w.is_number() || !(w.get<double>() >= 0.0)) errors.push_back(path + "/" + label + ": expected a weight >= 0");
        else total += w.get<double>();
        if (chain) {
            const auto idx = chain->states().find(label);
            if (!idx) errors.push_back(path + "/" + label + ": unknown state");
            else if (!chain->schedule().survival(0).contains(*idx))
                errors.push_back(path + "/" + label + ": state is absorbing at time 0");
        }
    }
    if (std::abs(total - 1.0) > 1e-12) errors.push_back(path + ": weights must sum to 1");
    return *mu;
}

}  // namespace

LoadResult parse_config(std::string_view text, const fs::path& base_dir) {
    LoadResult result;
    Errors& errors = result.errors;
    const auto doc = parse_json(text, "config", errors);
    if (!doc) return result;

    ExperimentConfig cfg;
    Section top(&*doc, "", errors);
    if (!doc->is_object()) return result;

    if (const Json* v = top.raw("schema"); !v) top.error("schema", "missing required field");
    else if (!v->is_number_integer() || v->get<int>() != kSchemaVersion)
        top.error("schema", "unsupported schema version (expected 1)");

    const auto kind = top.choice("kind", std::nullopt, {"chain_certify", "chain_limits", "chain_bounds", "diffusion"});
    if (kind == "chain_limits") cfg.kind = ExperimentKind::ChainLimits;
    else if (kind == "chain_bounds") cfg.kind = ExperimentKind::ChainBounds;
    else if (kind == "diffusion") cfg.kind = ExperimentKind::Diffusion;

    cfg.name = kind;
    if (const Json* n = top.raw("name")) {
        if (!n->is_string() || n->get<std::string>().empty()) top.error("name", "expected a non-empty string");
        else cfg.name = n->get<std::string>();
    }
    if (const Json* s = top.raw("seed")) {
        if (!s->is_number_integer() || (!s->is_number_unsigned() && s->get<std::int64_t>() < 0))
            top.error("seed", "expected a non-negative integer");
        else cfg.seed = s->get<std::uint64_t>();
    }

    // Model: inline object or a path relative to the config file.
    Json model(nullptr);
    std::string model_path = "/model";
    if (const Json* m = top.raw("model")) {
        if (m->is_string()) {
            const fs::path file = base_dir / m->get<std::string>();
            if (const auto text_m = read_file(file)) {
                if (auto parsed = parse_json(*text_m, file.string(), errors)) model = std::move(*parsed);
                model_path = "/model(" + m->get<std::string>() + ")";
            } else {
                top.error("model", "cannot read '" + file.string() + "'");
            }
        } else if (m->is_object()) {
            model = *m;
        } else {
            top.error("model", "expected an object or a file path");
        }
    }

    std::optional<KilledChain> chain;
    const bool chain_kind = cfg.kind != ExperimentKind::Diffusion;
    if (chain_kind && !model.is_null()) {
        try {
            chain.emplace(chain_from_json(model, model_path));
            model = to_json(*chain);
        } catch (const Error& e) {
            errors.push_back(e.what());
        }
    }
    if (!chain_kind && !model.is_null()) model = validate_diffusion_model(Section(&model, model_path, errors));
    const bool model_required = cfg.kind != ExperimentKind::ChainBounds;
    if (model_required && !top.present("model")) top.error("model", "missing required field");

    const bool stochastic = cfg.kind == ExperimentKind::Diffusion ||
                            (cfg.kind == ExperimentKind::ChainBounds && !top.present("model"));
    if (stochastic && !top.present("seed")) top.error("seed", "missing required field (this kind is stochastic)");

    const Json* raw_params = top.raw("params");
    Section p(raw_params, "/params", errors);
    switch (cfg.kind) {
        case ExperimentKind::ChainCertify: {
            validate_certify_params(p);
            if (const Json* t = p.raw("t_eta")) {
                if (!t->is_number_integer() || t->get<std::int64_t>() < 1) p.error("t_eta", "expected an integer >= 1");
                else p.put("t_eta", *t);
            }
            if (auto e = p.child("expect")) {
                if (e->present("t0")) e->integer("t0", std::nullopt, 1);
                if (e->present("c1")) e->number("c1", std::nullopt);
                if (e->present("c2")) e->number("c2", std::nullopt);
                e->number("tol", 1e-9, true);
                p.put("expect", e->finish());
            }
            break;
        }
        case ExperimentKind::ChainLimits: {
            validate_certify_params(p);
            p.put("mu", validate_mu(p.raw("mu"), chain ? &*chain : nullptr, errors));
            p.integer("t_max", 200, 1);
            p.number("tol", 1e-9, true);
            p.integers("n_grid", {200, 500, 1000, 2000}, 1);
            p.number("qed_tol", 0.01, true);
            break;
        }
        case ExperimentKind::ChainBounds: {
            validate_certify_params(p);
            p.integer("s_max", 4, 0);
            p.integer("t_max", 6, 0);
            p.integer("T_max", 12, 0);
            if (!top.present("model")) {
                p.integer("chains", 200, 1);
                const double kill = p.number("max_kill", 0.3, true);
                if (kill >= 1.0) p.error("max_kill", "must be below 1");
                const double sparsity = p.number("sparsity", 0.0);
                if (sparsity < 0.0 || sparsity >= 1.0) p.error("sparsity", "must lie in [0, 1)");
            }
            break;
        }
        case ExperimentKind::Diffusion: {
            const double x0 = p.number("x0", std::nullopt);
            p.integer("paths", 10000, 1);
            const bool oracle = p.boolean("survival_oracle", false);
            if (oracle && model.is_object() && model.contains("drift") && model.contains("boundary") &&
                (model["drift"].value("kind", "") != "zero" || model["boundary"].value("kind", "") != "constant"))
                p.error("survival_oracle", "the closed-form survival needs a zero drift and a constant boundary");
            if (auto h = p.child("histogram")) {
                h->number("t", std::nullopt, false);
                h->numbers("edges", std::nullopt, true);
                p.put("histogram", h->finish());
            }
            if (auto q = p.child("quasi_ergodic")) {
                q->number("horizon", std::nullopt, true);
                q->numbers("edges", std::nullopt, true);
                p.put("quasi_ergodic", q->finish());
            }
            if (auto pr = p.child("probe")) {
                const double y = pr->number("y", std::nullopt);
                pr->number("t", std::nullopt, true);
                const auto xs = pr->numbers("xs", std::nullopt, true);
                for (double x : xs)
                    if (!(x > y)) {
                        pr->error("xs", "every start must exceed y");
                        break;
                    }
                pr->integer("paths", 10000, 1);
                pr->choice("expect", "none", {"none", "positive_plateau", "no_positive_plateau"});
                p.put("probe", pr->finish());
            }
            if (auto ps = p.child("passage")) {
                const auto kind_p = ps->choice("kind", "constant_level", {"constant_level", "linear_boundary"});
                const double x = ps->number("x", std::nullopt);
                const double level = ps->number("level", 0.0);
                ps->number("slope", 0.0);
                ps->number("t_max", 50.0, true);
                if (!(x > level)) ps->error("x", "must exceed level");
                (void)kind_p;
                p.put("passage", ps->finish());
            }
            if (auto dp = p.child("dump_paths")) {
                dp->integer("count", 10, 1);
                dp->integer("thin", 10, 1);
                p.put("dump_paths", dp->finish());
            }
            (void)x0;
            break;
        }
    }
    cfg.params = p.finish();
    top.finish();
    cfg.model = std::move(model);

    if (errors.empty()) result.config = std::move(cfg);
    return result;
}

LoadResult load_config(const fs::path& path) {
    const auto text = read_file(path);
    if (!text) {
        LoadResult r;
        r.errors.push_back(path.string() + ": cannot read config");
        return r;
    }
    auto result = parse_config(*text, path.parent_path());
    for (auto& e : result.errors)
        if (e.rfind("config:", 0) == 0) e = path.string() + e.substr(6);
    return result;
}

Json to_json(const ExperimentConfig& config) {
    Json doc;
    doc["schema"] = kSchemaVersion;
    doc["kind"] = std::string(to_string(config.kind));
    doc["name"] = config.name;
    if (config.seed) doc["seed"] = *config.seed;
    if (!config.model.is_null()) doc["model"] = config.model;
    Json params = config.params;
    // Absent optional values are not echoed as null.
    for (auto it = params.begin(); it != params.end();) {
        if (it->is_null()) it = params.erase(it);
        else ++it;
    }
    doc["params"] = std::move(params);
    return doc;
}

// ------------------------------------------------------------------ reports

bool RunReport::passed() const {
    if (!errors.empty()) return false;
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

Json RunReport::to_json() const {
    Json checks_doc = Json::array();
    for (const auto& c : checks) checks_doc.push_back(Json{{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    Json series_doc = Json::array();
    for (const auto& [id, _] : series) series_doc.push_back(id);
    Json doc;
    doc["version"] = std::string(kVersion);
    doc["config_hash"] = config_hash;
    doc["config"] = config;
    doc["results"] = results;
    doc["checks"] = std::move(checks_doc);
    doc["errors"] = errors;
    doc["series"] = std::move(series_doc);
    doc["pass"] = passed();
    return doc;
}

std::string RunReport::dump() const { return to_json().dump(2) + "\n"; }

namespace {

class Runner {
  public:
    Runner(const ExperimentConfig& cfg, const RunOptions& opts) : cfg_(cfg), opts_(opts) {}

    RunReport go() {
        report_.config = qexodus::to_json(cfg_);
        report_.config_hash = sha256_hex(report_.config.dump());
        const auto& p = cfg_.params;
        switch (cfg_.kind) {
            case ExperimentKind::ChainCertify: section("certify", [&] { certify_section(p); }); break;
            case ExperimentKind::ChainLimits: section("limits", [&] { limits_section(p); }); break;
            case ExperimentKind::ChainBounds: section("bounds", [&] { bounds_section(p); }); break;
            case ExperimentKind::Diffusion: diffusion(p); break;
        }
        return std::move(report_);
    }

  private:
    template <class Fn>
    void section(const std::string& name, Fn&& fn) {
        log("start " + name);
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn();
        } catch (const Error& e) {
            report_.errors.push_back(name + ": " + e.what());
        } catch (const std::exception& e) {
            report_.errors.push_back(name + ": unexpected: " + e.what());
        }
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        report_.timings.emplace_back(name, dt.count());
        log("done " + name + " in " + format_double(dt.count()) + " s");
    }

    void log(const std::string& line) {
        if (opts_.log) *opts_.log << "[qexodus] " << line << '\n';
    }

    void check(std::string name, bool pass, std::string detail) {
        report_.checks.push_back(Check{std::move(name), pass, std::move(detail)});
    }

    KilledChain chain() const { return chain_from_json(cfg_.model); }

    CVCertificate certify_chain(const KilledChain& c, const Json& p) {
        const auto cert = certify(c, p.at("t0_max").get<Time>(), p.at("horizon").get<Time>());
        report_.results["certificate"] = qexodus::to_json(cert);
        check("certificate_valid", cert.valid,
              "t0=" + std::to_string(cert.t0) + " c1=" + format_double(cert.c1) + " c2=" + format_double(cert.c2));
        return cert;
    }

    void certify_section(const Json& p) {
        const auto c = chain();
        const auto cert = certify_chain(c, p);
        if (p.contains("expect")) {
            const auto& e = p.at("expect");
            const double tol = e.at("tol");
            if (e.contains("t0"))
                check("expect_t0", cert.t0 == e.at("t0").get<Time>(), "t0=" + std::to_string(cert.t0));
            for (const char* key : {"c1", "c2"}) {
                if (!e.contains(key)) continue;
                const double got = std::string(key) == "c1" ? cert.c1 : cert.c2;
                const double want = e.at(key);
                check(std::string("expect_") + key, std::abs(got - want) <= tol,
                      format_double(got) + " vs " + format_double(want));
            }
        }
        if (p.contains("t_eta") && cert.valid)
            report_.results["q_process"] = qexodus::to_json(build_qprocess(c, cert, p.at("t_eta").get<Time>()));
    }

    Measure start_measure(const KilledChain& c, const Json& p) const {
        if (!p.contains("mu") || p.at("mu").is_null())
            return Measure::dirac(c.size(), c.schedule().survival(0).members().front());
        Vector w = Vector::Zero(static_cast<Eigen::Index>(c.size()));
        for (const auto& [label, v] : p.at("mu").items())
            w[static_cast<Eigen::Index>(c.states().index(label))] = v.get<double>();
        return Measure{w, true};
    }

    void limits_section(const Json& p) {
        const auto c = chain();
        const auto& sched = c.schedule();
        const auto mu = start_measure(c, p);
        const auto cert = certify_chain(c, p);
        const bool periodic = sched.kind() == ScheduleKind::Periodic && !sched.is_effectively_constant();
        if (!periodic) {
            const StateSet& limit = sched.kind() == ScheduleKind::Converging ? sched.limit() : sched.absorbing(0);
            report_.results["qsd"] = qexodus::to_json(qsd_fixed(c.chain(), limit));
            const auto ql = quasi_limiting(c, mu, p.at("t_max").get<Time>(), p.at("tol").get<double>());
            report_.results["quasi_limiting"] = qexodus::to_json(ql);
            report_.series["quasi_limiting"] = diagnostics_csv(ql);
            std::string detail = "final tv=" + format_double(ql.diagnostics.back().second);
            bool pass = ql.converged;
            if (ql.independence_gap) {
                detail += " independence gap=" + format_double(*ql.independence_gap);
            }
            check("quasi_limiting_converged", pass, detail);
        }
        if (!cert.valid) return;
        const Time t_eta = eta_horizon_for(cert, sched.window(), 1e-13);
        const auto qp = build_qprocess(c, cert, t_eta);
        const auto grid = p.at("n_grid").get<std::vector<Time>>();
        const auto qe = quasi_ergodic_report(c, cert, qp, mu, grid, p.at("qed_tol").get<double>());
        report_.results["quasi_ergodic"] = qexodus::to_json(qe);
        report_.series["quasi_ergodic"] = diagnostics_csv(qe);
        check("quasi_ergodic_converged", qe.converged, "final tv=" + format_double(qe.diagnostics.back().second));
    }

    void bounds_section(const Json& p) {
        BoundSuiteOptions opts;
        opts.t0_max = p.at("t0_max");
        opts.horizon = p.at("horizon");
        opts.s_max = p.at("s_max");
        opts.t_max = p.at("t_max");
        opts.T_max = p.at("T_max");
        opts.threads = opts_.threads;
        BoundSuiteResult res;
        if (!cfg_.model.is_null()) {
            const auto c = chain();
            const auto cert = certify_chain(c, p);
            if (!cert.valid) return;
            const std::uint64_t seed = cfg_.seed.value_or(0);
            res.records = bound_records(c, cert, seed, opts);
            res.merging_records = merging_records(c, cert, seed, opts);
            res.candidates = res.certified = 1;
            for (const auto& r : res.records) res.theorem_failures += r.pass ? 0 : 1;
            for (const auto& r : res.merging_records) res.merging_failures += r.pass ? 0 : 1;
        } else {
            opts.seed = *cfg_.seed;
            opts.chains = p.at("chains");
            opts.chain_options.max_kill = p.at("max_kill");
            opts.chain_options.sparsity = p.at("sparsity");
            res = run_bound_suite(opts);
        }
        auto min_margin = [](const std::vector<BoundCheckRecord>& rs) {
            double m = std::numeric_limits<double>::infinity();
            for (const auto& r : rs) m = std::min(m, r.margin);
            return rs.empty() ? Json(nullptr) : Json(m);
        };
        Json out;
        out["candidates"] = res.candidates;
        out["certified"] = res.certified;
        out["theorem_records"] = res.records.size();
        out["theorem_failures"] = res.theorem_failures;
        out["theorem_min_margin"] = min_margin(res.records);
        out["merging_records"] = res.merging_records.size();
        out["merging_failures"] = res.merging_failures;
        out["merging_min_margin"] = min_margin(res.merging_records);
        report_.results["bounds"] = std::move(out);
        report_.series["bounds"] = bound_records_csv(res.records);
        report_.series["merging"] = bound_records_csv(res.merging_records);
        check("theorem_bound", res.theorem_failures == 0, std::to_string(res.theorem_failures) + " failing records");
        check("merging_bound", res.merging_failures == 0, std::to_string(res.merging_failures) + " failing records");
    }

    // Named RNG streams keep each diffusion section independent of the others.
    enum Stream : std::uint64_t { Survival = 1, HistogramStream, QuasiErgodic, Probe, Dump };

    void diffusion(const Json& p) {
        const std::uint64_t seed = *cfg_.seed;
        const double x0 = p.at("x0");
        const auto n = p.at("paths").get<std::size_t>();
        auto model_for = [&](Stream stream) {
            auto m = diffusion_from(cfg_.model, seed);
            m.stream = stream;
            return m;
        };

        section("advisory", [&] {
            const auto m = model_for(Survival);
            Json a;
            a["lipschitz"] = lipschitz_on_grid(m);
            a["h_max"] = m.boundary.sup();
            a["x_cap"] = m.cap();
            a["drift_hypothesis_sup"] = drift_hypothesis_sup(m.drift, m.boundary.sup(), m.cap());
            report_.results["advisory"] = std::move(a);
        });

        section("survival", [&] {
            const auto m = model_for(Survival);
            const auto batch = simulate_paths(m, x0, n, {0, opts_.threads, nullptr});
            const double f = batch.survival_fraction();
            Json s;
            s["paths"] = n;
            s["survivors"] = batch.survivors();
            s["fraction"] = f;
            s["stderr"] = std::sqrt(f * (1.0 - f) / static_cast<double>(n));
            s["clamped"] = batch.clamped;
            if (p.at("survival_oracle").get<bool>()) {
                const double want =
                    brownian_survival(PassageKind::ConstantLevel, x0, m.horizon, m.boundary(0.0));
                const double sigma = std::sqrt(want * (1.0 - want) / static_cast<double>(n));
                s["oracle"] = want;
                s["z"] = (f - want) / sigma;
                check("survival_within_3_sigma", std::abs(f - want) <= 3.0 * sigma,
                      format_double(f) + " vs " + format_double(want) + " (sigma " + format_double(sigma) + ")");
            }
            if (batch.clamped > 0) s["warning"] = "paths were clamped at x_cap";
            report_.results["survival"] = std::move(s);
        });

        if (p.contains("histogram"))
            section("histogram", [&] {
                const auto& h = p.at("histogram");
                const auto hist = mc_conditioned_law(model_for(HistogramStream), x0, h.at("t"), n,
                                                     h.at("edges").get<std::vector<double>>(), opts_.threads);
                report_.results["histogram"] = qexodus::to_json(hist);
                report_.series["histogram"] = histogram_csv(hist);
            });

        if (p.contains("quasi_ergodic"))
            section("quasi_ergodic", [&] {
                const auto& q = p.at("quasi_ergodic");
                const auto hist = mc_quasi_ergodic(model_for(QuasiErgodic), x0, q.at("horizon"), n,
                                                   q.at("edges").get<std::vector<double>>(), opts_.threads);
                report_.results["quasi_ergodic"] = qexodus::to_json(hist);
                report_.series["quasi_ergodic"] = histogram_csv(hist);
            });

        if (p.contains("probe"))
            section("probe", [&] {
                const auto& q = p.at("probe");
                const auto res = comes_down_probe(model_for(Probe), q.at("y"), q.at("t"),
                                                  q.at("xs").get<std::vector<double>>(), q.at("paths"), opts_.threads);
                Json pts = Json::array();
                std::ostringstream csv;
                csv << "x,estimate,half_width\n";
                for (const auto& pt : res.points) {
                    pts.push_back(Json{{"x", pt.x}, {"estimate", pt.estimate}, {"half_width", pt.half_width},
                                       {"hits", pt.hits}, {"n", pt.n}});
                    csv << format_double(pt.x) << ',' << format_double(pt.estimate) << ','
                        << format_double(pt.half_width) << '\n';
                }
                report_.results["probe"] = Json{{"points", std::move(pts)},
                                                {"plateau", res.plateau},
                                                {"positive_plateau", res.positive_plateau},
                                                {"plateau_value", res.plateau_value}};
                report_.series["probe"] = csv.str();
                const auto expect = q.at("expect").get<std::string>();
                if (expect != "none")
                    check("probe_" + expect, res.positive_plateau == (expect == "positive_plateau"),
                          "positive_plateau=" + std::string(res.positive_plateau ? "true" : "false"));
            });

        if (p.contains("passage"))
            section("passage", [&] {
                const auto& q = p.at("passage");
                const auto kind = q.at("kind") == "linear_boundary" ? PassageKind::LinearBoundary
                                                                      : PassageKind::ConstantLevel;
                const double total = passage_normalization(kind, q.at("x"), q.at("level"), q.at("slope"), q.at("t_max"));
                report_.results["passage"] = Json{{"normalization", total}};
                check("passage_normalization", std::abs(total - 1.0) <= 1e-6, format_double(total));
            });

        if (p.contains("dump_paths"))
            section("dump_paths", [&] {
                const auto& q = p.at("dump_paths");
                const auto batch = simulate_paths(model_for(Dump), x0, q.at("count"),
                                                  {q.at("thin").get<std::int64_t>(), opts_.threads, nullptr});
                report_.series["paths"] = paths_csv(batch);
            });
    }

    const ExperimentConfig& cfg_;
    RunOptions opts_;
    RunReport report_;
};

}  // namespace

RunReport run(const ExperimentConfig& config, const RunOptions& opts) { return Runner(config, opts).go(); }

void emit_plot_data(const RunReport& report, const std::string& which, const fs::path& out_dir) {
    const auto it = report.series.find(which);
    if (it == report.series.end()) fail(ErrorKind::UnknownSeries, "no series named '" + which + "' in this report");
    std::ofstream out(out_dir / (which + ".csv"), std::ios::binary);
    if (!out) fail(ErrorKind::InvalidArgument, "cannot write " + (out_dir / (which + ".csv")).string());
    out << it->second;
}

int write_outputs(const RunReport& report, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    {
        std::ofstream out(out_dir / "report.json", std::ios::binary);
        if (!out) fail(ErrorKind::InvalidArgument, "cannot write " + (out_dir / "report.json").string());
        out << report.dump();
    }
    {
        Json t = Json::object();
        for (const auto& [name, secs] : report.timings) t[name] = secs;
        std::ofstream out(out_dir / "timings.json", std::ios::binary);
        out << t.dump(2) << '\n';
    }
    for (const auto& [id, _] : report.series) emit_plot_data(report, id, out_dir);
    return report.passed() ? 0 : 1;
}

}  // namespace qexodus
