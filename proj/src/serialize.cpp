#include "qexodus/serialize.hpp"

#include <array>
#include <charconv>
#include <set>
#include <sstream>

namespace qexodus {

namespace {

[[noreturn]] void schema(const std::string& where, const std::string& what) {
    fail(ErrorKind::Schema, (where.empty() ? std::string("/") : where) + ": " + what);
}

void only_keys(const Json& doc, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!doc.is_object()) schema(where, "expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : doc.items())
        if (!ok.count(key)) schema(where + "/" + key, "unknown field");
}

const Json& field(const Json& doc, const std::string& where, const char* key) {
    if (!doc.contains(key)) schema(where + "/" + key, "missing required field");
    return doc.at(key);
}

StateSet labels_to_set(const Json& arr, const StateSpace& states, const std::string& where) {
    if (!arr.is_array()) schema(where, "expected an array of state labels");
    StateSet out = StateSet::of(states.size(), {});
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_string()) schema(where + "/" + std::to_string(i), "expected a state label");
        const auto idx = states.find(arr[i].get<std::string>());
        if (!idx) schema(where + "/" + std::to_string(i), "unknown state '" + arr[i].get<std::string>() + "'");
        out.insert(*idx);
    }
    return out;
}

Time get_time(const Json& v, const std::string& where) {
    if (!v.is_number_integer()) schema(where, "expected an integer");
    return v.get<Time>();
}

Json weights(const Vector& v) {
    Json arr = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

Json matrix(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Vector vector_from(const Json& arr, const std::string& where) {
    if (!arr.is_array()) schema(where, "expected an array of numbers");
    Vector v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) schema(where + "/" + std::to_string(i), "expected a number");
        v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    }
    return v;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

// ------------------------------------------------------------------- chains

Json to_json(const StateSet& set, const StateSpace& states) {
    Json arr = Json::array();
    for (auto i : set.members()) arr.push_back(states.label(i));
    return arr;
}

Json to_json(const KilledChain& chain) {
    const auto& sched = chain.schedule();
    Json s;
    s["kind"] = std::string(to_string(sched.kind()));
    if (sched.kind() == ScheduleKind::Periodic) s["period"] = sched.period();
    Json sets = Json::object();
    const auto& table = sched.table();
    const std::size_t explicit_sets = sched.kind() == ScheduleKind::Converging ? table.size() - 1 : table.size();
    for (std::size_t t = 0; t < explicit_sets; ++t) sets[std::to_string(t)] = to_json(table[t], chain.states());
    s["sets"] = std::move(sets);
    if (sched.kind() == ScheduleKind::Converging) {
        s["limit"] = to_json(sched.limit(), chain.states());
        s["stabilization_time"] = sched.stabilization_time();
    }
    Json doc;
    doc["states"] = chain.states().labels();
    doc["kernel"] = matrix(chain.chain().kernel.matrix());
    doc["schedule"] = std::move(s);
    return doc;
}

KilledChain chain_from_json(const Json& doc, const std::string& where) {
    only_keys(doc, where, {"states", "kernel", "schedule"});
    const auto& labels_doc = field(doc, where, "states");
    if (!labels_doc.is_array() || labels_doc.empty()) schema(where + "/states", "expected a non-empty array of labels");
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < labels_doc.size(); ++i) {
        if (!labels_doc[i].is_string()) schema(where + "/states/" + std::to_string(i), "expected a string");
        labels.push_back(labels_doc[i].get<std::string>());
    }
    const std::size_t n = labels.size();

    const auto& k = field(doc, where, "kernel");
    if (!k.is_array() || k.size() != n) schema(where + "/kernel", "expected " + std::to_string(n) + " rows");
    Matrix p(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const std::string row_path = where + "/kernel/" + std::to_string(i);
        if (!k[i].is_array() || k[i].size() != n) schema(row_path, "expected " + std::to_string(n) + " entries");
        for (std::size_t j = 0; j < n; ++j) {
            if (!k[i][j].is_number()) schema(row_path + "/" + std::to_string(j), "expected a number");
            p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = k[i][j].get<double>();
        }
    }

    AbsorbedChain chain;
    try {
        chain = AbsorbedChain(StateSpace(labels), Kernel(std::move(p)));
    } catch (const Error& e) {
        schema(where, e.what());
    }

    const std::string sp = where + "/schedule";
    const auto& s = field(doc, where, "schedule");
    only_keys(s, sp, {"kind", "period", "sets", "limit", "stabilization_time"});
    const auto& kind_doc = field(s, sp, "kind");
    const std::string kind = kind_doc.is_string() ? kind_doc.get<std::string>() : "";
    const auto& sets_doc = field(s, sp, "sets");
    if (!sets_doc.is_object()) schema(sp + "/sets", "expected an object keyed by time");
    std::vector<StateSet> sets;
    for (std::size_t t = 0; t < sets_doc.size(); ++t) {
        const auto key = std::to_string(t);
        if (!sets_doc.contains(key)) schema(sp + "/sets", "times must be 0.." + std::to_string(sets_doc.size() - 1));
        sets.push_back(labels_to_set(sets_doc.at(key), chain.states, sp + "/sets/" + key));
    }
    auto forbid = [&](const char* key) {
        if (s.contains(key)) schema(sp + "/" + key, "not allowed for kind '" + kind + "'");
    };

    try {
        if (kind == "constant") {
            forbid("period");
            forbid("limit");
            forbid("stabilization_time");
            if (sets.size() != 1) schema(sp + "/sets", "a constant schedule has exactly one set, at time 0");
            return KilledChain(std::move(chain), BoundarySchedule::constant(sets[0]));
        }
        if (kind == "periodic") {
            forbid("limit");
            forbid("stabilization_time");
            const Time period = get_time(field(s, sp, "period"), sp + "/period");
            if (period < 1 || static_cast<std::size_t>(period) != sets.size())
                schema(sp + "/period", "must equal the number of sets");
            return KilledChain(std::move(chain), BoundarySchedule::periodic(std::move(sets)));
        }
        if (kind == "converging") {
            forbid("period");
            const StateSet limit = labels_to_set(field(s, sp, "limit"), chain.states, sp + "/limit");
            if (s.contains("stabilization_time")) {
                const Time ts = get_time(s.at("stabilization_time"), sp + "/stabilization_time");
                if (ts < 0 || static_cast<std::size_t>(ts) != sets.size())
                    schema(sp + "/stabilization_time", "must equal the number of sets before the limit");
            }
            return KilledChain(std::move(chain), BoundarySchedule::converging(std::move(sets), limit));
        }
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Schema) throw;
        schema(sp, e.what());
    }
    schema(sp + "/kind", "expected one of constant, periodic, converging");
}

// ------------------------------------------------------------ certificates

Json to_json(const Measure& mu) { return weights(mu.weights); }

Json to_json(const CVCertificate& cert) {
    Json nu = Json::object();
    for (const auto& [t, m] : cert.nu) nu[std::to_string(t)] = to_json(m);
    Json doc;
    doc["t0"] = cert.t0;
    doc["c1"] = cert.c1;
    doc["c2"] = cert.c2;
    doc["horizon_used"] = cert.horizon_used;
    doc["stabilization"] = cert.stabilization;
    doc["nu"] = std::move(nu);
    doc["valid"] = cert.valid;
    return doc;
}

CVCertificate certificate_from_json(const Json& doc, const std::string& where) {
    only_keys(doc, where, {"t0", "c1", "c2", "horizon_used", "stabilization", "nu", "valid"});
    CVCertificate cert;
    cert.t0 = get_time(field(doc, where, "t0"), where + "/t0");
    auto number = [&](const char* key) {
        const auto& v = field(doc, where, key);
        if (!v.is_number()) schema(where + "/" + key, "expected a number");
        return v.get<double>();
    };
    cert.c1 = number("c1");
    cert.c2 = number("c2");
    cert.horizon_used = get_time(field(doc, where, "horizon_used"), where + "/horizon_used");
    if (doc.contains("stabilization")) cert.stabilization = number("stabilization");
    const auto& valid = field(doc, where, "valid");
    if (!valid.is_boolean()) schema(where + "/valid", "expected a boolean");
    cert.valid = valid.get<bool>();
    const auto& nu = field(doc, where, "nu");
    if (!nu.is_object()) schema(where + "/nu", "expected an object keyed by time");
    for (const auto& [key, arr] : nu.items()) {
        Time t = 0;
        const auto res = std::from_chars(key.data(), key.data() + key.size(), t);
        if (res.ec != std::errc{} || res.ptr != key.data() + key.size()) schema(where + "/nu/" + key, "bad time key");
        cert.nu[t] = Measure{vector_from(arr, where + "/nu/" + key), true};
    }
    return cert;
}

// ---------------------------------------------------------------- Q-process

Json to_json(const EtaTable& eta) {
    Json values = Json::object();
    for (std::size_t s = 0; s < eta.values.size(); ++s) values[std::to_string(s)] = weights(eta.values[s]);
    Json doc;
    doc["normalization"] = eta.normalization == EtaNormalization::ReferenceState ? "reference_state" : "nu_mass";
    doc["reference_state"] = eta.reference_state ? Json(*eta.reference_state) : Json(nullptr);
    doc["truncation_horizon"] = eta.truncation_horizon;
    doc["values"] = std::move(values);
    doc["slice_rates"] = eta.slice_rates;
    doc["error_bounds"] = eta.error_bounds;
    return doc;
}

Json to_json(const QProcess& qp) {
    Json kernels = Json::object();
    for (std::size_t s = 0; s < qp.kernels().size(); ++s) kernels[std::to_string(s)] = matrix(qp.kernels()[s]);
    Json doc;
    doc["certificate"] = to_json(qp.certificate());
    doc["eta"] = to_json(qp.eta());
    doc["kernels"] = std::move(kernels);
    return doc;
}

Json to_json(const QSDTriple& triple) {
    Json doc;
    doc["alpha"] = to_json(triple.alpha);
    doc["rho"] = triple.rho;
    doc["lambda"] = triple.lambda;
    doc["eta"] = weights(triple.eta);
    doc["reference"] = triple.reference;
    doc["left_residual"] = triple.left_residual;
    doc["right_residual"] = triple.right_residual;
    return doc;
}

Json to_json(const LimitReport& report) {
    Json diag = Json::array();
    for (const auto& [t, v] : report.diagnostics) diag.push_back(Json::array({t, v}));
    Json doc;
    doc["kind"] = std::string(to_string(report.kind));
    doc["value"] = to_json(report.value);
    doc["diagnostics"] = std::move(diag);
    doc["converged"] = report.converged;
    if (report.independence_gap) doc["independence_gap"] = *report.independence_gap;
    if (report.rate_constant) doc["rate_constant"] = *report.rate_constant;
    return doc;
}

Json to_json(const BoundCheckRecord& r) {
    Json doc;
    doc["seed"] = r.seed;
    doc["s"] = r.s;
    doc["t"] = r.t;
    doc["T"] = r.T;
    doc["x"] = r.x;
    doc["lhs"] = r.lhs;
    doc["rhs"] = r.rhs;
    doc["margin"] = r.margin;
    doc["pass"] = r.pass;
    return doc;
}

Json to_json(const Histogram& h) {
    Json doc;
    doc["edges"] = h.edges;
    doc["mass"] = h.mass;
    doc["stderr"] = h.standard_error;
    doc["survivors"] = h.survivors;
    doc["total"] = h.total;
    doc["clamped"] = h.clamped;
    return doc;
}

// --------------------------------------------------------------------- CSV

std::string diagnostics_csv(const LimitReport& report) {
    std::ostringstream out;
    out << "t,tv\n";
    auto rows = report.diagnostics;
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [t, v] : rows) out << t << ',' << format_double(v) << '\n';
    return out.str();
}

std::string bound_records_csv(const std::vector<BoundCheckRecord>& records) {
    std::ostringstream out;
    out << "seed,s,t,T,x,lhs,rhs,margin,pass\n";
    for (const auto& r : records)
        out << r.seed << ',' << r.s << ',' << r.t << ',' << r.T << ',' << csv_field(r.x) << ',' << format_double(r.lhs)
            << ',' << format_double(r.rhs) << ',' << format_double(r.margin) << ',' << (r.pass ? "true" : "false")
            << '\n';
    return out.str();
}

std::string histogram_csv(const Histogram& h) {
    std::ostringstream out;
    out << "bin_left,bin_right,mass,stderr\n";
    for (std::size_t i = 0; i < h.mass.size(); ++i)
        out << format_double(h.edges[i]) << ',' << format_double(h.edges[i + 1]) << ',' << format_double(h.mass[i])
            << ',' << format_double(h.standard_error[i]) << '\n';
    return out.str();
}

std::string paths_csv(const PathBatch& batch) {
    std::ostringstream out;
    out << "path_id,t,x\n";
    const double stride = batch.dt * static_cast<double>(batch.thin);
    for (std::size_t p = 0; p < batch.paths.size(); ++p) {
        const auto& traj = batch.paths[p].trajectory;
        for (std::size_t k = 0; k < traj.size(); ++k)
            out << p << ',' << format_double(stride * static_cast<double>(k)) << ',' << format_double(traj[k]) << '\n';
    }
    return out.str();
}

}  // namespace qexodus
