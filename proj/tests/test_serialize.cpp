#include "qexodus/serialize.hpp"
#include "support/fixtures.hpp"

#include <cstdlib>

using namespace qexodus;
using namespace fixtures;

namespace {

std::string schema_error(const Json& doc) {
    try {
        chain_from_json(doc, "/model");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Schema);
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("chain documents round-trip bit for bit") {
    std::vector<KilledChain> chains{chain_a(), converging_three()};
    for (std::uint64_t seed = 0; seed < 30; ++seed)
        chains.push_back(random_chain(derive_seed(77, seed), static_cast<ScheduleKind>(seed % 3)));
    for (const auto& c : chains) {
        const Json doc = to_json(c);
        const auto text = doc.dump();
        const auto back = chain_from_json(Json::parse(text));
        CHECK(back.chain().kernel.matrix() == c.chain().kernel.matrix());
        CHECK(back.schedule() == c.schedule());
        CHECK(back.states() == c.states());
        CHECK(to_json(back).dump() == text);
    }
}

TEST_CASE("chain document layout") {
    const Json doc = to_json(converging_three());
    CHECK(doc["schedule"]["kind"] == "converging");
    CHECK(doc["schedule"]["stabilization_time"] == 3);
    CHECK(doc["schedule"]["sets"].size() == 3);
    CHECK(doc["schedule"]["limit"] == Json::array({"∂"}));
    CHECK(to_json(chain_a())["schedule"].dump() == R"({"kind":"constant","sets":{"0":["∂"]}})");
}

TEST_CASE("schema violations name the field") {
    Json doc = to_json(chain_a());
    doc["extra"] = 1;
    CHECK(schema_error(doc).find("/model/extra") != std::string::npos);

    doc = to_json(chain_a());
    doc["schedule"]["sets"]["0"] = Json::array({"zz"});
    CHECK(schema_error(doc).find("/model/schedule/sets/0/0") != std::string::npos);

    doc = to_json(chain_a());
    doc["kernel"][1] = Json::array({0.5, 0.5});
    CHECK(schema_error(doc).find("/model/kernel/1") != std::string::npos);

    doc = to_json(chain_a());
    doc["kernel"][0][0] = 0.9;
    CHECK(schema_error(doc).find("sums to") != std::string::npos);

    doc = to_json(chain_a());
    doc["schedule"]["kind"] = "spiral";
    CHECK(schema_error(doc).find("/model/schedule/kind") != std::string::npos);

    doc = to_json(chain_a());
    doc["schedule"].erase("sets");
    CHECK(schema_error(doc).find("/model/schedule/sets") != std::string::npos);
}

TEST_CASE("certificate round-trip") {
    const auto c = converging_three();
    const auto cert = certify(c, 3, 300);
    const auto back = certificate_from_json(Json::parse(to_json(cert).dump()));
    CHECK(back.t0 == cert.t0);
    CHECK(back.c1 == cert.c1);
    CHECK(back.c2 == cert.c2);
    CHECK(back.valid == cert.valid);
    REQUIRE(back.nu.size() == cert.nu.size());
    for (const auto& [t, m] : cert.nu) CHECK(back.nu.at(t).weights == m.weights);
    const auto a = to_json(certify(chain_a(), 3, 200));
    CHECK(a["t0"] == 1);
    CHECK(a["c1"].get<double>() == 0.875);
    CHECK(a["c2"].get<double>() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("shortest round-trip doubles") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -0.0, 4.0 / 7.0}) {
        const auto s = format_double(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
    CHECK(format_double(0.875) == "0.875");
}

TEST_CASE("csv series") {
    LimitReport r;
    r.diagnostics = {{2, 0.25}, {0, 1.0}, {1, 0.5}};
    CHECK(diagnostics_csv(r) == "t,tv\n0,1\n1,0.5\n2,0.25\n");

    const auto rec = make_record(4, 0, 1, 2, "a|b", 0.1, 0.2, 1.0);
    CHECK(bound_records_csv({rec}) == "seed,s,t,T,x,lhs,rhs,margin,pass\n4,0,1,2,a|b,0.1,0.2,0.1,true\n");

    Histogram h;
    h.edges = {0.0, 0.5, 1.0};
    h.mass = {0.25, 0.75};
    h.standard_error = {0.01, 0.02};
    CHECK(histogram_csv(h) == "bin_left,bin_right,mass,stderr\n0,0.5,0.25,0.01\n0.5,1,0.75,0.02\n");

    PathBatch b;
    b.dt = 0.5;
    b.thin = 2;
    b.paths.resize(1);
    b.paths[0].trajectory = {1.0, 1.5};
    CHECK(paths_csv(b) == "path_id,t,x\n0,0,1\n0,1,1.5\n");
}

TEST_CASE("Q-process and limit documents") {
    const auto c = chain_a();
    const auto cert = certify(c, 3, 200);
    const auto qp = build_qprocess(c, cert, 20);
    const Json doc = to_json(qp);
    CHECK(doc["kernels"]["0"][0][1].get<double>() == qp.kernel(0)(0, 1));
    CHECK(doc["eta"]["values"].contains("0"));
    const auto rep = quasi_limiting(c, Measure::dirac(3, 0), 5, 1e-9);
    const Json lr = to_json(rep);
    CHECK(lr["kind"] == "quasi_limiting");
    CHECK(lr["diagnostics"].size() == 6);
}
