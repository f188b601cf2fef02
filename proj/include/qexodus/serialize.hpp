#pragma once

// JSON and CSV forms of the library's results.  Doubles are written with the
// shortest representation that reads back to the same bits.

#include "qexodus/convergence_lab.hpp"
#include "qexodus/diffusion.hpp"

#include <json.hpp>

#include <string>

namespace qexodus {

using Json = nlohmann::ordered_json;

Json to_json(const StateSet& set, const StateSpace& states);
Json to_json(const KilledChain& chain);
// Throws Schema naming the offending field (prefixed by `where`).
KilledChain chain_from_json(const Json& doc, const std::string& where = "");

Json to_json(const Measure& mu);
Json to_json(const CVCertificate& cert);
CVCertificate certificate_from_json(const Json& doc, const std::string& where = "");

Json to_json(const EtaTable& eta);
Json to_json(const QProcess& qp);
Json to_json(const QSDTriple& triple);
Json to_json(const LimitReport& report);
Json to_json(const BoundCheckRecord& record);
Json to_json(const Histogram& histogram);

std::string format_double(double v);

std::string diagnostics_csv(const LimitReport& report);
std::string bound_records_csv(const std::vector<BoundCheckRecord>& records);
std::string histogram_csv(const Histogram& histogram);
std::string paths_csv(const PathBatch& batch);

}  // namespace qexodus
