#pragma once

// JSON mappings for the domain types. Field names mirror the C++ members;
// absent optionals become null.

#include <nlohmann/json.hpp>

#include "cpwloss/participation.hpp"
#include "cpwloss/qubit_loss.hpp"
#include "cpwloss/resonance_fit.hpp"
#include "cpwloss/tls_model.hpp"
#include "cpwloss/types.hpp"

namespace cpwloss {

using nlohmann::json;

void to_json(json& j, const ResonatorFitResult& fit);
void to_json(json& j, const NotchModelParams& p);
void from_json(const json& j, NotchModelParams& p);

void to_json(json& j, const TlsFitResult& fit);
void from_json(const json& j, TlsFitResult& fit);
void to_json(json& j, const ThicknessGroup& g);
void to_json(json& j, const TlsAggregate& agg);

void to_json(json& j, const QubitRecord& r);
void to_json(json& j, const LossBudget& b);
void to_json(json& j, const ScreeningResult& s);
void to_json(json& j, const Fig1bGroup& g);
void to_json(json& j, const Fig1bSummary& s);
void to_json(json& j, const T1Fit& fit);
void to_json(json& j, const T1Statistics& s);

void to_json(json& j, const CalibrationContext& c);
void from_json(const json& j, CalibrationContext& c);
void to_json(json& j, const CpwGeometry& g);
void from_json(const json& j, CpwGeometry& g);
void to_json(json& j, const MaterialTable& m);
void from_json(const json& j, MaterialTable& m);
void to_json(json& j, const MeshOptions& o);
void from_json(const json& j, MeshOptions& o);
void to_json(json& j, const ParticipationResult& r);
void to_json(json& j, const SmSweep& s);
void to_json(json& j, const MetalSweep& s);

}  // namespace cpwloss
