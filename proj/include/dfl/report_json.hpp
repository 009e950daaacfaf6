#ifndef DFL_REPORT_JSON_HPP
#define DFL_REPORT_JSON_HPP

#include <string>

#include "dfl/metrics.hpp"
#include "dfl/training.hpp"

namespace dfl {

/// Stable metrics JSON: top-level fields {accuracy, tpr_gap, mcdp_gap,
/// per_class, per_attribute, dc_z_latent, dc_z_latent_given_y, config_hash}.
/// NaN aggregates serialize as null.
std::string report_json(const FairnessReport& report,
                        const std::string& config_hash);

/// Trajectory CSV with the fixed column set
/// epoch,loss,ce,dc_z,dc_y,test_accuracy,tpr_gap,mcdp_gap.
std::string trajectory_csv(const std::vector<EpochRecord>& records);

/// Alpha-sweep report: per-candidate table plus the selection.
std::string sweep_json(const AlphaSelection& selection);

}  // namespace dfl

#endif  // DFL_REPORT_JSON_HPP
