#include "dfl/report_json.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace dfl {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

ordered_json attribute_json(const AttributeReport& attr) {
  ordered_json j;
  j["column"] = attr.column;
  j["binary"] = attr.binary;
  if (attr.binary) {
    j["tpr_gap"] = attr.tpr.aggregate_pct;
    j["mcdp_gap"] = attr.mcdp.aggregate_pct;
    j["tpr_classes"] = attr.tpr.classes;
    j["tpr_per_class"] = attr.tpr.gaps;
    j["tpr_excluded"] = attr.tpr.excluded;
    j["mcdp_per_class"] = attr.mcdp.per_class;
  }
  return j;
}

std::string g17(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string report_json(const FairnessReport& report,
                        const std::string& config_hash) {
  ordered_json j;
  j["accuracy"] = report.accuracy_pct;
  j["tpr_gap"] = number_or_null(report.tpr_aggregate());
  j["mcdp_gap"] = number_or_null(report.mcdp_aggregate());
  ordered_json per_class;
  for (const auto& attr : report.attributes) {
    if (!attr.binary) continue;
    per_class["tpr_classes"] = attr.tpr.classes;
    per_class["tpr_gaps"] = attr.tpr.gaps;
    per_class["tpr_excluded"] = attr.tpr.excluded;
    per_class["mcdp"] = attr.mcdp.per_class;
    break;
  }
  j["per_class"] = per_class.is_null() ? ordered_json::object() : per_class;
  ordered_json attrs = ordered_json::array();
  for (const auto& attr : report.attributes) attrs.push_back(attribute_json(attr));
  j["per_attribute"] = attrs;
  j["dc_z_latent"] =
      report.dc_z_latent ? ordered_json(*report.dc_z_latent) : nullptr;
  j["dc_z_latent_given_y"] = report.dc_z_latent_given_y
                                 ? ordered_json(*report.dc_z_latent_given_y)
                                 : nullptr;
  j["config_hash"] = config_hash;
  return j.dump(2) + "\n";
}

std::string trajectory_csv(const std::vector<EpochRecord>& records) {
  std::ostringstream out;
  out << "epoch,loss,ce,dc_z,dc_y,test_accuracy,tpr_gap,mcdp_gap\n";
  for (const auto& r : records) {
    out << r.epoch << ',' << g17(r.loss) << ',' << g17(r.ce) << ','
        << g17(r.dc_z) << ',' << g17(r.dc_y) << ',' << g17(r.test_accuracy)
        << ',' << g17(r.tpr_gap) << ',' << g17(r.mcdp_gap) << '\n';
  }
  return out.str();
}

std::string sweep_json(const AlphaSelection& selection) {
  ordered_json j;
  j["chosen_alpha"] = selection.chosen;
  j["accuracy_filter_passed"] = selection.any_passed;
  j["standard_val_accuracy"] = selection.standard_accuracy;
  j["accuracy_threshold"] = 0.95 * selection.standard_accuracy;
  ordered_json table = ordered_json::array();
  for (const auto& c : selection.table) {
    ordered_json row;
    row["alpha"] = c.alpha;
    row["val_accuracy"] = c.val_accuracy;
    row["val_tpr_gap"] = number_or_null(c.val_tpr);
    row["val_mcdp_gap"] = number_or_null(c.val_mcdp);
    row["passed_filter"] = c.passed_filter;
    table.push_back(row);
  }
  j["candidates"] = table;
  return j.dump(2) + "\n";
}

}  // namespace dfl
