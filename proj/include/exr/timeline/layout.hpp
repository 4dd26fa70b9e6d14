#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "exr/fhir/patient_record.hpp"
#include "exr/timeline/density.hpp"
#include "exr/timeline/glyph.hpp"

namespace exr::timeline {

struct WarpParams {
  double line_width_m = 2.0;
  double min_gap_days = 1.0;
  /// Final separation of same-calendar-day encounters, as a fraction of the line.
  double same_day_epsilon = 0.005;
  /// Width of each encounter's event sub-timeline.
  double sub_width_m = 0.5;

  /// Throws Error{InvalidParams}.
  void validate() const;
};

struct EventPlacement {
  fhir::ResourceRef ref;
  GlyphSpec glyph;
  double x_local = 0.0;
};

struct EncounterPlacement {
  fhir::ResourceRef ref;
  double x_m = 0.0;
};

struct WarpedLayout {
  fhir::ResourceRef patient_ref;
  double line_width_m = 2.0;
  std::vector<EncounterPlacement> positions;
  std::vector<std::vector<EventPlacement>> sub_layouts;  // parallel to positions
};

/// Positions along [0, line_width] for sorted visit days. Gaps are warped,
/// accumulated and mapped affinely onto the line; same-calendar-day pairs get
/// exactly same_day_epsilon * line_width. A single visit sits at the center.
Eigen::VectorXd warped_positions(const Eigen::VectorXd& visit_days, const DensitySpec& spec,
                                 const WarpParams& params);

/// Throws Error{NoEncounters}.
WarpedLayout build_timeline(const fhir::PatientRecord& record, const DensitySpec& spec,
                            const WarpParams& params);

/// Linear placement of an encounter's events within [0, sub_width]; uniform
/// spacing when the encounter has no end or zero duration.
std::vector<EventPlacement> build_event_subtimeline(const fhir::Encounter& encounter,
                                                    double sub_width);

/// {patient, line_width_m, encounters:[{ref, x_m}],
///  events:[{ref, encounter, shape, color, x_local}]}
nlohmann::json layout_to_json(const WarpedLayout& layout);

/// Compact serialization shared by the CLI export and the wire protocol.
std::string layout_export(const WarpedLayout& layout);

/// 2D rendering: one labeled marker per encounter, events on a row beneath.
std::string layout_to_svg(const WarpedLayout& layout);

}  // namespace exr::timeline
