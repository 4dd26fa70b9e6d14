#include "exr/timeline/layout.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace exr::timeline {

void WarpParams::validate() const {
  if (!(line_width_m > 0) || !(min_gap_days > 0) || !(sub_width_m > 0)) {
    throw Error(Errc::InvalidParams, "warp parameters must be positive");
  }
  if (!(same_day_epsilon > 0) || !(same_day_epsilon < 0.05)) {
    throw Error(Errc::InvalidParams, "same_day_epsilon must be in (0, 0.05)");
  }
}

Eigen::VectorXd warped_positions(const Eigen::VectorXd& visit_days, const DensitySpec& spec,
                                 const WarpParams& params) {
  params.validate();
  const Eigen::Index n = visit_days.size();
  if (n == 0) throw Error(Errc::NoEncounters, "no encounters to lay out");
  const double width = params.line_width_m;
  if (n == 1) return Eigen::VectorXd::Constant(1, width / 2);

  const Eigen::VectorXd gaps = floored_gaps(visit_days, params.min_gap_days);
  const Eigen::VectorXd rho = visit_density(visit_days, spec, params.min_gap_days);
  Eigen::VectorXd length = warp_gaps(gaps, rho);

  Eigen::Array<bool, Eigen::Dynamic, 1> same_day(n - 1);
  for (Eigen::Index i = 0; i < n - 1; ++i) {
    same_day[i] = std::floor(visit_days[i]) == std::floor(visit_days[i + 1]);
  }
  const auto same_count = static_cast<double>(same_day.count());
  double normal_total = 0;
  for (Eigen::Index i = 0; i < n - 1; ++i) {
    if (!same_day[i]) normal_total += length[i];
  }

  if (same_count == static_cast<double>(n - 1) || !(normal_total > 0)) {
    length.setOnes();
  } else if (same_count > 0) {
    // Give each same-day gap a share that normalizes to epsilon * width.
    const double eps = std::min(params.same_day_epsilon, 0.5 / same_count);
    const double share = eps / (1.0 - same_count * eps) * normal_total;
    for (Eigen::Index i = 0; i < n - 1; ++i) {
      if (same_day[i]) length[i] = share;
    }
  }

  Eigen::VectorXd pos(n);
  pos[0] = 0.0;
  for (Eigen::Index i = 1; i < n; ++i) pos[i] = pos[i - 1] + length[i - 1];
  const double total = pos[n - 1];
  pos *= width / total;
  pos[n - 1] = width;
  return pos;
}

std::vector<EventPlacement> build_event_subtimeline(const fhir::Encounter& encounter,
                                                    double sub_width) {
  std::vector<EventPlacement> out;
  const auto& events = encounter.events;
  out.reserve(events.size());
  const bool timed = encounter.end && *encounter.end > encounter.start;
  const auto n = events.size();
  for (std::size_t i = 0; i < n; ++i) {
    double x;
    if (timed) {
      const double span = static_cast<double>((*encounter.end - encounter.start).count());
      const double offset = static_cast<double>((events[i].effective_time - encounter.start).count());
      x = std::clamp(offset / span, 0.0, 1.0) * sub_width;
    } else if (n == 1) {
      x = sub_width / 2;
    } else {
      x = sub_width * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    out.push_back({events[i].ref, glyph_for(events[i].kind), x});
  }
  return out;
}

WarpedLayout build_timeline(const fhir::PatientRecord& record, const DensitySpec& spec,
                            const WarpParams& params) {
  if (record.encounters.empty()) {
    throw Error(Errc::NoEncounters, record.patient_ref.str() + " has no encounters");
  }
  Eigen::VectorXd days(static_cast<Eigen::Index>(record.encounters.size()));
  for (std::size_t i = 0; i < record.encounters.size(); ++i) {
    days[static_cast<Eigen::Index>(i)] = fhir::to_days(record.encounters[i].start);
  }
  const Eigen::VectorXd pos = warped_positions(days, spec, params);

  WarpedLayout layout;
  layout.patient_ref = record.patient_ref;
  layout.line_width_m = params.line_width_m;
  for (std::size_t i = 0; i < record.encounters.size(); ++i) {
    const auto& enc = record.encounters[i];
    layout.positions.push_back({enc.ref, pos[static_cast<Eigen::Index>(i)]});
    layout.sub_layouts.push_back(build_event_subtimeline(enc, params.sub_width_m));
  }
  return layout;
}

nlohmann::json layout_to_json(const WarpedLayout& layout) {
  using nlohmann::json;
  json encounters = json::array();
  json events = json::array();
  for (std::size_t i = 0; i < layout.positions.size(); ++i) {
    const auto& enc = layout.positions[i];
    encounters.push_back({{"ref", enc.ref.str()}, {"x_m", enc.x_m}});
    for (const auto& ev : layout.sub_layouts[i]) {
      events.push_back({
          {"ref", ev.ref.str()},
          {"encounter", enc.ref.str()},
          {"shape", std::string(to_string(ev.glyph.shape))},
          {"color", to_hex(ev.glyph.color)},
          {"x_local", ev.x_local},
      });
    }
  }
  return {
      {"patient", layout.patient_ref.str()},
      {"line_width_m", layout.line_width_m},
      {"encounters", std::move(encounters)},
      {"events", std::move(events)},
  };
}

std::string layout_export(const WarpedLayout& layout) { return layout_to_json(layout).dump(); }

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void svg_marker(std::ostringstream& os, GlyphShape shape, double cx, double cy, double r,
                const std::string& fill) {
  switch (shape) {
    case GlyphShape::Cube:
      os << "<rect x=\"" << cx - r << "\" y=\"" << cy - r << "\" width=\"" << 2 * r
         << "\" height=\"" << 2 * r << "\" fill=\"" << fill << "\"/>";
      break;
    case GlyphShape::Pyramid:
      os << "<polygon points=\"" << cx << ',' << cy - r << ' ' << cx - r << ',' << cy + r << ' '
         << cx + r << ',' << cy + r << "\" fill=\"" << fill << "\"/>";
      break;
    case GlyphShape::Pill:
    case GlyphShape::Capsule:
      os << "<rect x=\"" << cx - r << "\" y=\"" << cy - r / 2 << "\" width=\"" << 2 * r
         << "\" height=\"" << r << "\" rx=\"" << r / 2 << "\" fill=\"" << fill << "\"/>";
      break;
    case GlyphShape::Torus:
      os << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"" << r
         << "\" fill=\"none\" stroke-width=\"" << r / 2 << "\" stroke=\"" << fill << "\"/>";
      break;
    case GlyphShape::Octahedron:
      os << "<polygon points=\"" << cx << ',' << cy - r << ' ' << cx + r << ',' << cy << ' ' << cx
         << ',' << cy + r << ' ' << cx - r << ',' << cy << "\" fill=\"" << fill << "\"/>";
      break;
    default:
      os << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"" << r << "\" fill=\"" << fill
         << "\"/>";
  }
}

}  // namespace

std::string layout_to_svg(const WarpedLayout& layout) {
  constexpr double kMargin = 40, kTrack = 920, kHeight = 260, kLineY = 80;
  const auto px = [&](double x_m) { return kMargin + x_m / layout.line_width_m * kTrack; };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kMargin * 2 + kTrack
     << "\" height=\"" << kHeight << "\">\n"
     << "<title>" << xml_escape(layout.patient_ref.str()) << "</title>\n"
     << "<line x1=\"" << kMargin << "\" y1=\"" << kLineY << "\" x2=\"" << kMargin + kTrack
     << "\" y2=\"" << kLineY << "\" stroke=\"#444\" stroke-width=\"2\"/>\n";

  const auto encounter_glyph = glyph_for(fhir::ResourceType::Encounter);
  for (std::size_t i = 0; i < layout.positions.size(); ++i) {
    const auto& enc = layout.positions[i];
    const double cx = px(enc.x_m);
    os << "<g class=\"encounter\" data-ref=\"" << xml_escape(enc.ref.str()) << "\">";
    svg_marker(os, encounter_glyph.shape, cx, kLineY, 8, to_hex(encounter_glyph.color));
    os << "<text x=\"" << cx << "\" y=\"" << kLineY - 16
       << "\" font-size=\"9\" text-anchor=\"middle\">" << xml_escape(enc.ref.id) << "</text>";
    // Events hang below their encounter, scaled onto a fixed sub-track.
    const auto& events = layout.sub_layouts[i];
    for (std::size_t k = 0; k < events.size(); ++k) {
      const auto& ev = events[k];
      const double ex = cx - 20 + ev.x_local * 80;
      const double ey = kLineY + 30 + static_cast<double>(k % 8) * 16;
      os << "<g class=\"event\" data-ref=\"" << xml_escape(ev.ref.str()) << "\">";
      svg_marker(os, ev.glyph.shape, ex, ey, 5, to_hex(ev.glyph.color));
      os << "<title>" << xml_escape(ev.glyph.label) << "</title></g>";
    }
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace exr::timeline
