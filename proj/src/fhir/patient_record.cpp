#include "exr/fhir/patient_record.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <tuple>

#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include "exr/error.hpp"

namespace exr::fhir {

namespace {

using nlohmann::json;

const json* field(const json& obj, std::string_view key) {
  if (!obj.is_object()) return nullptr;
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::optional<std::string> text_field(const json& obj, std::string_view key) {
  const json* f = field(obj, key);
  if (!f || !f->is_string()) return std::nullopt;
  return f->get<std::string>();
}

std::optional<Timestamp> time_field(const json& obj, std::string_view key) {
  if (auto text = text_field(obj, key)) return parse_datetime(*text);
  return std::nullopt;
}

std::optional<Timestamp> period_start(const json& obj, std::string_view key) {
  if (const json* p = field(obj, key)) return time_field(*p, "start");
  return std::nullopt;
}

std::string codeable_text(const json* cc) {
  if (!cc || !cc->is_object()) return {};
  if (auto text = text_field(*cc, "text")) return *text;
  if (const json* coding = field(*cc, "coding"); coding && coding->is_array()) {
    for (const auto& c : *coding) {
      if (auto display = text_field(c, "display")) return *display;
    }
    for (const auto& c : *coding) {
      if (auto code = text_field(c, "code")) return *code;
    }
  }
  return {};
}

std::string first_codeable_text(const json* list) {
  if (!list || !list->is_array()) return {};
  for (const auto& cc : *list) {
    if (auto t = codeable_text(&cc); !t.empty()) return t;
  }
  return {};
}

std::string number_text(const json& v) {
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  std::ostringstream os;
  os << v.get<double>();
  return os.str();
}

std::string quantity_text(const json& q) {
  std::string out;
  if (const json* v = field(q, "value"); v && v->is_number()) out = number_text(*v);
  if (auto unit = text_field(q, "unit")) {
    out += ' ';
    out += *unit;
  }
  return out;
}

std::string value_text(const json& obj) {
  if (const json* q = field(obj, "valueQuantity")) return quantity_text(*q);
  if (auto s = text_field(obj, "valueString")) return *s;
  if (const json* cc = field(obj, "valueCodeableConcept")) return codeable_text(cc);
  if (const json* b = field(obj, "valueBoolean"); b && b->is_boolean()) {
    return b->get<bool>() ? "true" : "false";
  }
  if (const json* i = field(obj, "valueInteger"); i && i->is_number()) return number_text(*i);
  if (const json* comps = field(obj, "component"); comps && comps->is_array()) {
    std::string out;
    for (const auto& c : *comps) {
      if (!out.empty()) out += "; ";
      out += codeable_text(field(c, "code")) + ": " + value_text(c);
    }
    return out;
  }
  return {};
}

std::string decode_base64(const std::string& data) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::string clean;
  clean.reserve(data.size());
  for (char c : data) {
    if (c != '\n' && c != '\r' && c != ' ') clean += c;
  }
  // binary_from_base64 rejects '=', so decode the unpadded text.
  while (!clean.empty() && clean.back() == '=') clean.pop_back();
  try {
    return std::string(It(clean.begin()), It(clean.end()));
  } catch (const std::exception&) {
    return {};
  }
}

void push(std::vector<std::pair<std::string, std::string>>& out, std::string key,
          std::string value) {
  if (!value.empty()) out.emplace_back(std::move(key), std::move(value));
}

std::optional<std::string> storage_path_of(const json& resource) {
  if (const json* ext = field(resource, "extension"); ext && ext->is_array()) {
    for (const auto& e : *ext) {
      if (text_field(e, "url") == kStoragePathExtension) {
        if (auto v = text_field(e, "valueString")) return v;
      }
    }
  }
  return std::nullopt;
}

std::string display_of(ResourceType kind, const json& r) {
  std::string out;
  switch (kind) {
    case ResourceType::MedicationRequest:
      out = codeable_text(field(r, "medicationCodeableConcept"));
      if (out.empty()) {
        if (const json* m = field(r, "medicationReference")) out = text_field(*m, "display").value_or("");
      }
      break;
    case ResourceType::Immunization:
      out = codeable_text(field(r, "vaccineCode"));
      break;
    case ResourceType::ImagingStudy:
      out = text_field(r, "description").value_or("");
      if (out.empty()) out = first_codeable_text(field(r, "procedureCode"));
      break;
    case ResourceType::Encounter:
      out = first_codeable_text(field(r, "type"));
      break;
    default:
      out = codeable_text(field(r, "code"));
      break;
  }
  if (out.empty()) out = std::string(to_string(kind));
  return out;
}

std::vector<std::pair<std::string, std::string>> details_of(ResourceType kind, const json& r) {
  std::vector<std::pair<std::string, std::string>> d;
  push(d, "status", text_field(r, "status").value_or(""));
  switch (kind) {
    case ResourceType::Observation:
      push(d, "category", first_codeable_text(field(r, "category")));
      push(d, "code", codeable_text(field(r, "code")));
      push(d, "value", value_text(r));
      push(d, "effective", text_field(r, "effectiveDateTime").value_or(""));
      break;
    case ResourceType::Condition:
      push(d, "clinicalStatus", codeable_text(field(r, "clinicalStatus")));
      push(d, "verificationStatus", codeable_text(field(r, "verificationStatus")));
      push(d, "code", codeable_text(field(r, "code")));
      push(d, "onset", text_field(r, "onsetDateTime").value_or(""));
      push(d, "abatement", text_field(r, "abatementDateTime").value_or(""));
      break;
    case ResourceType::MedicationRequest: {
      push(d, "intent", text_field(r, "intent").value_or(""));
      push(d, "medication", display_of(kind, r));
      push(d, "authoredOn", text_field(r, "authoredOn").value_or(""));
      if (const json* dosage = field(r, "dosageInstruction"); dosage && dosage->is_array()) {
        for (const auto& di : *dosage) {
          if (auto t = text_field(di, "text")) {
            push(d, "dosage", *t);
            break;
          }
        }
      }
      break;
    }
    case ResourceType::Procedure:
      push(d, "code", codeable_text(field(r, "code")));
      push(d, "performed", text_field(r, "performedDateTime").value_or(""));
      push(d, "reason", first_codeable_text(field(r, "reasonCode")));
      break;
    case ResourceType::Immunization:
      push(d, "vaccine", codeable_text(field(r, "vaccineCode")));
      push(d, "occurrence", text_field(r, "occurrenceDateTime").value_or(""));
      break;
    case ResourceType::DiagnosticReport:
      push(d, "code", codeable_text(field(r, "code")));
      push(d, "issued", text_field(r, "issued").value_or(""));
      push(d, "conclusion", text_field(r, "conclusion").value_or(""));
      break;
    case ResourceType::ImagingStudy: {
      if (const json* mods = field(r, "modality"); mods && mods->is_array() && !mods->empty()) {
        push(d, "modality", text_field(mods->front(), "code").value_or(""));
      }
      push(d, "description", text_field(r, "description").value_or(""));
      if (const json* n = field(r, "numberOfSeries"); n && n->is_number()) {
        push(d, "numberOfSeries", number_text(*n));
      }
      if (const json* n = field(r, "numberOfInstances"); n && n->is_number()) {
        push(d, "numberOfInstances", number_text(*n));
      }
      push(d, "started", text_field(r, "started").value_or(""));
      push(d, "storagePath", storage_path_of(r).value_or(""));
      break;
    }
    case ResourceType::Patient:
    case ResourceType::Encounter:
      break;
  }
  return d;
}

bool event_less(const EncounterEvent& a, const EncounterEvent& b) {
  return std::tie(a.effective_time, a.kind, a.ref.id) < std::tie(b.effective_time, b.kind, b.ref.id);
}

}  // namespace

std::size_t PatientRecord::event_count() const {
  std::size_t n = orphan_events.size();
  for (const auto& e : encounters) n += e.events.size();
  return n;
}

const EncounterEvent* PatientRecord::find_event(const ResourceRef& ref) const {
  for (const auto& enc : encounters) {
    for (const auto& ev : enc.events) {
      if (ev.ref == ref) return &ev;
    }
  }
  for (const auto& ev : orphan_events) {
    if (ev.ref == ref) return &ev;
  }
  return nullptr;
}

std::optional<Timestamp> effective_time_of(ResourceType kind, const json& r) {
  std::optional<Timestamp> t;
  switch (kind) {
    case ResourceType::Observation:
      if (!(t = time_field(r, "effectiveDateTime")))
        if (!(t = period_start(r, "effectivePeriod")))
          if (!(t = time_field(r, "effectiveInstant"))) t = time_field(r, "issued");
      break;
    case ResourceType::Condition:
      if (!(t = time_field(r, "onsetDateTime")))
        if (!(t = period_start(r, "onsetPeriod"))) t = time_field(r, "recordedDate");
      break;
    case ResourceType::MedicationRequest:
      t = time_field(r, "authoredOn");
      break;
    case ResourceType::Procedure:
      if (!(t = time_field(r, "performedDateTime"))) t = period_start(r, "performedPeriod");
      break;
    case ResourceType::Immunization:
      if (!(t = time_field(r, "occurrenceDateTime"))) t = time_field(r, "recorded");
      break;
    case ResourceType::DiagnosticReport:
      if (!(t = time_field(r, "effectiveDateTime")))
        if (!(t = period_start(r, "effectivePeriod"))) t = time_field(r, "issued");
      break;
    case ResourceType::ImagingStudy:
      t = time_field(r, "started");
      break;
    case ResourceType::Encounter:
      t = period_start(r, "period");
      break;
    case ResourceType::Patient:
      break;
  }
  return t;
}

EncounterEvent make_event(const ResourceRef& ref, const json& resource,
                          std::optional<Timestamp> fallback_time) {
  EncounterEvent ev;
  ev.ref = ref;
  ev.kind = ref.type;
  ev.effective_time = effective_time_of(ref.type, resource).value_or(fallback_time.value_or(Timestamp{}));
  ev.display = display_of(ref.type, resource);
  ev.detail = details_of(ref.type, resource);
  if (ref.type == ResourceType::ImagingStudy) ev.attachment = storage_path_of(resource);
  return ev;
}

PatientRecord extract_patient_record(const ResourceSet& set, std::string_view patient_id) {
  const ResourceRef patient_ref{ResourceType::Patient, std::string(patient_id)};
  const json& patient = set.resolve(patient_ref);
  const auto summary = summarize_patient(patient_ref, patient);

  PatientRecord record;
  record.patient_ref = patient_ref;
  record.name = summary.name;
  record.birth_date = summary.birth_date;
  record.gender = summary.gender;

  const auto refs = set.refs_for_patient(patient_id);
  std::map<ResourceRef, std::size_t> encounter_slot;
  for (const auto& ref : refs) {
    if (ref.type != ResourceType::Encounter) continue;
    const json& r = set.resolve(ref);
    Encounter enc;
    enc.ref = ref;
    const json* period = field(r, "period");
    auto start = period ? time_field(*period, "start") : std::nullopt;
    auto end = period ? time_field(*period, "end") : std::nullopt;
    if (!start) {
      record.warnings.push_back(ref.str() + ": no period.start");
      start = end;
    }
    if (!start) {
      record.warnings.push_back(ref.str() + ": no usable date, placed at epoch");
      start = Timestamp{};
    }
    enc.start = *start;
    if (end && *end >= *start) enc.end = end;
    record.encounters.push_back(std::move(enc));
  }
  std::sort(record.encounters.begin(), record.encounters.end(),
            [](const Encounter& a, const Encounter& b) {
              return std::tie(a.start, a.ref.id) < std::tie(b.start, b.ref.id);
            });
  for (std::size_t i = 0; i < record.encounters.size(); ++i) {
    encounter_slot.emplace(record.encounters[i].ref, i);
  }

  std::optional<Timestamp> birth;
  if (record.birth_date) birth = std::chrono::sys_days{*record.birth_date};

  for (const auto& ref : refs) {
    if (!is_event_kind(ref.type)) continue;
    const json& r = set.resolve(ref);
    std::optional<std::size_t> slot;
    if (const json* link = field(r, "encounter")) {
      if (auto target_text = text_field(*link, "reference")) {
        auto target = set.lookup(*target_text);
        auto it = target ? encounter_slot.find(*target) : encounter_slot.end();
        if (it != encounter_slot.end()) {
          slot = it->second;
        } else {
          record.warnings.push_back(ref.str() + ": dangling encounter reference " + *target_text);
        }
      }
    }
    std::optional<Timestamp> fallback = slot ? std::optional(record.encounters[*slot].start) : birth;
    if (!effective_time_of(ref.type, r) && !slot) {
      record.warnings.push_back(ref.str() + ": no effective time");
    }
    auto ev = make_event(ref, r, fallback);
    if (slot) {
      record.encounters[*slot].events.push_back(std::move(ev));
    } else {
      record.orphan_events.push_back(std::move(ev));
    }
  }
  for (auto& enc : record.encounters) std::sort(enc.events.begin(), enc.events.end(), event_less);
  std::sort(record.orphan_events.begin(), record.orphan_events.end(), event_less);
  return record;
}

json event_detail_json(const EncounterEvent& event, const json& resource) {
  json fields = json::array();
  for (const auto& [name, value] : event.detail) fields.push_back({{"name", name}, {"value", value}});

  std::string text;
  if (event.kind == ResourceType::DiagnosticReport) {
    if (const json* forms = field(resource, "presentedForm"); forms && forms->is_array()) {
      for (const auto& form : *forms) {
        auto type = text_field(form, "contentType").value_or("");
        auto data = text_field(form, "data");
        if (data && type.starts_with("text/")) {
          if (!text.empty()) text += "\n\n";
          text += decode_base64(*data);
        }
      }
    }
    if (text.empty()) text = text_field(resource, "conclusion").value_or("");
  }
  if (const json* note = field(resource, "note"); note && note->is_array()) {
    for (const auto& n : *note) {
      if (auto t = text_field(n, "text")) {
        if (!text.empty()) text += "\n\n";
        text += *t;
      }
    }
  }

  json out = {
      {"ref", event.ref.str()},
      {"kind", std::string(to_string(event.kind))},
      {"display", event.display},
      {"effective_time", format_timestamp(event.effective_time)},
      {"fields", std::move(fields)},
      {"text", text},
  };
  out["attachment"] = event.attachment ? json(*event.attachment) : json(nullptr);
  return out;
}

}  // namespace exr::fhir
