#include "exr/fhir/resource_set.hpp"

#include <algorithm>

#include "exr/error.hpp"

namespace exr::fhir {

namespace {

using nlohmann::json;

constexpr std::string_view kUrnPrefix = "urn:uuid:";

std::optional<std::string> string_field(const json& obj, std::string_view key) {
  if (!obj.is_object()) return std::nullopt;
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

std::optional<std::string> reference_of(const json& resource, std::string_view field) {
  if (!resource.is_object()) return std::nullopt;
  auto it = resource.find(field);
  if (it == resource.end()) return std::nullopt;
  return string_field(*it, "reference");
}

void rewrite_references(json& node, const ResourceSet& set) {
  if (node.is_object()) {
    for (auto& [key, value] : node.items()) {
      if (key == "reference" && value.is_string()) {
        const auto& text = value.get_ref<const std::string&>();
        if (text.starts_with(kUrnPrefix)) {
          if (auto ref = set.lookup(text)) value = ref->str();
        }
      } else {
        rewrite_references(value, set);
      }
    }
  } else if (node.is_array()) {
    for (auto& item : node) rewrite_references(item, set);
  }
}

}  // namespace

std::size_t ResourceSet::skipped_count() const noexcept {
  std::size_t total = 0;
  for (const auto& [_, n] : skipped_) total += n;
  return total;
}

std::map<ResourceType, std::size_t> ResourceSet::counts() const {
  std::map<ResourceType, std::size_t> out;
  for (const auto& [ref, _] : resources_) ++out[ref.type];
  return out;
}

const json& ResourceSet::resolve(const ResourceRef& ref) const {
  auto it = resources_.find(ref);
  if (it == resources_.end()) throw Error(Errc::NotFound, "no resource " + ref.str());
  return it->second;
}

std::optional<ResourceRef> ResourceSet::lookup(std::string_view reference) const {
  if (reference.starts_with(kUrnPrefix)) {
    auto it = aliases_.find(reference);
    if (it == aliases_.end()) return std::nullopt;
    return it->second;
  }
  auto ref = ResourceRef::parse(reference);
  if (!ref || !resources_.contains(*ref)) return std::nullopt;
  return ref;
}

std::span<const ResourceRef> ResourceSet::refs_for_patient(std::string_view patient_id) const {
  auto it = patient_index_.find(patient_id);
  if (it == patient_index_.end()) return {};
  return it->second;
}

json ResourceSet::normalized(const ResourceRef& ref) const {
  json copy = resolve(ref);
  rewrite_references(copy, *this);
  return copy;
}

void ResourceSet::add_bundle(const json& bundle) {
  if (!bundle.is_object() || string_field(bundle, "resourceType") != "Bundle") {
    throw Error(Errc::NotABundle, "document is not a FHIR Bundle");
  }
  auto entries = bundle.find("entry");
  if (entries == bundle.end()) return;
  if (!entries->is_array()) throw Error(Errc::NotABundle, "Bundle.entry is not an array");

  for (const auto& entry : *entries) {
    const auto res = entry.find("resource");
    if (!entry.is_object() || res == entry.end() || !res->is_object()) {
      ++skipped_["(no resource)"];
      continue;
    }
    const auto type_name = string_field(*res, "resourceType").value_or("(untyped)");
    const auto type = parse_resource_type(type_name);
    if (!type) {
      ++skipped_[type_name];
      continue;
    }
    const auto full_url = string_field(entry, "fullUrl");
    auto id = string_field(*res, "id");
    if ((!id || id->empty()) && full_url && full_url->starts_with(kUrnPrefix)) {
      id = full_url->substr(kUrnPrefix.size());
    }
    if (!id || id->empty()) {
      ++skipped_[type_name + " (no id)"];
      continue;
    }
    ResourceRef ref{*type, *id};
    if (!resources_.emplace(ref, *res).second) {
      throw Error(Errc::DuplicateResource, "duplicate resource " + ref.str());
    }
    if (full_url && full_url->starts_with(kUrnPrefix)) aliases_.emplace(*full_url, ref);
  }
}

void ResourceSet::build_index() {
  patient_index_.clear();
  for (const auto& [ref, resource] : resources_) {
    if (ref.type == ResourceType::Patient) continue;
    for (std::string_view field : {"subject", "patient"}) {
      auto target = reference_of(resource, field);
      if (!target) continue;
      auto resolved = lookup(*target);
      if (resolved && resolved->type == ResourceType::Patient) {
        patient_index_[resolved->id].push_back(ref);
        break;
      }
    }
  }
}

ResourceSet parse_bundle(std::string_view json_bytes) {
  json doc = json::parse(json_bytes, nullptr, false);
  if (doc.is_discarded()) throw Error(Errc::MalformedJson, "bundle is not valid JSON");
  ResourceSet set;
  set.add_bundle(doc);
  set.build_index();
  return set;
}

ResourceSet parse_bundles(std::span<const std::string> documents) {
  ResourceSet set;
  for (const auto& text : documents) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw Error(Errc::MalformedJson, "bundle is not valid JSON");
    set.add_bundle(doc);
  }
  set.build_index();
  return set;
}

const json& resolve_reference(const ResourceSet& set, const ResourceRef& ref) {
  return set.resolve(ref);
}

PatientSummary summarize_patient(const ResourceRef& ref, const json& patient) {
  PatientSummary out;
  out.ref = ref;
  out.gender = string_field(patient, "gender").value_or("unknown");
  if (auto bd = string_field(patient, "birthDate")) out.birth_date = parse_date(*bd);

  if (auto names = patient.find("name");
      names != patient.end() && names->is_array() && !names->empty()) {
    const auto& name = names->front();
    if (auto text = string_field(name, "text")) {
      out.name = *text;
    } else {
      std::string joined;
      if (auto given = name.find("given"); given != name.end() && given->is_array()) {
        for (const auto& g : *given) {
          if (!g.is_string()) continue;
          if (!joined.empty()) joined += ' ';
          joined += g.get<std::string>();
        }
      }
      if (auto family = string_field(name, "family")) {
        if (!joined.empty()) joined += ' ';
        joined += *family;
      }
      out.name = std::move(joined);
    }
  }
  if (out.name.empty()) out.name = kUnnamedPatient;
  return out;
}

std::vector<PatientSummary> list_patients(const ResourceSet& set) {
  std::vector<PatientSummary> out;
  // The map is ordered by (type, id), so Patient entries come out sorted by id.
  for (const auto& [ref, resource] : set.resources()) {
    if (ref.type == ResourceType::Patient) out.push_back(summarize_patient(ref, resource));
  }
  return out;
}

json to_json(const PatientSummary& summary) {
  return {
      {"id", summary.ref.id},
      {"name", summary.name},
      {"birth_date", summary.birth_date ? json(format_date(*summary.birth_date)) : json(nullptr)},
      {"gender", summary.gender},
  };
}

}  // namespace exr::fhir
