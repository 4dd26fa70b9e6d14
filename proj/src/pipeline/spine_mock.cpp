#include "exr/pipeline/spine_mock.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "exr/error.hpp"
#include "exr/volume/exrm.hpp"
#include "exr/volume/metrics.hpp"

namespace exr::pipeline {

using nlohmann::json;

PipelineDescriptor spine_pipeline_descriptor() {
  return {
      std::string(kSpinePipelineId),
      "Vertebra localization and segmentation (mock)",
      {{std::string(kSpineInputSlot), "labelvol"}},
      {{"bbox", "json"}, {"centroids", "json"}, {"fused", "labelvol"}, {"meshes", "exrm[]"}},
      {"spine_localization", "vertebrae_localization", "vertebrae_segmentation"},
  };
}

std::string payload_blob_path(const std::string& header_path) {
  const auto dot = header_path.rfind('.');
  const auto slash = header_path.rfind('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return header_path + ".raw";
  return header_path.substr(0, dot) + ".raw";
}

volume::LabelVolume load_volume_blob(const upstream::BlobStore& storage, const std::string& header_path) {
  return volume::load_label_volume(storage.get(header_path), storage.get(payload_blob_path(header_path)));
}

std::vector<std::string> run_spine_pipeline(JobContext& ctx) {
  const auto prefix = ctx.output_prefix();
  auto& store = ctx.storage();
  std::vector<std::string> outputs;

  // Stage 1: region of interest around every labelled voxel.
  ctx.begin_stage(0);
  const auto input = load_volume_blob(store, ctx.inputs().at(std::string(kSpineInputSlot)));
  const auto box = volume::nonzero_bounding_box(input);
  if (!box) throw Error(Errc::EmptyVolume, "input volume has no labelled voxels");
  const Eigen::Vector3d lo = input.to_physical<double>(box->first.cast<double>());
  const Eigen::Vector3d hi = input.to_physical<double>(box->second.cast<double>());
  store.put(prefix + "bbox.json",
            json{{"min_voxel", {box->first.x(), box->first.y(), box->first.z()}},
                 {"max_voxel", {box->second.x(), box->second.y(), box->second.z()}},
                 {"min_mm", {lo.x(), lo.y(), lo.z()}},
                 {"max_mm", {hi.x(), hi.y(), hi.z()}}}
                .dump());
  outputs.push_back(prefix + "bbox.json");

  // Stage 2: one centre per label, ordered along the spine axis (z).
  ctx.begin_stage(1);
  struct Center {
    volume::Label label;
    Eigen::Vector3d position;
  };
  std::vector<Center> centers;
  for (auto label : volume::labels_present(input)) centers.push_back({label, volume::centroid(input, label)});
  std::stable_sort(centers.begin(), centers.end(), [](const Center& a, const Center& b) {
    return a.position.z() < b.position.z() || (a.position.z() == b.position.z() && a.label < b.label);
  });
  json centroid_list = json::array();
  for (const auto& c : centers) {
    centroid_list.push_back({{"label", c.label}, {"x", c.position.x()}, {"y", c.position.y()}, {"z", c.position.z()}});
  }
  store.put(prefix + "centroids.json", json{{"centroids", centroid_list}}.dump());
  outputs.push_back(prefix + "centroids.json");

  // Stage 3: per-label binary masks, fused by maximum response, then meshed.
  ctx.begin_stage(2);
  const auto fused = volume::fuse_binary_masks(volume::decompose(input, 1.0f));
  store.put(prefix + "fused.json", volume::volume_header_json(fused));
  store.put(prefix + "fused.raw", volume::volume_payload(fused));
  outputs.push_back(prefix + "fused.json");
  for (const auto& c : centers) {
    const auto path = prefix + "mesh_" + std::to_string(c.label) + ".exrm";
    store.put(path, label_mesh_exrm(fused, c.label));
    outputs.push_back(path);
  }
  return outputs;
}

void register_spine_pipeline(PipelineRegistry& registry) {
  registry.register_pipeline(spine_pipeline_descriptor(), run_spine_pipeline);
}

std::string label_mesh_exrm(const volume::LabelVolume& vol, volume::Label label) {
  const auto mesh = volume::extract_mesh(vol, label);
  if (mesh.empty()) throw Error(Errc::LabelAbsent, "label " + std::to_string(label) + " is not in the volume");
  return volume::encode_mesh(mesh);
}

std::vector<std::string> mesh_outputs(const PipelineJob& job) {
  std::vector<std::string> out;
  for (const auto& path : job.outputs) {
    if (path.ends_with(".exrm")) out.push_back(path);
  }
  return out;
}

}  // namespace exr::pipeline
