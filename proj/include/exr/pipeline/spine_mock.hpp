#pragma once

#include <string>
#include <vector>

#include "exr/pipeline/pipeline.hpp"
#include "exr/volume/label_volume.hpp"
#include "exr/volume/mesh.hpp"

namespace exr::pipeline {

inline constexpr std::string_view kSpinePipelineId = "spine-mock";
inline constexpr std::string_view kSpineInputSlot = "volume";

/// Deterministic stand-in for the three-stage vertebra pipeline: spine box,
/// per-label centroids ordered along z, then per-label masks fused and
/// meshed. Consumes a ground-truth-style label volume.
PipelineDescriptor spine_pipeline_descriptor();

struct SpineOutputs {
  std::vector<std::string> files;  // storage paths, in emission order
};

/// Runs the mock against a label volume stored at `volume_path` (JSON header,
/// payload at the matching .raw path) and writes under ctx.output_prefix():
///   bbox.json, centroids.json, fused.json + fused.raw, mesh_<label>.exrm
/// Throws Error{EmptyVolume} when no voxel is labelled.
std::vector<std::string> run_spine_pipeline(JobContext& ctx);

void register_spine_pipeline(PipelineRegistry& registry);

/// Reads a label volume header + payload pair out of a blob store.
volume::LabelVolume load_volume_blob(const upstream::BlobStore& storage, const std::string& header_path);

/// Storage path of the payload matching a header path.
std::string payload_blob_path(const std::string& header_path);

/// EXRM bytes of one label's surface. The pipeline and the offline mesh
/// export both go through here. Throws Error{LabelAbsent}.
std::string label_mesh_exrm(const volume::LabelVolume& vol, volume::Label label);

/// Mesh output paths of a finished job, in order.
std::vector<std::string> mesh_outputs(const PipelineJob& job);

}  // namespace exr::pipeline
