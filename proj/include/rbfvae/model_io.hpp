#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "rbfvae/vae.hpp"

namespace rbfvae::model_io {

using json = nlohmann::json;

inline constexpr std::string_view format_name = "rbfvae-model";
inline constexpr int format_version = 1;

std::string_view software_version() noexcept;

struct ModelArtifact {
    vae::VaeModel model;
    std::optional<vae::SelectionReport> selection;
    /// Free-form run metadata (data paths, split, config hash).
    json metadata = json::object();
};

json config_to_json(const vae::TrainConfig& config);
vae::TrainConfig config_from_json(const json& j);

json layer_to_json(const nn::DenseLayer& layer);
nn::DenseLayer layer_from_json(const json& j);

json to_json(const ModelArtifact& artifact);
ModelArtifact from_json(const json& j);

/// Hex FNV-1a of the serialized model (parameters, posteriors, config); metadata excluded.
std::string model_hash(const vae::VaeModel& model);

void save(const ModelArtifact& artifact, const std::filesystem::path& path);
ModelArtifact load(const std::filesystem::path& path);

/// Writes `j` with a trailing newline; throws an io error when the file cannot be written.
void write_json(const json& j, const std::filesystem::path& path);
json read_json(const std::filesystem::path& path);

}  // namespace rbfvae::model_io
