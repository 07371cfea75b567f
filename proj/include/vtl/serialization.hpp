#pragma once

// JSON snapshots of hyperparameters and posteriors. Matrices are nested
// row-major arrays, vectors flat arrays.

#include "vtl/bayes_gcm.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace vtl {

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PriorHyperparams& prior);
nlohmann::json to_json(const SourcePosterior& post);
nlohmann::json to_json(const TargetPosterior& post);

PriorHyperparams prior_from_json(const nlohmann::json& j);
SourcePosterior source_posterior_from_json(const nlohmann::json& j);
TargetPosterior target_posterior_from_json(const nlohmann::json& j);

/// Everything needed to classify new target data in a later invocation.
struct PosteriorSnapshot {
  PriorHyperparams prior;
  std::optional<SourcePosterior> source;
  TargetPosterior target;
};

void write_snapshot(const std::filesystem::path& path, const PosteriorSnapshot& snap);
PosteriorSnapshot read_snapshot(const std::filesystem::path& path);

}  // namespace vtl
