#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "causalshift/graph.hpp"
#include "causalshift/nn.hpp"
#include "causalshift/scm.hpp"
#include "causalshift/training.hpp"

namespace causalshift {

inline constexpr int kCheckpointVersion = 1;

/// {"n": n, "adjacency": n x n 0/1 rows}.
std::string dag_to_json(const Dag& dag);
Dag dag_from_json(std::string_view text);

struct ModelCheckpoint {
  ModelStack stack;
  OptimizerConfig::Kind optimizer = OptimizerConfig::Kind::adam;
};

/// Versioned JSON blob of n, k, hidden size, masks, optimizer kind and all
/// parameter arrays. Doubles are written in shortest round-trip form, so
/// loading reproduces the stack bit for bit.
std::string checkpoint_to_json(const ModelCheckpoint& checkpoint);
ModelCheckpoint checkpoint_from_json(std::string_view text);

std::string scm_to_json(const GroundTruthScm& scm);
GroundTruthScm scm_from_json(std::string_view text);

/// Edge probabilities plus the raw u and v logits.
std::string gamma_to_json(const SoftAdjacency& gamma);
SoftAdjacency gamma_from_json(std::string_view text);

/// Whole-file helpers; failures raise IoError.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace causalshift
