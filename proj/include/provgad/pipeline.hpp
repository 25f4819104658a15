/* Copyright 2026 The provgad Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "provgad/detector.hpp"
#include "provgad/gmae.hpp"
#include "provgad/graph.hpp"
#include "provgad/ingest.hpp"
#include "provgad/metrics.hpp"

namespace provgad::pipeline {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum class Granularity { kBatched, kEntity };

Granularity parse_granularity(std::string_view name);
std::string_view to_string(Granularity g);

// Embedding width per granularity when none is configured.
std::size_t default_dim(Granularity g);

struct PipelineConfig {
  Granularity granularity = Granularity::kBatched;
  gmae::TrainConfig train = default_train(Granularity::kBatched);
  std::size_t k = 10;
  std::optional<double> theta;
  std::optional<double> target_fpr = 0.01;
  // Share of benign training graphs held out to pick theta from target_fpr.
  double holdout_fraction = 0.2;
  std::optional<std::size_t> capacity;
  std::size_t adapt_epochs = 10;
  LogFormat format = LogFormat::kStreamSpot;
  unsigned threads = 1;

  std::string train_logs;
  std::string target_logs;
  std::string labels;
  std::string feedback_logs;
  std::string feedback_labels;
  std::string artifacts = "artifacts";
  std::string report = "report.json";

  void validate() const;
  nlohmann::json to_json() const;
  // Keys absent from doc keep their defaults; d defaults per granularity.
  static PipelineConfig from_json(const nlohmann::json& doc);
  static gmae::TrainConfig default_train(Granularity g);
};

// Stage names reported to PipelineHooks::on_stage.
struct PipelineHooks {
  std::function<void(std::string_view)> on_stage;
  void stage(std::string_view name) const {
    if (on_stage) on_stage(name);
  }
};

// Everything a detection run needs, plus the graphs whose embeddings are
// memorized so adaption can re-embed them under updated parameters.
struct Artifacts {
  PipelineConfig config;
  Vocabulary vocab{1, 0};
  gmae::ModelParams params;
  detect::DetectorState detector;
  std::vector<ProvenanceGraph> memory;
  // Leading points of memory.front() already evicted from the detector.
  std::size_t memory_offset = 0;
  std::vector<double> loss_trace;
  std::vector<std::string> holdout_batches;
};

using LabelMap = std::unordered_map<std::string, bool>;  // target id -> malicious

LabelMap load_labels(const std::string& path);
LabelMap parse_labels(const std::vector<std::string>& lines);

// Detector points for one graph: its state vector (batched) or every node row
// (entity), with matching target ids ("batch" or "batch/node").
struct GraphPoints {
  Tensor2 points;
  std::vector<std::string> ids;
};
GraphPoints select_points(const ProvenanceGraph& g, const gmae::OutputEmbeddings& h,
                          Granularity granularity);

Artifacts train_artifacts(const PipelineConfig& cfg, std::vector<RawEvent> events,
                          const PipelineHooks& hooks = {});

struct TargetResult {
  std::string id;
  double score = 0.0;
  bool malicious = false;
  std::optional<bool> label;
};

struct DetectionReport {
  Granularity granularity = Granularity::kBatched;
  double theta = 0.0;
  std::vector<TargetResult> targets;
  std::optional<metrics::Metrics> metrics;
  nlohmann::json config;
  std::map<std::string, double> timing;  // seconds per phase; excluded from determinism checks

  nlohmann::json to_json() const;
  std::string table() const;
};

// theta_override wins over the detector's stored threshold.
DetectionReport detect_events(const Artifacts& artifacts, std::vector<RawEvent> events,
                              const LabelMap* labels = nullptr,
                              std::optional<double> theta_override = std::nullopt,
                              const PipelineHooks& hooks = {});

// Scores of every target in the events, without thresholding.
std::vector<double> score_events(const Artifacts& artifacts, std::vector<RawEvent> events,
                                 std::vector<std::string>* ids = nullptr);

// Continues training on confirmed-benign feedback with a fresh optimizer,
// re-embeds the memorized graphs and absorbs the feedback embeddings.
Artifacts adapt_artifacts(const Artifacts& artifacts, std::vector<RawEvent> feedback,
                          const LabelMap* labels = nullptr);

// Batched detection first, then entity detection inside flagged batches.
struct TwoStageReport {
  DetectionReport batched;
  DetectionReport entity;
  nlohmann::json to_json() const;
};
TwoStageReport detect_two_stage(const Artifacts& batched, const Artifacts& entity,
                                std::vector<RawEvent> events, const LabelMap* batch_labels,
                                const LabelMap* entity_labels);

void save_artifacts(const Artifacts& artifacts, const std::string& dir);
Artifacts load_artifacts(const std::string& dir);

// File-based entry points used by the CLI.
Artifacts run_training(const PipelineConfig& cfg);
DetectionReport run_detection(const PipelineConfig& cfg, std::optional<double> theta_override = {});
Artifacts run_adaption(const PipelineConfig& cfg);

std::string config_hash(const nlohmann::json& config);
void write_json(const std::string& path, const nlohmann::json& doc, int indent = -1);
nlohmann::json read_json(const std::string& path);

}  // namespace provgad::pipeline
