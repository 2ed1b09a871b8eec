#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agealign/features.hpp"
#include "agealign/stats.hpp"
#include "agealign/types.hpp"

namespace agealign {

/// Joins outcomes with question AoA. Outcome rows may carry their own "aoa"
/// (and "h_human"); otherwise the AoA comes from the matching question.
/// Outcomes whose question has no AoA are dropped.
std::vector<stats::AgeItem> join_age_items(std::span<const json> outcome_rows, std::span<const Question> questions);

/// Integer ages from floor(min AoA) to floor(max AoA).
std::vector<double> default_age_grid(std::span<const stats::AgeItem> items);

// Human mean from the default annotation inputs; used for mu = auto.
double default_human_mean();
// One-sided upper bound on human disagreement from the same inputs; used for gamma = auto.
double default_human_disagreement();

struct AgeTestRequest {
    AgeMode mode = AgeMode::Exact;
    AgeTestKind kind = AgeTestKind::Means;
    double mu = 0.0;  // <= 0 selects default_human_mean()
    std::optional<double> gamma;  // empty selects default_human_disagreement()
    double alpha = 0.05;
    std::vector<double> ages;  // empty selects default_age_grid()
};

/// The age-test document shared by the CLI and the run report.
json age_test_json(std::span<const stats::AgeItem> items, const AgeTestRequest& request);

/// Chi-square battery and LPM over design rows that carry an error label.
json analysis_json(std::span<const features::DesignRecord> records);

struct ReportOptions {
    double alpha = 0.05;
    double mu = 0.0;
    std::vector<double> ages;
    bool write_files = true;  // report.json and plot_*.json into the run directory
};

/// Reads questions.jsonl, responses.jsonl, outcomes.jsonl (and design.jsonl if
/// present) from a run directory. Throws Error(NotFound) listing every missing input.
json render_run_report(const std::filesystem::path& run_dir, const ReportOptions& options = {});

// Stable serialization used for every report artifact.
std::string dump_report(const json& j);

}  // namespace agealign
