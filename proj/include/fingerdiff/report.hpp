#pragma once

#include <filesystem>

#include "json.hpp"

#include "fingerdiff/eval.hpp"

namespace fingerdiff {

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

// report.json plus a per-generator heatmap strip when per_generator_auc is
// nonempty (otherwise the skip is noted in the report itself).
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

// crossgen.json + crossgen_heatmap.svg (rows = training tag, cols = test tag).
void emit_crossgen(const CrossGenResult& result, const std::filesystem::path& out_dir);

// ablation.json; the condition axis additionally gets condition_bars.svg.
void emit_ablation(const std::vector<AblationRow>& rows, const std::string& axis,
                   const std::filesystem::path& out_dir);

}  // namespace fingerdiff
