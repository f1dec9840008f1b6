#include <cstdio>

#include "dadet/errors.hpp"
#include "dadet/harness.hpp"

namespace dadet {

std::vector<ScaleSet> all_scale_subsets() {
    std::vector<ScaleSet> out;
    for (unsigned mask = 0; mask < 8; ++mask) out.push_back(ScaleSet::from_mask(mask));
    return out;
}

AblationTable run_ablation(const RunConfig& config, const std::vector<ScaleSet>& subsets, const Dataset& dataset,
                           const std::function<void(const std::string&)>& progress) {
    if (subsets.empty()) throw ConfigError("ablation needs at least one scale subset");
    AblationTable table;
    for (const ScaleSet& scales : subsets) {
        RunConfig c = config;
        if (scales.empty()) {
            c.mode = TrainingMode::SourceOnly;
        } else {
            c.mode = TrainingMode::Adapt;
            c.dan = {DanKind::Baseline, scales};
        }
        if (progress) progress("ablation row " + scales.str());
        Trainer trainer(c, dataset);
        AblationRow row;
        row.scales = scales;
        while (trainer.iteration() < c.iterations) {
            trainer.step();
            if (DomainAdaptationNetwork* dan = trainer.model().dan()) {
                for (Scale s : {Scale::F1, Scale::F2, Scale::F3}) {
                    if (scales.contains(s)) continue;
                    for (const Parameter* p : dan->branch_parameters(s)) {
                        row.inactive_branches_zero = row.inactive_branches_zero && p->grad.all_zero();
                    }
                }
            }
        }
        row.result = evaluate_split(trainer.model().detector(), dataset.target_val, c.eval_confidence, c.nms_iou);
        row.log = trainer.log();
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string AblationTable::format(int num_classes) const {
    std::string out = "F1  F2  F3  ";
    char cell[64];
    for (int k = 0; k < num_classes; ++k) {
        std::snprintf(cell, sizeof cell, "| %10s ", class_name(k));
        out += cell;
    }
    out += "|    mAP\n";
    out += std::string(12 + static_cast<std::size_t>(num_classes) * 13 + 8, '-') + "\n";
    for (const AblationRow& r : rows) {
        for (Scale s : {Scale::F1, Scale::F2, Scale::F3}) out += r.scales.contains(s) ? "✓   " : "    ";
        for (int k = 0; k < num_classes; ++k) {
            const auto ap = r.result.ap(k);
            if (ap) {
                std::snprintf(cell, sizeof cell, "| %10.2f ", *ap * 100.0);
            } else {
                std::snprintf(cell, sizeof cell, "| %10s ", "excl.");
            }
            out += cell;
        }
        std::snprintf(cell, sizeof cell, "| %6.2f\n", r.result.map_score * 100.0);
        out += cell;
    }
    return out;
}

nlohmann::json AblationTable::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const AblationRow& r : rows) {
        nlohmann::json scales = nlohmann::json::array();
        for (Scale s : r.scales.scales()) scales.push_back(scale_name(s));
        rows_json.push_back({{"scales", scales},
                             {"label", r.scales.str()},
                             {"inactive_branches_zero", r.inactive_branches_zero},
                             {"eval", eval_to_json(r.result)}});
    }
    return {{"rows", rows_json}};
}

}  // namespace dadet
