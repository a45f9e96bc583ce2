#pragma once

#include "ppgbp/arx.hpp"
#include "ppgbp/signal.hpp"

#include <filesystem>
#include <string>

namespace ppgbp {

/// A fitted model plus the labels that locate it in a study.
struct ModelRecord {
    FeatureKind feature = FeatureKind::SBP;
    std::string interval_label;
    ArxModel model;
};

/// JSON with fields {feature, interval_label, n_a, n_b, n_k, a[], b[],
/// fit_mse, n_samples_used}; numbers carry 17 significant digits.
void write_model_json(const std::filesystem::path& path, const ModelRecord& record);

ModelRecord read_model_json(const std::filesystem::path& path);

} // namespace ppgbp
