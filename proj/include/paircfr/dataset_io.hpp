#pragma once

#include <string>

#include "paircfr/feature_model.hpp"

namespace paircfr {

// Columnar TSV: header `pair_id  role  label  x_0 ... x_{m-1}` with floats in
// shortest round-trip decimals, plus a JSON sidecar carrying the layout,
// class count, provenance, and (when known) the generating spec.
void export_dataset(const PairedDataset& dataset, const std::string& tsv_path,
                    const std::string& sidecar_path,
                    const FeatureModelSpec* spec = nullptr);

PairedDataset import_dataset(const std::string& tsv_path,
                             const std::string& sidecar_path);

std::string spec_to_json(const FeatureModelSpec& spec);
FeatureModelSpec spec_from_json(const std::string& json_text);

}  // namespace paircfr
