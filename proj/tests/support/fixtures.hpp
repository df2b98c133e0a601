#pragma once

#include "convad/synth/generator.hpp"

namespace convad::testing {

/// Small ShapesAD instance shared across tests; built once per process.
inline const synth::GeneratedDataset& small_dataset(int size = 64) {
    static const synth::GeneratedDataset ds = [size] {
        auto cfg = synth::GeneratorConfig::shapes_ad(5);
        cfg.height = size;
        cfg.width = size;
        cfg.n_normal = 24;
        cfg.n_anomalous_per_defect = 6;
        cfg.n_synthetic_per_defect = 3;
        return synth::build_dataset(cfg);
    }();
    return ds;
}

}  // namespace convad::testing
