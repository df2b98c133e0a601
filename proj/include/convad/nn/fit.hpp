#pragma once

#include <functional>
#include <vector>

#include "convad/nn/layers.hpp"

namespace convad::nn {

struct FitSchedule {
    int max_epochs = 100;
    int early_stop_patience = 10;
    int lr_plateau_patience = 5;
    double lr_decay_factor = 0.1;
    /// Relative decrease of the validation loss that counts as an improvement.
    double min_rel_improvement = 1e-4;
    /// Epochs during which neither patience counter advances.
    int warmup_epochs = 0;
};

struct FitHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;
    double best_val = 0;
    bool early_stopped = false;
};

/// Epoch loop with early stopping, plateau LR decay and best-weight restore.
/// `train_epoch(epoch)` performs one pass and returns the mean training loss; `val_loss()` evaluates.
FitHistory fit(Adam& opt, const FitSchedule& schedule, const std::function<double(int)>& train_epoch,
               const std::function<double()>& val_loss);

}  // namespace convad::nn
