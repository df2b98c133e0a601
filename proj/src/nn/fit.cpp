#include "convad/nn/fit.hpp"

#include <cmath>
#include <limits>

namespace convad::nn {

FitHistory fit(Adam& opt, const FitSchedule& schedule, const std::function<double(int)>& train_epoch,
               const std::function<double()>& val_loss) {
    FitHistory h;
    h.best_val = std::numeric_limits<double>::infinity();
    ParamSnapshot best = snapshot(opt.params());
    int since_best = 0;
    int since_decay = 0;
    for (int epoch = 0; epoch < schedule.max_epochs; ++epoch) {
        h.train_loss.push_back(train_epoch(epoch));
        const double v = val_loss();
        h.val_loss.push_back(v);
        const bool improved = std::isfinite(v) && (h.best_epoch < 0 || v < h.best_val - schedule.min_rel_improvement *
                                                                                        std::abs(h.best_val));
        if (improved) {
            h.best_val = v;
            h.best_epoch = epoch;
            best = snapshot(opt.params());
            since_best = 0;
            since_decay = 0;
            continue;
        }
        if (epoch < schedule.warmup_epochs) continue;
        ++since_best;
        ++since_decay;
        if (since_best >= schedule.early_stop_patience) {
            h.early_stopped = true;
            break;
        }
        if (since_decay >= schedule.lr_plateau_patience) {
            opt.set_lr(opt.lr() * schedule.lr_decay_factor);
            since_decay = 0;
        }
    }
    if (h.best_epoch >= 0) restore(opt.params(), best);
    return h;
}

}  // namespace convad::nn
