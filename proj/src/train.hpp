#pragma once

#include <functional>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "data.hpp"
#include "model.hpp"

namespace sfconv {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct AdamState {
    std::vector<Tensor> m;  // first moments, aligned with the param list
    std::vector<Tensor> v;  // second moments
    std::uint64_t t = 0;    // steps taken
};

AdamState init_adam(const std::vector<ParamRef>& params);

// One Adam update. Classic L2: weight_decay * param joins the gradient of
// every decayable parameter before the moment updates.
void adam_step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads,
               AdamState& st, double lr, double weight_decay);

// base_lr * gamma^floor(epoch / step), epochs counted from 0.
double lr_schedule(std::size_t epoch, double base_lr, std::size_t step, double gamma);

struct EpochReport {
    std::size_t epoch = 0;  // 0-based
    std::size_t total_epochs = 0;
    double mean_task_loss = 0.0;
    double mean_kl = 0.0;
    double mean_total = 0.0;
    double eval_metric = 0.0;
};

using ProgressFn = std::function<void(const EpochReport&)>;

struct TrainOutcome {
    Model model;
    double init_mean_layer_kl = 0.0;   // at the starting parameters
    double final_mean_layer_kl = 0.0;
    double final_eval_metric = 0.0;
    std::string metrics_path;
    std::string checkpoint_path;  // final checkpoint
};

// Runs the full loop: per step forward, task loss, KL term, combined
// gradient, Adam; per epoch eval + metrics rows + periodic checkpoints.
// Deterministic under fixed seed/config. resume_checkpoint restores
// parameters, optimizer moments, shuffle RNG, and the epoch counter.
TrainOutcome train(const TrainConfig& cfg, const std::string& out_dir,
                   const std::string& resume_checkpoint = {},
                   const ProgressFn& progress = {});

// Classification: top-1 accuracy. Segmentation: mean per-image Dice of the
// 0.5-thresholded prediction.
double evaluate(const Model& m, const Dataset& data, std::size_t batch_size);

// Rebuilds the model a checkpoint was written from and loads its parameters.
Model model_from_checkpoint(const Checkpoint& ck, TrainConfig* cfg_out = nullptr);

// network KL divided by the number of factorized layers; 0 for none.
double mean_layer_kl(const Model& m);

inline constexpr char kMetricsHeader[] =
    "epoch,step,task_loss,kl_term,lambda,total_loss,eval_metric";

}  // namespace sfconv
