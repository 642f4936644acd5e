#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "harmony/denoiser.hpp"
#include "harmony/refiner.hpp"
#include "harmony/schedule.hpp"

namespace harmony {

struct TrainConfig {
    int64_t batch_size = 32;
    double lr_phase1 = 1e-5;
    int64_t phase1_steps = 150000;
    double lr_phase2 = 1e-6;
    int64_t phase2_steps = 50000;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double ema_decay = 0.9999;
    int64_t train_resolution = 512;
    uint64_t seed = 0;
    int64_t log_every = 50;
    int64_t checkpoint_every = 0;  // 0 = only at the end

    int64_t total_steps() const { return phase1_steps + phase2_steps; }
    void validate() const;
};

// Piecewise-constant: lr_phase1 below phase1_steps, lr_phase2 from there on.
double lr_schedule(int64_t step, const TrainConfig& config);

// One EMA step; written so equal inputs stay bit-identical and decay 0
// copies current exactly.
torch::Tensor ema_update(const torch::Tensor& shadow, const torch::Tensor& current, double decay);

class Ema {
  public:
    Ema() = default;
    Ema(const torch::nn::Module& model, double decay);

    void update(const torch::nn::Module& model);
    void copy_to(torch::nn::Module& model) const;

    const std::map<std::string, torch::Tensor>& shadow() const { return shadow_; }
    double decay() const { return decay_; }
    int64_t update_count() const { return update_count_; }

    std::map<std::string, torch::Tensor> to_tensors() const;  // includes the counter
    static Ema from_tensors(const std::map<std::string, torch::Tensor>& tensors, double decay);

  private:
    std::map<std::string, torch::Tensor> shadow_;
    double decay_ = 0.9999;
    int64_t update_count_ = 0;
};

// Adam moment state keyed by parameter order, for checkpoint round-trips.
std::map<std::string, torch::Tensor> optimizer_state_tensors(const torch::optim::Adam& opt);
void load_optimizer_state(torch::optim::Adam& opt, const std::map<std::string, torch::Tensor>& t);
void set_lr(torch::optim::Adam& opt, double lr);

struct DiffusionBatch {
    torch::Tensor gt_latent;         // N,C,h,w scaled latents of the real image
    torch::Tensor composite_latent;  // N,C,h,w
    torch::Tensor mask_lowres;       // N,1,h,w
    std::vector<std::string> ids;    // optional, surfaces in error diagnostics
};

// Provider is called once per step with a generator derived from
// (config.seed, step); it must be pure in those inputs so interrupted runs
// resume bit-exactly.
using DiffusionBatchFn = std::function<DiffusionBatch(int64_t step, torch::Generator& gen)>;

// Epsilon-prediction MSE step: per-item uniform timesteps, add_noise on the
// gt latent, forward with the null context, one optimizer step. Throws
// TrainingError with step diagnostics when the loss goes non-finite.
double diffusion_train_step(const DiffusionBatch& batch, ConditionalDenoiser& model,
                            const NoiseSchedule& schedule, torch::optim::Adam& opt,
                            torch::Generator& gen, int64_t step, double lr);

struct TrainLogEntry {
    int64_t step;
    double loss;
    double lr;
};

struct DiffusionTrainResult {
    std::vector<TrainLogEntry> log;
    Ema ema;
    int64_t final_step = 0;
};

using StepCallback = std::function<void(int64_t step, double loss, double lr)>;

// Runs steps [start_step, end_step), end_step -1 meaning total_steps(). The
// codec stays outside; batches arrive already encoded. Optimizer may carry
// resumed state, so split runs reproduce an unsplit one exactly.
DiffusionTrainResult train_diffusion(ConditionalDenoiser& model, const NoiseSchedule& schedule,
                                     const DiffusionBatchFn& next_batch, const TrainConfig& config,
                                     torch::optim::Adam& opt, Ema ema, int64_t start_step,
                                     const StepCallback& on_step = nullptr, int64_t end_step = -1);

struct RefinerBatch {
    torch::Tensor harmonized;  // N,3,256,256 in [-1,1]
    torch::Tensor composite;
    torch::Tensor mask;  // N,1,256,256
    torch::Tensor gt;    // N,3,256,256 in [-1,1]
    std::vector<std::string> ids;
};
using RefinerBatchFn = std::function<RefinerBatch(int64_t step, torch::Generator& gen)>;

struct RefinerTrainResult {
    std::vector<TrainLogEntry> log;
    Ema ema;
    int64_t final_step = 0;
};

// Pixel MSE against gt on the refined output; same determinism and NaN
// contract as the diffusion loop.
RefinerTrainResult train_refiner(Refiner& model, const RefinerBatchFn& next_batch,
                                 const TrainConfig& config, torch::optim::Adam& opt, Ema ema,
                                 int64_t start_step, const StepCallback& on_step = nullptr,
                                 int64_t end_step = -1);

}  // namespace harmony
