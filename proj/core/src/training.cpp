#include "harmony/training.hpp"

#include <cmath>
#include <sstream>

#include "harmony/errors.hpp"
#include "harmony/rng.hpp"

namespace harmony {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ParamError("train config: batch_size must be >= 1");
    if (phase1_steps < 1 || phase2_steps < 0)
        throw ParamError("train config: step counts must be positive");
    if (lr_phase1 <= 0.0 || lr_phase2 <= 0.0) throw ParamError("train config: lr must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ParamError("train config: adam betas must be in [0,1)");
    if (!(ema_decay > 0.0 && ema_decay < 1.0))
        throw ParamError("train config: ema_decay must be in (0,1)");
    if (train_resolution < 8) throw ParamError("train config: train_resolution too small");
    if (log_every < 1) throw ParamError("train config: log_every must be >= 1");
    if (checkpoint_every < 0) throw ParamError("train config: checkpoint_every must be >= 0");
}

double lr_schedule(int64_t step, const TrainConfig& config) {
    if (step < 0) throw ParamError("lr_schedule: negative step");
    return step < config.phase1_steps ? config.lr_phase1 : config.lr_phase2;
}

torch::Tensor ema_update(const torch::Tensor& shadow, const torch::Tensor& current, double decay) {
    if (!shadow.sizes().equals(current.sizes())) throw ParamError("ema_update: shape mismatch");
    if (!(decay >= 0.0 && decay < 1.0)) throw ParamError("ema_update: decay must be in [0,1)");
    if (decay == 0.0) return current.clone();
    // delta form keeps the fixed point exact
    return shadow + (current - shadow) * (1.0 - decay);
}

Ema::Ema(const torch::nn::Module& model, double decay) : decay_(decay) {
    if (!(decay >= 0.0 && decay < 1.0)) throw ParamError("ema: decay must be in [0,1)");
    for (const auto& p : model.named_parameters(true))
        shadow_.emplace(p.key(), p.value().detach().clone());
}

void Ema::update(const torch::nn::Module& model) {
    torch::NoGradGuard ng;
    for (const auto& p : model.named_parameters(true)) {
        auto it = shadow_.find(p.key());
        if (it == shadow_.end()) throw ParamError("ema: unknown parameter " + p.key());
        torch::Tensor cur = p.value().detach();
        if (!it->second.sizes().equals(cur.sizes()))
            throw ParamError("ema: shape mismatch for " + p.key());
        if (decay_ == 0.0)
            it->second.copy_(cur);
        else
            it->second.add_((cur - it->second) * (1.0 - decay_));
    }
    ++update_count_;
}

void Ema::copy_to(torch::nn::Module& model) const {
    torch::NoGradGuard ng;
    for (const auto& p : model.named_parameters(true)) {
        auto it = shadow_.find(p.key());
        if (it == shadow_.end()) throw ParamError("ema: missing shadow for " + p.key());
        p.value().copy_(it->second);
    }
}

std::map<std::string, torch::Tensor> Ema::to_tensors() const {
    std::map<std::string, torch::Tensor> out;
    for (const auto& [k, v] : shadow_) out.emplace("shadow." + k, v.clone());
    out.emplace("update_count", torch::tensor(update_count_, torch::kInt64));
    return out;
}

Ema Ema::from_tensors(const std::map<std::string, torch::Tensor>& tensors, double decay) {
    Ema ema;
    ema.decay_ = decay;
    for (const auto& [k, v] : tensors) {
        if (k == "update_count") {
            ema.update_count_ = v.item<int64_t>();
        } else if (k.rfind("shadow.", 0) == 0) {
            ema.shadow_.emplace(k.substr(7), v.clone());
        }
    }
    return ema;
}

std::map<std::string, torch::Tensor> optimizer_state_tensors(const torch::optim::Adam& opt) {
    std::map<std::string, torch::Tensor> out;
    int64_t index = 0;
    for (const auto& group : opt.param_groups()) {
        for (const auto& p : group.params()) {
            auto it = opt.state().find(p.unsafeGetTensorImpl());
            if (it != opt.state().end()) {
                const auto* s = static_cast<const torch::optim::AdamParamState*>(it->second.get());
                const std::string prefix = "adam." + std::to_string(index) + ".";
                out.emplace(prefix + "exp_avg", s->exp_avg().clone());
                out.emplace(prefix + "exp_avg_sq", s->exp_avg_sq().clone());
                out.emplace(prefix + "step", torch::tensor(s->step(), torch::kInt64));
            }
            ++index;
        }
    }
    return out;
}

void load_optimizer_state(torch::optim::Adam& opt, const std::map<std::string, torch::Tensor>& t) {
    int64_t index = 0;
    for (const auto& group : opt.param_groups()) {
        for (const auto& p : group.params()) {
            const std::string prefix = "adam." + std::to_string(index) + ".";
            auto ea = t.find(prefix + "exp_avg");
            if (ea != t.end()) {
                auto state = std::make_unique<torch::optim::AdamParamState>();
                if (!ea->second.sizes().equals(p.sizes()))
                    throw DataError("optimizer state: shape mismatch at index " +
                                    std::to_string(index));
                state->exp_avg(ea->second.clone());
                state->exp_avg_sq(t.at(prefix + "exp_avg_sq").clone());
                state->step(t.at(prefix + "step").item<int64_t>());
                opt.state()[p.unsafeGetTensorImpl()] = std::move(state);
            }
            ++index;
        }
    }
}

void set_lr(torch::optim::Adam& opt, double lr) {
    for (auto& group : opt.param_groups())
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
    std::ostringstream os;
    const size_t show = std::min<size_t>(ids.size(), 8);
    for (size_t i = 0; i < show; ++i) os << (i ? "," : "") << ids[i];
    if (ids.size() > show) os << ",...";
    return os.str();
}

[[noreturn]] void throw_nonfinite(const char* who, int64_t step, double lr,
                                  const std::vector<std::string>& ids) {
    std::ostringstream os;
    os << who << ": non-finite loss at step " << step << " (lr " << lr;
    if (!ids.empty()) os << ", batch " << join_ids(ids);
    os << ")";
    throw TrainingError(os.str());
}

}  // namespace

double diffusion_train_step(const DiffusionBatch& batch, ConditionalDenoiser& model,
                            const NoiseSchedule& schedule, torch::optim::Adam& opt,
                            torch::Generator& gen, int64_t step, double lr) {
    if (!batch.gt_latent.defined() || batch.gt_latent.dim() != 4)
        throw ParamError("diffusion_train_step: gt_latent must be NCHW");
    const int64_t n = batch.gt_latent.size(0);
    if (!batch.composite_latent.sizes().equals(batch.gt_latent.sizes()))
        throw ParamError("diffusion_train_step: composite latent shape mismatch");
    if (batch.mask_lowres.dim() != 4 || batch.mask_lowres.size(0) != n ||
        batch.mask_lowres.size(1) != 1)
        throw ParamError("diffusion_train_step: mask shape mismatch");

    torch::Tensor t = torch::randint(0, schedule.num_train_steps, {n}, gen,
                                     torch::TensorOptions(torch::kLong));
    torch::Tensor abars = torch::tensor(schedule.alpha_bars, torch::kFloat64)
                              .index_select(0, t)
                              .reshape({n, 1, 1, 1})
                              .to(torch::kFloat32);
    torch::Tensor noise = torch::randn(batch.gt_latent.sizes(), gen, batch.gt_latent.options());
    torch::Tensor noisy = batch.gt_latent * abars.sqrt() + noise * (1.0 - abars).sqrt();

    torch::Tensor ctx = model->null_context().unsqueeze(0).expand({n, -1, -1});
    torch::Tensor eps =
        model->forward(torch::cat({noisy, batch.mask_lowres, batch.composite_latent}, 1), t, ctx);
    torch::Tensor loss = torch::mse_loss(eps, noise);

    const double lv = loss.item<double>();
    if (!std::isfinite(lv)) throw_nonfinite("diffusion_train_step", step, lr, batch.ids);
    opt.zero_grad();
    loss.backward();
    opt.step();
    return lv;
}

DiffusionTrainResult train_diffusion(ConditionalDenoiser& model, const NoiseSchedule& schedule,
                                     const DiffusionBatchFn& next_batch, const TrainConfig& config,
                                     torch::optim::Adam& opt, Ema ema, int64_t start_step,
                                     const StepCallback& on_step, int64_t end_step) {
    config.validate();
    const int64_t total = end_step < 0 ? config.total_steps() : end_step;
    if (total > config.total_steps()) throw ParamError("train_diffusion: end_step out of range");
    if (start_step < 0 || start_step > total)
        throw ParamError("train_diffusion: start_step out of range");

    DiffusionTrainResult result;
    model->train();
    for (int64_t step = start_step; step < total; ++step) {
        const double lr = lr_schedule(step, config);
        set_lr(opt, lr);
        torch::Generator gen = make_generator(derive_seed(config.seed, "train_step", step));
        DiffusionBatch batch = next_batch(step, gen);
        const double loss = diffusion_train_step(batch, model, schedule, opt, gen, step, lr);
        ema.update(*model);
        if (step % config.log_every == 0 || step == total - 1)
            result.log.push_back({step, loss, lr});
        if (on_step) on_step(step, loss, lr);
    }
    model->eval();
    result.ema = std::move(ema);
    result.final_step = total;
    return result;
}

RefinerTrainResult train_refiner(Refiner& model, const RefinerBatchFn& next_batch,
                                 const TrainConfig& config, torch::optim::Adam& opt, Ema ema,
                                 int64_t start_step, const StepCallback& on_step, int64_t end_step) {
    config.validate();
    const int64_t total = end_step < 0 ? config.total_steps() : end_step;
    if (total > config.total_steps()) throw ParamError("train_refiner: end_step out of range");
    if (start_step < 0 || start_step > total)
        throw ParamError("train_refiner: start_step out of range");

    RefinerTrainResult result;
    model->train();
    for (int64_t step = start_step; step < total; ++step) {
        const double lr = lr_schedule(step, config);
        set_lr(opt, lr);
        torch::Generator gen = make_generator(derive_seed(config.seed, "refine_step", step));
        RefinerBatch batch = next_batch(step, gen);
        if (!batch.gt.sizes().equals(batch.harmonized.sizes()))
            throw ParamError("train_refiner: gt shape mismatch");

        torch::Tensor pred = model->forward(batch.harmonized, batch.composite, batch.mask);
        torch::Tensor loss = torch::mse_loss(pred, batch.gt);
        const double lv = loss.item<double>();
        if (!std::isfinite(lv)) throw_nonfinite("train_refiner", step, lr, batch.ids);
        opt.zero_grad();
        loss.backward();
        opt.step();
        ema.update(*model);
        if (step % config.log_every == 0 || step == total - 1)
            result.log.push_back({step, lv, lr});
        if (on_step) on_step(step, lv, lr);
    }
    model->eval();
    result.ema = std::move(ema);
    result.final_step = total;
    return result;
}

}  // namespace harmony
