#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "stereorecon/dataset.hpp"
#include "stereorecon/loss.hpp"
#include "stereorecon/model.hpp"

namespace stereorecon {

enum class Precision { full, mixed16 };

std::string to_string(Precision p);
Precision parse_precision(const std::string& text);

/// Everything needed to reproduce one training run.
struct TrainRecipe {
    ModelConfig model;
    LossKind loss = LossKind::perceptual;
    double learning_rate = 1e-4;  ///< constant; no schedule, no weight decay
    std::int64_t batch_size = 16;
    std::int64_t max_steps = 1000;
    double max_hours = 0.0;  ///< wall-clock budget, 0 = unlimited
    Precision precision = Precision::full;
    std::uint64_t seed = 0;  ///< parameter init and sample order
    bool repeat_current_frame = false;  ///< feed K copies of the current frame (control experiment)
    std::int64_t checkpoint_every = 0;  ///< steps between checkpoints, 0 = final only

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainRecipe& r);
void from_json(const nlohmann::json& j, TrainRecipe& r);

/// Fields that must agree for a checkpoint to be resumed under a recipe (budgets excluded).
std::vector<std::string> recipe_differences(const TrainRecipe& expected, const TrainRecipe& actual);

/// Append-only CSV: step,split,loss_name,value,wall_time.
class MetricLog {
public:
    explicit MetricLog(const std::filesystem::path& path);
    void append(std::int64_t step, const std::string& split, const std::string& loss_name, double value);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::chrono::steady_clock::time_point start_;
};

struct TrainSummary {
    std::int64_t steps_run = 0;
    std::int64_t final_step = 0;
    std::vector<double> step_losses;
    std::filesystem::path final_checkpoint;
};

/// Adam with a constant learning rate over sliding-window samples of a split's training chunks.
///
/// The sample order of epoch e is the training windows shuffled with a seed derived from
/// (recipe.seed, e), so a resumed run replays exactly the batches an uninterrupted run would see.
class Trainer {
public:
    Trainer(TrainRecipe recipe, const FrameSource& frames, DatasetSplit split, LossFunction loss,
            std::filesystem::path output_dir);

    /// Restores parameters, optimiser state and step counter. Throws ConfigError listing the
    /// differing fields when the checkpoint was written under another recipe.
    static Trainer resume(const std::filesystem::path& checkpoint_dir, TrainRecipe recipe, const FrameSource& frames,
                          DatasetSplit split, LossFunction loss, std::filesystem::path output_dir);

    /// One optimiser step; returns the batch loss before the update.
    double train_step();

    /// Runs until recipe.max_steps (or the wall-clock budget) and writes a final checkpoint.
    TrainSummary run();

    /// Mean per-sample loss over all windows of a split part, in eval mode without gradients.
    double evaluate(SplitPart part);
    double evaluate(std::span<const WindowRef> windows);

    std::filesystem::path save_checkpoint(const std::string& name = {});

    std::int64_t step() const noexcept { return step_; }
    StereoUNet& network() noexcept { return network_; }
    const TrainRecipe& recipe() const noexcept { return recipe_; }
    std::int64_t steps_per_epoch() const;

private:
    std::vector<WindowRef> batch_for_step(std::int64_t step) const;
    torch::Tensor compute_loss(const torch::Tensor& inputs, const torch::Tensor& targets);

    TrainRecipe recipe_;
    const FrameSource& frames_;
    DatasetSplit split_;
    LossFunction loss_;
    std::filesystem::path output_dir_;
    StereoUNet network_{nullptr};
    std::unique_ptr<torch::optim::Adam> optimizer_;
    std::vector<WindowRef> train_windows_;
    std::vector<WindowRef> validation_windows_;
    std::int64_t step_ = 0;
    MetricLog log_;
    std::filesystem::path last_checkpoint_;
};

}  // namespace stereorecon
