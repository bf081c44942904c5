#include "stereorecon/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <ATen/autocast_mode.h>

#include "stereorecon/checkpoint.hpp"
#include "stereorecon/error.hpp"
#include "stereorecon/random.hpp"

namespace fs = std::filesystem;

namespace stereorecon {
namespace {

constexpr const char* kOptimizerFile = "optimizer.pt";

// Enables bfloat16 autocast on CPU for the lifetime of the guard.
class CpuAutocast {
public:
    explicit CpuAutocast(bool enabled) : enabled_(enabled) {
        if (!enabled_) return;
        previous_ = at::autocast::is_autocast_enabled(at::kCPU);
        at::autocast::set_autocast_enabled(at::kCPU, true);
        at::autocast::set_autocast_dtype(at::kCPU, at::kBFloat16);
        at::autocast::increment_nesting();
    }
    ~CpuAutocast() {
        if (!enabled_) return;
        if (at::autocast::decrement_nesting() == 0) at::autocast::clear_cache();
        at::autocast::set_autocast_enabled(at::kCPU, previous_);
    }
    CpuAutocast(const CpuAutocast&) = delete;
    CpuAutocast& operator=(const CpuAutocast&) = delete;

private:
    bool enabled_;
    bool previous_ = false;
};

bool is_out_of_memory(const c10::Error& e) {
    const std::string what = e.what_without_backtrace();
    return what.find("can't allocate memory") != std::string::npos ||
           what.find("out of memory") != std::string::npos;
}

}  // namespace

std::string to_string(Precision p) { return p == Precision::full ? "full" : "mixed16"; }

Precision parse_precision(const std::string& text) {
    if (text == "full" || text == "fp32") return Precision::full;
    if (text == "mixed16" || text == "bf16") return Precision::mixed16;
    throw ConfigError("unknown precision '" + text + "'");
}

void TrainRecipe::validate() const {
    model.validate();
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
    if (max_hours < 0.0) throw ConfigError("max_hours must be >= 0");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

void to_json(nlohmann::json& j, const TrainRecipe& r) {
    j = {{"model", r.model},
         {"loss", to_string(r.loss)},
         {"learning_rate", r.learning_rate},
         {"batch_size", r.batch_size},
         {"max_steps", r.max_steps},
         {"max_hours", r.max_hours},
         {"precision", to_string(r.precision)},
         {"seed", r.seed},
         {"repeat_current_frame", r.repeat_current_frame},
         {"checkpoint_every", r.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainRecipe& r) {
    TrainRecipe d;
    r.model = j.value("model", d.model);
    r.loss = parse_loss_kind(j.value("loss", to_string(d.loss)));
    r.learning_rate = j.value("learning_rate", d.learning_rate);
    r.batch_size = j.value("batch_size", d.batch_size);
    r.max_steps = j.value("max_steps", d.max_steps);
    r.max_hours = j.value("max_hours", d.max_hours);
    r.precision = parse_precision(j.value("precision", to_string(d.precision)));
    r.seed = j.value("seed", d.seed);
    r.repeat_current_frame = j.value("repeat_current_frame", d.repeat_current_frame);
    r.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
}

std::vector<std::string> recipe_differences(const TrainRecipe& expected, const TrainRecipe& actual) {
    auto diffs = config_differences(expected.model, actual.model);
    for (auto& d : diffs) d = "model." + d;
    nlohmann::json a = expected;
    nlohmann::json b = actual;
    for (const char* key : {"loss", "learning_rate", "batch_size", "precision", "seed", "repeat_current_frame"}) {
        if (a[key] != b[key]) diffs.push_back(std::string(key) + ": " + a[key].dump() + " != " + b[key].dump());
    }
    return diffs;
}

MetricLog::MetricLog(const fs::path& path) : path_(path), start_(std::chrono::steady_clock::now()) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    const bool fresh = !fs::exists(path_) || fs::file_size(path_) == 0;
    out_.open(path_, std::ios::app);
    if (!out_) throw Error("cannot open metric log " + path_.string());
    if (fresh) out_ << "step,split,loss_name,value,wall_time\n" << std::flush;
}

void MetricLog::append(std::int64_t step, const std::string& split, const std::string& loss_name, double value) {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
    out_ << step << ',' << split << ',' << loss_name << ',' << std::setprecision(10) << value << ','
         << std::setprecision(6) << elapsed.count() << '\n'
         << std::flush;
}

Trainer::Trainer(TrainRecipe recipe, const FrameSource& frames, DatasetSplit split, LossFunction loss,
                 fs::path output_dir)
    : recipe_(std::move(recipe)),
      frames_(frames),
      split_(std::move(split)),
      loss_(std::move(loss)),
      output_dir_(std::move(output_dir)),
      log_(output_dir_ / "metrics.csv") {
    recipe_.validate();
    if (loss_.kind() != recipe_.loss) throw ConfigError("loss function does not match recipe.loss");
    train_windows_ = sliding_window_samples(split_, SplitPart::train, recipe_.model.frames);
    if (!split_.validation.empty())
        validation_windows_ = sliding_window_samples(split_, SplitPart::validation, recipe_.model.frames);
    if (train_windows_.empty()) throw DataError("training split has no samples");
    for (const auto& w : train_windows_) {
        if (w.last >= frames_.size()) throw DataError("split refers to frames beyond the dataset");
    }
    network_ = build_model(recipe_.model, recipe_.seed);
    network_->train();
    optimizer_ = std::make_unique<torch::optim::Adam>(network_->parameters(),
                                                      torch::optim::AdamOptions(recipe_.learning_rate));
}

Trainer Trainer::resume(const fs::path& checkpoint_dir, TrainRecipe recipe, const FrameSource& frames,
                        DatasetSplit split, LossFunction loss, fs::path output_dir) {
    const auto manifest = read_model_manifest(checkpoint_dir);
    if (!manifest.extra.contains("recipe")) throw ConfigError(checkpoint_dir.string() + " is not a training checkpoint");
    const auto saved = manifest.extra.at("recipe").get<TrainRecipe>();
    if (auto diffs = recipe_differences(saved, recipe); !diffs.empty()) {
        std::ostringstream msg;
        msg << "checkpoint " << checkpoint_dir.string() << " was written under a different recipe:";
        for (const auto& d : diffs) msg << "\n  " << d;
        throw ConfigError(msg.str());
    }
    Trainer trainer(std::move(recipe), frames, std::move(split), std::move(loss), std::move(output_dir));
    auto loaded = load_model(checkpoint_dir);
    {
        torch::NoGradGuard no_grad;
        auto dst = trainer.network_->parameters();
        auto src = loaded.network->parameters();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i].copy_(src[i]);
    }
    torch::load(*trainer.optimizer_, (checkpoint_dir / kOptimizerFile).string());
    trainer.step_ = manifest.step;
    trainer.last_checkpoint_ = checkpoint_dir;
    return trainer;
}

std::int64_t Trainer::steps_per_epoch() const {
    const auto n = static_cast<std::int64_t>(train_windows_.size());
    return (n + recipe_.batch_size - 1) / recipe_.batch_size;
}

std::vector<WindowRef> Trainer::batch_for_step(std::int64_t step) const {
    const auto per_epoch = steps_per_epoch();
    const auto epoch = step / per_epoch;
    const auto offset = (step % per_epoch) * recipe_.batch_size;
    auto order = train_windows_;
    shuffle_windows(order, mix_seed(recipe_.seed, static_cast<std::uint64_t>(epoch)));
    const auto end = std::min<std::int64_t>(offset + recipe_.batch_size, static_cast<std::int64_t>(order.size()));
    return {order.begin() + offset, order.begin() + end};
}

torch::Tensor Trainer::compute_loss(const torch::Tensor& inputs, const torch::Tensor& targets) {
    CpuAutocast autocast(recipe_.precision == Precision::mixed16);
    auto pred = network_->forward(inputs);
    return loss_(pred.to(torch::kFloat32), targets);
}

double Trainer::train_step() {
    const auto batch = batch_for_step(step_);
    try {
        auto [inputs, targets] = collate(frames_, batch, recipe_.repeat_current_frame);
        network_->train();
        optimizer_->zero_grad();
        auto loss = compute_loss(inputs, targets);
        const double value = loss.item<double>();
        if (!std::isfinite(value)) {
            const auto good = save_checkpoint("last_good");
            throw TrainingError("non-finite training loss at step " + std::to_string(step_) +
                                    "; parameters before the step saved to " + good.string(),
                                good);
        }
        loss.backward();
        optimizer_->step();
        ++step_;
        log_.append(step_, "train", loss_.name(), value);
        return value;
    } catch (const c10::Error& e) {
        if (is_out_of_memory(e)) {
            throw TrainingError("out of memory at batch_size=" + std::to_string(recipe_.batch_size) +
                                    "; lower batch_size (10-frame inputs typically need smaller mini-batches)",
                                last_checkpoint_);
        }
        throw;
    }
}

double Trainer::evaluate(std::span<const WindowRef> windows) {
    if (windows.empty()) throw DataError("no windows to evaluate");
    torch::NoGradGuard no_grad;
    const bool was_training = network_->is_training();
    network_->eval();
    double total = 0.0;
    const auto n = static_cast<std::int64_t>(windows.size());
    for (std::int64_t begin = 0; begin < n; begin += recipe_.batch_size) {
        const auto count = std::min(recipe_.batch_size, n - begin);
        auto [inputs, targets] = collate(frames_, windows.subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(count)),
                                         recipe_.repeat_current_frame);
        CpuAutocast autocast(recipe_.precision == Precision::mixed16);
        auto pred = network_->forward(inputs).to(torch::kFloat32);
        total += loss_.per_sample(pred, targets).to(torch::kFloat64).sum().item<double>();
    }
    network_->train(was_training);
    return total / static_cast<double>(n);
}

double Trainer::evaluate(SplitPart part) {
    return evaluate(part == SplitPart::train ? train_windows_ : validation_windows_);
}

fs::path Trainer::save_checkpoint(const std::string& name) {
    std::ostringstream dirname;
    if (name.empty())
        dirname << "step_" << std::setw(7) << std::setfill('0') << step_;
    else
        dirname << name;
    const auto dir = output_dir_ / "checkpoints" / dirname.str();
    ModelManifest manifest;
    manifest.init_seed = recipe_.seed;
    manifest.step = step_;
    manifest.model_id = output_dir_.filename().string();
    manifest.extra = {{"recipe", recipe_}, {"split", split_to_json(split_)}, {"loss_checksum", ""}};
    if (const auto* p = loss_.perceptual_loss()) manifest.extra["loss_checksum"] = p->checksum();
    save_model(dir, network_, manifest);
    torch::save(*optimizer_, (dir / kOptimizerFile).string());
    last_checkpoint_ = dir;
    return dir;
}

TrainSummary Trainer::run() {
    TrainSummary summary;
    const auto start = std::chrono::steady_clock::now();
    const auto per_epoch = steps_per_epoch();
    while (step_ < recipe_.max_steps) {
        if (recipe_.max_hours > 0.0) {
            const std::chrono::duration<double, std::ratio<3600>> elapsed = std::chrono::steady_clock::now() - start;
            if (elapsed.count() >= recipe_.max_hours) break;
        }
        summary.step_losses.push_back(train_step());
        ++summary.steps_run;
        if (step_ % per_epoch == 0 && !validation_windows_.empty())
            log_.append(step_, "validation", loss_.name(), evaluate(SplitPart::validation));
        if (recipe_.checkpoint_every > 0 && step_ % recipe_.checkpoint_every == 0) save_checkpoint();
    }
    summary.final_step = step_;
    if (summary.steps_run > 0 || last_checkpoint_.empty())
        summary.final_checkpoint = save_checkpoint();
    else
        summary.final_checkpoint = last_checkpoint_;
    return summary;
}

}  // namespace stereorecon
