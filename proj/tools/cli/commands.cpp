#include "commands.hpp"

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <pthread.h>
#include <set>
#include <sstream>

#include <torch/torch.h>

#include "run_manifest.hpp"
#include "stereorecon/baseline.hpp"
#include "stereorecon/checkpoint.hpp"
#include "stereorecon/dataset.hpp"
#include "stereorecon/error.hpp"
#include "stereorecon/evaluate.hpp"
#include "stereorecon/features.hpp"
#include "stereorecon/ranking.hpp"
#include "stereorecon/study.hpp"
#include "stereorecon/study_server.hpp"
#include "stereorecon/synthetic.hpp"
#include "stereorecon/trainer.hpp"
#include "stereorecon/video_export.hpp"

namespace stereorecon::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Invocation {
    int argc;
    char** argv;
};

template <typename Enum>
CLI::Validator enum_check(Enum (*parse)(const std::string&), std::string name) {
    return CLI::Validator(
        [parse](std::string& value) -> std::string {
            try {
                parse(value);
                return {};
            } catch (const ConfigError& e) {
                return e.what();
            }
        },
        std::move(name));
}

// Data selection shared by commands that read a dataset and a split.
struct DataOptions {
    fs::path data;
    std::optional<fs::path> split;
    std::string part = "validation";

    void add(CLI::App* cmd, bool with_part) {
        cmd->add_option("--data", data, "Dataset root with left/ and right/ frame directories")
            ->required()
            ->check(CLI::ExistingDirectory);
        cmd->add_option("--split", split, "Split manifest from prepare-data; all frames form one chunk when omitted")
            ->check(CLI::ExistingFile);
        if (with_part)
            cmd->add_option("--part", part, "Split part to use")->check(CLI::IsMember({"train", "validation"}));
    }

    SplitPart split_part() const { return part == "train" ? SplitPart::train : SplitPart::validation; }

    DatasetSplit load_split(std::int64_t frames, SplitPart default_part) const {
        if (!split) return single_chunk_split(frames, default_part);
        auto s = read_split_manifest(*split);
        if (s.total_frames > frames)
            throw DataError("split covers " + std::to_string(s.total_frames) + " frames but the dataset has " +
                            std::to_string(frames));
        return s;
    }

    const std::vector<ChunkRange>& chunks(const DatasetSplit& s) const {
        return split_part() == SplitPart::train ? s.train : s.validation;
    }
};

std::vector<std::int64_t> frame_indices(const std::vector<ChunkRange>& chunks) {
    std::vector<std::int64_t> out;
    for (const auto& c : chunks)
        for (auto i = c.start; i < c.end(); ++i) out.push_back(i);
    if (out.empty()) throw DataError("the selected split part has no frames");
    return out;
}

std::optional<FeatureWeights> load_vgg(const std::optional<fs::path>& path, std::optional<std::uint64_t> seeded) {
    if (path) return FeatureWeights::from_file(*path);
    if (seeded) return FeatureWeights::seeded(*seeded);
    throw ConfigError("the perceptual loss needs --vgg-weights (or --seeded-vgg for a random trunk)");
}

// Predictor selection shared by evaluate and export-video.
struct PredictorOptions {
    std::optional<fs::path> checkpoint;
    std::optional<fs::path> baseline;
    std::optional<std::int64_t> shift;
    std::string fill = "copy_original";
    std::string model_id;

    void add(CLI::App* cmd) {
        auto* c = cmd->add_option("--checkpoint", checkpoint, "Model checkpoint directory")->check(CLI::ExistingDirectory);
        auto* b = cmd->add_option("--baseline", baseline, "Shift baseline JSON from fit-baseline")->check(CLI::ExistingFile);
        auto* s = cmd->add_option("--shift", shift, "Horizontal shift baseline with this delta in pixels");
        c->excludes(b)->excludes(s);
        b->excludes(s);
        cmd->add_option("--fill", fill, "Fill policy for --shift")->check(enum_check(&parse_fill_policy, "FILL"));
        cmd->add_option("--model-id", model_id, "Identifier written to reports");
    }

    std::unique_ptr<Predictor> make(json& details) const {
        if (checkpoint) {
            auto loaded = load_model(*checkpoint);
            bool repeat = false;
            if (loaded.manifest.extra.contains("recipe"))
                repeat = loaded.manifest.extra["recipe"].value("repeat_current_frame", false);
            details["checkpoint"] = checkpoint->string();
            details["parameter_sha256"] = loaded.manifest.parameter_sha256;
            details["model"] = loaded.manifest.config;
            const auto id = model_id.empty() ? loaded.manifest.model_id : model_id;
            return std::make_unique<NetworkPredictor>(loaded.network, id, repeat);
        }
        if (baseline) {
            const auto j = read_json_file(*baseline);
            const auto delta = j.at("delta").get<std::int64_t>();
            const auto f = parse_fill_policy(j.at("fill").get<std::string>());
            details["baseline"] = {{"file", baseline->string()}, {"delta", delta}, {"fill", to_string(f)}};
            return std::make_unique<ShiftPredictor>(delta, f, model_id.empty() ? "shift" : model_id);
        }
        if (shift) {
            details["baseline"] = {{"delta", *shift}, {"fill", fill}};
            return std::make_unique<ShiftPredictor>(*shift, parse_fill_policy(fill), model_id.empty() ? "shift" : model_id);
        }
        throw ConfigError("one of --checkpoint, --baseline or --shift is required");
    }
};

void add_out(CLI::App* cmd, fs::path& out) {
    cmd->add_option("--out", out, "Output directory (created; receives run_manifest.json)")->required();
}

// ---------------------------------------------------------------------------------------------

void register_synthesize(CLI::App& app, Invocation inv, Runners& runners) {
    struct Opts {
        fs::path out;
        std::string kind = "plane";
        std::int64_t frames = 100;
        std::int64_t height = 192;
        std::int64_t width = 384;
        std::int64_t disparity = -20;
        std::int64_t motion_x = 2;
        std::int64_t motion_y = 0;
        std::int64_t segments = 10;
        std::int64_t segment_length = 10;
        std::uint64_t seed = 0;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("synthesize-data", "Write a synthetic stereo sequence with known disparity");
    cmd->configurable();
    cmd->option_defaults()->always_capture_default();
    add_out(cmd, o->out);
    cmd->add_option("--kind", o->kind, "plane: textured plane at constant disparity; occluder: moving bar over a background")
        ->check(CLI::IsMember({"plane", "occluder"}))
        ->capture_default_str();
    cmd->add_option("--frames", o->frames, "Frames (plane)")->capture_default_str();
    cmd->add_option("--height", o->height)->capture_default_str();
    cmd->add_option("--width", o->width)->capture_default_str();
    cmd->add_option("--disparity", o->disparity, "True disparity in pixels, right[c] = left[c - d] (plane)")
        ->capture_default_str();
    cmd->add_option("--motion-x", o->motion_x, "Pan per frame in pixels (plane)")->capture_default_str();
    cmd->add_option("--motion-y", o->motion_y)->capture_default_str();
    cmd->add_option("--segments", o->segments, "Segments (occluder)")->capture_default_str();
    cmd->add_option("--segment-length", o->segment_length, "Frames per segment (occluder)")->capture_default_str();
    cmd->add_option("--seed", o->seed)->capture_default_str();
    runners[cmd->get_name()] = [o, cmd, inv] {
        InMemoryStereo scene;
        if (o->kind == "plane") {
            SyntheticSceneSpec spec;
            spec.num_frames = o->frames;
            spec.height = o->height;
            spec.width = o->width;
            spec.true_disparity = o->disparity;
            spec.texture_seed = o->seed;
            spec.motion_x = o->motion_x;
            spec.motion_y = o->motion_y;
            scene = generate_synthetic_stereo(spec);
        } else {
            OccluderSceneSpec spec;
            spec.num_segments = o->segments;
            spec.segment_length = o->segment_length;
            spec.height = o->height;
            spec.width = o->width;
            spec.seed = o->seed;
            scene = generate_occluder_stereo(spec);
        }
        write_stereo_dataset(o->out, scene);
        write_run_manifest(o->out, *cmd, inv.argc, inv.argv, {{"texture", o->seed}}, {{"frames", scene.size()}});
        std::cout << "wrote " << scene.size() << " stereo pairs to " << o->out.string() << '\n';
    };
}

void register_prepare(CLI::App& app, Invocation inv, Runners& runners) {
    struct Opts {
        fs::path data;
        fs::path out;
        std::int64_t chunk_length = 1000;
        double train_fraction = 0.8;
        std::uint64_t seed = 0;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("prepare-data", "Validate a frame dataset and write a chunked train/validation split");
    cmd->configurable();
    cmd->option_defaults()->always_capture_default();
    cmd->add_option("--data", o->data, "Dataset root with left/ and right/")->required()->check(CLI::ExistingDirectory);
    add_out(cmd, o->out);
    cmd->add_option("--chunk-length", o->chunk_length, "Frames per chunk; trailing partial chunks are dropped")
        ->capture_default_str();
    cmd->add_option("--train-fraction", o->train_fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    cmd->add_option("--seed", o->seed, "Chunk allocation seed")->capture_default_str();
    runners[cmd->get_name()] = [o, cmd, inv] {
        const auto dataset = load_stereo_dataset(o->data);
        for (std::int64_t i = 0; i < dataset.size(); ++i) {
            dataset.left(i);
            dataset.right(i);
        }
        const auto split = make_splits(dataset.size(), o->chunk_length, o->train_fraction, o->seed);
        fs::create_directories(o->out);
        write_split_manifest(o->out / "split.json", split);
        write_run_manifest(o->out, *cmd, inv.argc, inv.argv, {{"split", o->seed}},
                           {{"frames", dataset.size()},
                            {"height", dataset.height()},
                            {"width", dataset.width()},
                            {"train_chunks", split.train.size()},
                            {"validation_chunks", split.validation.size()}});
        std::cout << dataset.size() << " frames of " << dataset.height() << "x" << dataset.width() << ": "
                  << split.train.size() << " training and " << split.validation.size() << " validation chunks -> "
                  << (o->out / "split.json").string() << '\n';
    };
}

void register_train(CLI::App& app, Invocation inv, Runners& runners) {
    struct Opts {
        DataOptions data;
        fs::path out;
        TrainRecipe recipe;
        std::string temporal_mode = "single";
        std::string temporal_module = "conv3d";
        std::string upsampling = "transposed_conv";
        std::string loss = "perceptual";
        std::string precision = "full";
        std::optional<fs::path> vgg_weights;
        std::optional<std::uint64_t> seeded_vgg;
        std::optional<fs::path> resume;
        bool preload = false;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("train", "Train a right-view network");
    cmd->configurable();
    cmd->option_defaults()->always_capture_default();
    o->data.add(cmd, false);
    add_out(cmd, o->out);
    auto& r = o->recipe;
    cmd->add_option("--frames", r.model.frames, "Input frames K")->capture_default_str();
    cmd->add_option("--depth", r.model.depth, "Encoder levels")->capture_default_str();
    cmd->add_option("--temporal-mode", o->temporal_mode)->check(enum_check(&parse_temporal_mode, "MODE"))->capture_default_str();
    cmd->add_option("--temporal-module", o->temporal_module)
        ->check(enum_check(&parse_temporal_module, "MODULE"))
        ->capture_default_str();
    cmd->add_option("--upsampling", o->upsampling)->check(enum_check(&parse_upsampling, "UP"))->capture_default_str();
    cmd->add_option("--base-channels", r.model.base_channels)->capture_default_str();
    cmd->add_flag("--sigmoid-output", r.model.sigmoid_output);
    cmd->add_flag("--extra-skip", r.model.extra_skip, "Add the current left frame to the output");
    cmd->add_option("--loss", o->loss)->check(enum_check(&parse_loss_kind, "LOSS"))->capture_default_str();
    cmd->add_option("--lr", r.learning_rate, "Constant Adam learning rate")->capture_default_str();
    cmd->add_option("--batch-size", r.batch_size)->capture_default_str();
    cmd->add_option("--max-steps", r.max_steps)->capture_default_str();
    cmd->add_option("--max-hours", r.max_hours, "Wall-clock budget, 0 = unlimited")->capture_default_str();
    cmd->add_option("--precision", o->precision)->check(enum_check(&parse_precision, "PRECISION"))->capture_default_str();
    cmd->add_option("--seed", r.seed, "Parameter init and sample order")->capture_default_str();
    cmd->add_option("--checkpoint-every", r.checkpoint_every, "Steps between checkpoints, 0 = final only")
        ->capture_default_str();
    cmd->add_flag("--repeat-current-frame", r.repeat_current_frame,
                  "Feed K copies of the current frame instead of the K most recent frames");
    cmd->add_option("--vgg-weights", o->vgg_weights, "torchvision VGG16 state dict for the perceptual loss")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seeded-vgg", o->seeded_vgg, "Use a seeded random VGG16 trunk when no weights file is given");
    cmd->add_option("--resume", o->resume, "Continue from this checkpoint directory")->check(CLI::ExistingDirectory);
    cmd->add_flag("--preload", o->preload, "Decode every frame into memory first");
    runners[cmd->get_name()] = [o, cmd, inv] {
        auto recipe = o->recipe;
        recipe.model.temporal_mode = parse_temporal_mode(o->temporal_mode);
        recipe.model.temporal_module = parse_temporal_module(o->temporal_module);
        recipe.model.upsampling = parse_upsampling(o->upsampling);
        recipe.loss = parse_loss_kind(o->loss);
        recipe.precision = parse_precision(o->precision);
        recipe.validate();

        const auto dataset = load_stereo_dataset(o->data.data);
        std::optional<InMemoryStereo> memory;
        if (o->preload) memory = dataset.load_all();
        const FrameSource& frames = memory ? static_cast<const FrameSource&>(*memory) : dataset;
        const auto split = o->data.load_split(dataset.size(), SplitPart::train);
        const auto weights = recipe.loss == LossKind::perceptual ? load_vgg(o->vgg_weights, o->seeded_vgg) : std::nullopt;
        auto loss = LossFunction::make(recipe.loss, weights);

        json details{{"recipe", recipe}, {"split", split_to_json(split)}};
        if (weights) details["vgg"] = {{"origin", weights->origin}, {"checksum", weights->checksum}};
        write_run_manifest(o->out, *cmd, inv.argc, inv.argv, {{"init_and_order", recipe.seed}}, details);

        auto trainer = o->resume ? Trainer::resume(*o->resume, recipe, frames, split, std::move(loss), o->out)
                                 : Trainer(recipe, frames, split, std::move(loss), o->out);
        std::cout << "training from step " << trainer.step() << " to " << recipe.max_steps << " ("
                  << trainer.steps_per_epoch() << " steps per epoch)\n";
        const auto summary = trainer.run();
        if (!summary.step_losses.empty())
            std::cout << "first loss " << summary.step_losses.front() << ", last loss " << summary.step_losses.back()
                      << '\n';
        std::cout << "checkpoint: " << summary.final_checkpoint.string() << '\n';
    };
}

void register_fit_baseline(CLI::App& app, Invocation inv, Runners& runners) {
    struct Opts {
        DataOptions data;
        fs::path out;
        std::string fill = "copy_original";
        std::string loss = "mse";
        std::optional<fs::path> vgg_weights;
        std::optional<std::uint64_t> seeded_vgg;
        ShiftFitOptions fit;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("fit-baseline", "Fit the horizontal-shift baseline by exhaustive search");
    cmd->configurable();
    cmd->option_defaults()->always_capture_default();
    o->data.add(cmd, true);
    add_out(cmd, o->out);
    cmd->add_option("--fill", o->fill, "zeros or copy_original")->check(enum_check(&parse_fill_policy, "FILL"))->capture_default_str();
    cmd->add_option("--loss", o->loss)->check(enum_check(&parse_loss_kind, "LOSS"))->capture_default_str();
    cmd->add_option("--vgg-weights", o->vgg_weights)->check(CLI::ExistingFile);
    cmd->add_option("--seeded-vgg", o->seeded_vgg, "Use a seeded random VGG16 trunk when no weights file is given");
    cmd->add_option("--min-delta", o->fit.min_delta, "Search range start, default -W");
    cmd->add_option("--max-delta", o->fit.max_delta, "Search range end, default W");
    cmd->add_option("--stride", o->fit.stride, "Fit on every n-th frame; the reported loss uses all frames")
        ->capture_default_str();
    cmd->add_option("--batch-size", o->fit.batch_size)->capture_default_str();
    runners[cmd->get_name()] = [o, cmd, inv] {
        const auto dataset = load_stereo_dataset(o->data.data);
        const auto split = o->data.load_split(dataset.size(), o->data.split_part());
        const auto indices = frame_indices(o->data.chunks(split));
        const auto kind = parse_loss_kind(o->loss);
        const auto weights = kind == LossKind::perceptual ? load_vgg(o->vgg_weights, o->seeded_vgg) : std::nullopt;
        const auto loss = LossFunction::make(kind, weights);
        const auto fit = fit_shift(dataset, indices, loss, parse_fill_policy(o->fill), o->fit);
        fs::create_directories(o->out);
        write_json_file(o->out / "baseline.json", to_json(fit));
        std::ofstream curve(o->out / "loss_curve.csv");
        curve << "delta,loss\n" << std::setprecision(10);
        for (const auto& [d, v] : fit.loss_curve) curve << d << ',' << v << '\n';
        json details{{"frames", indices.size()}, {"delta", fit.delta}, {"loss_value", fit.loss_value}};
        if (fit.degenerate(dataset.width())) details["warning"] = "fitted shift moves the whole frame out of view";
        write_run_manifest(o->out, *cmd, inv.argc, inv.argv, json::object(), details);
        std::cout << "delta " << fit.delta << " (" << to_string(fit.fill) << ", " << to_string(kind)
                  << ") loss " << fit.loss_value << " over " << indices.size() << " frames\n";
        if (fit.degenerate(dataset.width())) std::cout << "warning: degenerate full-width shift\n";
    };
}

void register_evaluate(CLI::App& app, Invocation inv, Runners& runners) {
    struct Opts {
        DataOptions data;
        PredictorOptions predictor;
        fs::path out;
        MetricSuiteOptions metrics;
        EvaluationOptions evaluation;
        bool no_fid = false;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("evaluate", "Score a checkpoint or shift baseline with DISTS, LPIPS, FID, PSNR and SSIM");
    cmd->configurable();
    cmd->option_defaults()->always_capture_default();
    o->data.add(cmd, true);
    o->predictor.add(cmd);
    add_out(cmd, o->out);
    cmd->add_option("--vgg-weights", o->metrics.vgg_weights, "torchvision VGG16 state dict")->check(CLI::ExistingFile);
    cmd->add_option("--lpips-weights", o->metrics.lpips_weights, "LPIPS linear-layer state dict")->check(CLI::ExistingFile);
    cmd->add_option("--dists-weights", o->metrics.dists_weights, "DISTS alpha/beta state dict")->check(CLI::ExistingFile);
    cmd->add_option("--seeded-metrics", o->metrics.seeded_fallback,
                    "Stand in a seeded VGG16 and uniform calibrations for missing weight files");
    cmd->add_flag("--no-fid", o->no_fid);
    cmd->add_option("--batch-size", o->evaluation.batch_size)->capture_default_str();
    cmd->add_option("--align-frames", o->evaluation.align_frames,
                    "Score only targets that end windows of this length, to compare models with different K")
        ->capture_default_str();
    runners[cmd->get_name()] = [o, cmd, inv] {
        json details;
        auto predictor = o->predictor.make(details);
        const auto dataset = load_stereo_dataset(o->data.data);
        const auto split = o->data.load_split(dataset.size(), o->data.split_part());
        const auto& chunks = o->data.chunks(split);
        const auto k = std::max(predictor->frames(), o->evaluation.align_frames);
        for (const auto& c : chunks)
            if (c.length < k)
                throw DataError("chunk at frame " + std::to_string(c.start) + " is shorter than the model's " +
                                std::to_string(k) + "-frame window");
        auto metrics = o->metrics;
        metrics.compute_fid = !o->no_fid;
        auto suite = MetricSuite::load(metrics);
        auto options = o->evaluation;
        options.set_id = o->data.part;
        const auto report = evaluate(*predictor, dataset, chunks, suite, options);
        fs::create_directories(o->out);
        {
            std::ofstream csv(o->out / "report.csv");
            csv << report.csv_header() << '\n' << report.csv_row() << '\n';
            std::ofstream txt(o->out / "report.txt");
            txt << report.text_table();
        }
        details["values"] = report.values;
        details["notes"] = report.notes;
        details["sample_count"] = report.sample_count;
        write_run_manifest(o->out, *cmd, inv.argc, inv.argv, {{"metrics_fallback", metrics.seeded_fallback.value_or(0)}},
                           details);
        std::cout << report.text_table();
    };
}

void register_rank(CLI::App& app, Invocation inv, Runners& runners) {
    struct Opts {
        std::vector<fs::path> records;
        fs::path out;
        std::string reference = "target";
        std::optional<std::int64_t> win_denominator;
        BradleyTerryOptions bt;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("rank", "Bradley-Terry ranking and majority-vote win rates from comparison CSVs");
    cmd->configurable();
    cmd->option_defaults()->always_capture_default();
    cmd->add_option("--records", o->records, "Comparison CSV files (study export format)")
        ->required()
        ->check(CLI::ExistingFile);
    add_out(cmd, o->out);
    cmd->add_option("--reference", o->reference, "Item fixed at worth 1")->capture_default_str();
    cmd->add_option("--win-denominator", o->win_denominator, "Questions per model for win percentages");
    cmd->add_option("--smoothing", o->bt.smoothing, "Pseudo-outcome weight for items that never win or never lose")
        ->capture_default_str();
    cmd->add_option("--tolerance", o->bt.tolerance, "Log-likelihood convergence tolerance")->capture_default_str();
    runners[cmd->get_name()] = [o, cmd, inv] {
        std::vector<ComparisonRecord> records;
        for (const auto& path : o->records) {
            std::ifstream in(path);
            if (!in) throw DataError("cannot read " + path.string());
            auto part = read_records_csv(in);
            records.insert(records.end(), part.begin(), part.end());
        }
        const auto fit = fit_bradley_terry(records, o->reference, o->bt);
        const auto rows = ranking_table(fit, records, o->win_denominator);
        fs::create_directories(o->out);
        {
            std::ofstream csv(o->out / "ranking.csv");
            csv << ranking_table_csv(rows);
            std::ofstream txt(o->out / "ranking.txt");
            txt << ranking_table_text(rows, fit.reference_id);
        }
        json worths = json::array();
        for (const auto& e : fit.estimates)
            worths.push_back({{"model_id", e.model_id},
                              {"worth", e.worth},
                              {"log_worth", e.log_worth},
                              {"std_error", e.std_error},
                              {"smoothed", e.smoothed}});
        json details{{"records", records.size()},
                     {"log_likelihood", fit.log_likelihood},
                     {"iterations", fit.iterations},
                     {"converged", fit.converged},
                     {"worths", worths}};
        std::set<ReaderGroup> groups;
        for (const auto& r : records) groups.insert(r.group);
        std::ostringstream agreement;
        for (auto g : groups) {
            try {
                const double d = within_group_disagreement(records, g);
                details["disagreement"][to_string(g)] = d;
                agreement << to_string(g) << " within-group disagreement: " << d << '\n';
            } catch (const ConfigError&) {
            }
        }
        if (groups.count(ReaderGroup::expert) && groups.count(ReaderGroup::non_expert)) {
            try {
                const double a = cross_group_agreement(records, ReaderGroup::expert, ReaderGroup::non_expert);
                details["cross_group_agreement"] = a;
                agreement << "expert/non_expert majority agreement: " << a << '\n';
            } catch (const ConfigError&) {
            }
        }
        write_run_manifest(o->out, *cmd, inv.argc, inv.argv, json::object(), details);
        std::cout << ranking_table_text(rows, fit.reference_id) << agreement.str();
        if (!fit.converged) std::cout << "warning: Bradley-Terry iterations did not converge\n";
    };
}

void register_serve(CLI::App& app, Invocation inv, Runners& runners) {
    struct Opts {
        fs::path state_dir;
        StudyServerOptions server;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("serve-study", "Serve the blinded pairwise study over HTTP until interrupted");
    cmd->configurable();
    cmd->option_defaults()->always_capture_default();
    cmd->add_option("--state-dir", o->state_dir, "Directory holding the study event log")->required();
    cmd->add_option("--host", o->server.host)->capture_default_str();
    cmd->add_option("--port", o->server.port, "0 picks a free port")->capture_default_str();
    cmd->add_option("--static-dir", o->server.static_dir, "Frontend files served at /")->check(CLI::ExistingDirectory);
    runners[cmd->get_name()] = [o, cmd, inv] {
        sigset_t stop_signals;
        sigemptyset(&stop_signals);
        sigaddset(&stop_signals, SIGINT);
        sigaddset(&stop_signals, SIGTERM);
        pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

        StudyService service(o->state_dir);
        StudyServer server(service, o->server);
        const int port = server.start();
        write_run_manifest(o->state_dir, *cmd, inv.argc, inv.argv, json::object(),
                           {{"port", port}, {"studies", service.study_ids()}});
        std::cout << "serving " << service.study_ids().size() << " studies on http://" << o->server.host << ':' << port
                  << std::endl;
        int received = 0;
        sigwait(&stop_signals, &received);
        server.stop();
        std::cout << "stopped\n";
    };
}

void register_export(CLI::App& app, Invocation inv, Runners& runners) {
    struct Opts {
        fs::path data;
        PredictorOptions predictor;
        fs::path out;
        std::string layout = "side_by_side";
        double fps = 20.0;
        std::int64_t first = 0;
        std::optional<std::int64_t> count;
        std::string video_name = "stereo.mkv";
        bool no_video = false;
        std::int64_t batch_size = 4;
    };
    auto o = std::make_shared<Opts>();
    auto* cmd = app.add_subcommand("export-video", "Combine left frames with predicted right views into a stereo video");
    cmd->configurable();
    cmd->option_defaults()->always_capture_default();
    cmd->add_option("--data", o->data, "Dataset root; frames are read from its left/ directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    o->predictor.add(cmd);
    add_out(cmd, o->out);
    cmd->add_option("--layout", o->layout, "side_by_side or anaglyph")
        ->check(enum_check(&parse_stereo_layout, "LAYOUT"))
        ->capture_default_str();
    cmd->add_option("--fps", o->fps)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--first", o->first, "First left frame")->capture_default_str();
    cmd->add_option("--count", o->count, "Number of left frames, default all");
    cmd->add_option("--video-name", o->video_name, ".mkv tries FFV1, .avi uses Motion-JPEG")->capture_default_str();
    cmd->add_flag("--no-video", o->no_video, "Write PNG frames only");
    cmd->add_option("--batch-size", o->batch_size)->capture_default_str();
    runners[cmd->get_name()] = [o, cmd, inv] {
        json details;
        auto predictor = o->predictor.make(details);
        const auto dataset = load_stereo_dataset(o->data);
        const auto end = o->count ? o->first + *o->count : dataset.size();
        if (o->first < 0 || end > dataset.size() || end <= o->first)
            throw ConfigError("frame range [" + std::to_string(o->first) + ", " + std::to_string(end) +
                              ") is outside the dataset's " + std::to_string(dataset.size()) + " frames");
        std::vector<Frame> frames;
        for (auto i = o->first; i < end; ++i) frames.push_back(dataset.left(i));
        VideoExportOptions options;
        options.layout = parse_stereo_layout(o->layout);
        options.fps = o->fps;
        options.png_dir = o->out / "frames";
        if (!o->no_video) options.video_path = o->out / o->video_name;
        options.batch_size = o->batch_size;
        const auto result = export_stereo_video(frames, *predictor, options);
        details["frame_count"] = result.frame_count;
        details["first_source_index"] = o->first + result.first_source_index;
        details["codec"] = result.codec;
        write_run_manifest(o->out, *cmd, inv.argc, inv.argv, json::object(), details);
        std::cout << result.frame_count << " frames of " << result.height << "x" << result.width;
        if (result.video_path) std::cout << " -> " << result.video_path->string() << " (" << result.codec << ")";
        std::cout << '\n';
    };
}

}  // namespace

Runners register_commands(CLI::App& app, int argc, char** argv) {
    const Invocation inv{argc, argv};
    Runners runners;
    register_synthesize(app, inv, runners);
    register_prepare(app, inv, runners);
    register_train(app, inv, runners);
    register_fit_baseline(app, inv, runners);
    register_evaluate(app, inv, runners);
    register_rank(app, inv, runners);
    register_serve(app, inv, runners);
    register_export(app, inv, runners);
    return runners;
}

}  // namespace stereorecon::cli
