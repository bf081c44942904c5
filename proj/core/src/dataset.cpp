#include "stereorecon/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "stereorecon/error.hpp"
#include "stereorecon/random.hpp"

namespace fs = std::filesystem;

namespace stereorecon {

InMemoryStereo::InMemoryStereo(std::vector<std::pair<Frame, Frame>> pairs) : pairs_(std::move(pairs)) {
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
        const auto& [l, r] = pairs_[i];
        if (l.height() != r.height() || l.width() != r.width())
            throw ShapeError("left/right dimensions differ at pair " + std::to_string(i));
        if (l.height() != pairs_.front().first.height() || l.width() != pairs_.front().first.width())
            throw ShapeError("pair " + std::to_string(i) + " differs in size from pair 0");
    }
}

void InMemoryStereo::push_back(const torch::Tensor& left, const torch::Tensor& right) {
    const auto index = size();
    Frame l(left, index);
    Frame r(right, index);
    if (l.height() != r.height() || l.width() != r.width()) throw ShapeError("left/right dimensions differ");
    if (!pairs_.empty() && (l.height() != height() || l.width() != width()))
        throw ShapeError("pair differs in size from existing pairs");
    pairs_.emplace_back(std::move(l), std::move(r));
}

std::int64_t InMemoryStereo::height() const { return pairs_.empty() ? 0 : pairs_.front().first.height(); }
std::int64_t InMemoryStereo::width() const { return pairs_.empty() ? 0 : pairs_.front().first.width(); }

Frame InMemoryStereo::left(std::int64_t index) const { return pairs_.at(static_cast<std::size_t>(index)).first; }
Frame InMemoryStereo::right(std::int64_t index) const { return pairs_.at(static_cast<std::size_t>(index)).second; }

StereoDirectory::StereoDirectory(std::vector<StereoPairPaths> paths, ImageSize size)
    : paths_(std::move(paths)), size_(size) {}

Frame StereoDirectory::read_checked(const fs::path& path, std::int64_t index) const {
    Frame f = read_frame(path, index);
    if (f.width() != size_.width || f.height() != size_.height) throw ItemError(path, "unexpected image size");
    return f;
}

Frame StereoDirectory::left(std::int64_t index) const {
    return read_checked(paths_.at(static_cast<std::size_t>(index)).left, index);
}

Frame StereoDirectory::right(std::int64_t index) const {
    return read_checked(paths_.at(static_cast<std::size_t>(index)).right, index);
}

InMemoryStereo StereoDirectory::load_all() const {
    std::vector<std::pair<Frame, Frame>> pairs;
    pairs.reserve(paths_.size());
    for (std::int64_t i = 0; i < size(); ++i) pairs.emplace_back(left(i), right(i));
    return InMemoryStereo(std::move(pairs));
}

namespace {

std::vector<fs::path> list_images(const fs::path& dir, const std::vector<std::string>& extensions) {
    if (!fs::is_directory(dir)) throw DataError("missing image directory " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (std::find(extensions.begin(), extensions.end(), ext) != extensions.end()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

}  // namespace

StereoDirectory load_stereo_dataset(const fs::path& root, const DatasetLayout& layout) {
    auto lefts = list_images(root / layout.left_dir, layout.extensions);
    auto rights = list_images(root / layout.right_dir, layout.extensions);
    if (lefts.size() != rights.size()) {
        std::ostringstream msg;
        msg << "left/right image counts differ under " << root.string() << ": " << lefts.size() << " vs "
            << rights.size();
        throw DataError(msg.str());
    }
    if (lefts.empty()) throw DataError("no images found under " + root.string());

    std::vector<StereoPairPaths> paths;
    paths.reserve(lefts.size());
    ImageSize expected{};
    for (std::size_t i = 0; i < lefts.size(); ++i) {
        if (lefts[i].filename() != rights[i].filename())
            throw ItemError(rights[i], "has no counterpart named " + lefts[i].filename().string());
        const auto ls = probe_image_size(lefts[i]);
        const auto rs = probe_image_size(rights[i]);
        if (i == 0) expected = ls;
        if (ls.width <= 0 || ls.height <= 0) throw ItemError(lefts[i], "empty image");
        if (!(ls == expected)) throw ItemError(lefts[i], "size differs from the first frame");
        if (!(rs == expected)) throw ItemError(rights[i], "size differs from its left view");
        paths.push_back({lefts[i], rights[i]});
    }
    return StereoDirectory(std::move(paths), expected);
}

void write_stereo_dataset(const fs::path& root, const FrameSource& source, const DatasetLayout& layout) {
    fs::create_directories(root / layout.left_dir);
    fs::create_directories(root / layout.right_dir);
    for (std::int64_t i = 0; i < source.size(); ++i) {
        std::ostringstream name;
        name << "frame_" << std::setw(6) << std::setfill('0') << i << ".png";
        write_png(root / layout.left_dir / name.str(), source.left(i).pixels());
        write_png(root / layout.right_dir / name.str(), source.right(i).pixels());
    }
}

DatasetSplit make_splits(std::int64_t total_frames, std::int64_t chunk_length, double train_fraction,
                         std::uint64_t seed) {
    if (chunk_length < 1) throw ConfigError("chunk_length must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
    if (total_frames < chunk_length)
        throw ConfigError("total_frames (" + std::to_string(total_frames) + ") is shorter than one chunk (" +
                          std::to_string(chunk_length) + ")");

    const std::int64_t chunks = total_frames / chunk_length;
    auto n_train = static_cast<std::int64_t>(std::llround(train_fraction * static_cast<double>(chunks)));
    n_train = std::clamp<std::int64_t>(n_train, 1, chunks);

    std::vector<std::int64_t> order(static_cast<std::size_t>(chunks));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    portable_shuffle(std::span(order), rng);

    std::vector<std::int64_t> train_ids(order.begin(), order.begin() + n_train);
    std::vector<std::int64_t> val_ids(order.begin() + n_train, order.end());
    std::sort(train_ids.begin(), train_ids.end());
    std::sort(val_ids.begin(), val_ids.end());

    DatasetSplit split;
    split.chunk_length = chunk_length;
    split.total_frames = total_frames;
    split.train_fraction = train_fraction;
    split.seed = seed;
    for (auto id : train_ids) split.train.push_back({id * chunk_length, chunk_length});
    for (auto id : val_ids) split.validation.push_back({id * chunk_length, chunk_length});
    return split;
}

DatasetSplit single_chunk_split(std::int64_t source_size, SplitPart part) {
    DatasetSplit split;
    split.chunk_length = source_size;
    split.total_frames = source_size;
    (part == SplitPart::train ? split.train : split.validation).push_back({0, source_size});
    return split;
}

nlohmann::json split_to_json(const DatasetSplit& split) {
    auto ranges = [](const std::vector<ChunkRange>& chunks) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& c : chunks) arr.push_back({{"start", c.start}, {"length", c.length}});
        return arr;
    };
    return {{"format", "stereorecon.split/1"},
            {"total_frames", split.total_frames},
            {"chunk_length", split.chunk_length},
            {"train_fraction", split.train_fraction},
            {"seed", split.seed},
            {"train", ranges(split.train)},
            {"validation", ranges(split.validation)}};
}

DatasetSplit split_from_json(const nlohmann::json& j) {
    DatasetSplit split;
    try {
        split.total_frames = j.at("total_frames").get<std::int64_t>();
        split.chunk_length = j.at("chunk_length").get<std::int64_t>();
        split.train_fraction = j.at("train_fraction").get<double>();
        split.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& c : j.at("train")) split.train.push_back({c.at("start"), c.at("length")});
        for (const auto& c : j.at("validation")) split.validation.push_back({c.at("start"), c.at("length")});
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed split manifest: ") + e.what());
    }
    return split;
}

void write_split_manifest(const fs::path& path, const DatasetSplit& split) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write split manifest " + path.string());
    out << split_to_json(split).dump(2) << '\n';
}

DatasetSplit read_split_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read split manifest " + path.string());
    try {
        return split_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("malformed split manifest " + path.string() + ": " + e.what());
    }
}

std::vector<WindowRef> sliding_window_samples(const std::vector<ChunkRange>& chunks, std::int64_t K) {
    if (K < 1) throw ConfigError("window length K must be >= 1");
    std::vector<WindowRef> windows;
    for (const auto& chunk : chunks) {
        if (K > chunk.length)
            throw ConfigError("window length K=" + std::to_string(K) + " exceeds chunk length " +
                              std::to_string(chunk.length));
        for (std::int64_t last = chunk.start + K - 1; last < chunk.end(); ++last) windows.push_back({last, K});
    }
    return windows;
}

std::vector<WindowRef> sliding_window_samples(const DatasetSplit& split, SplitPart part, std::int64_t K) {
    if (K > split.chunk_length)
        throw ConfigError("window length K=" + std::to_string(K) + " exceeds chunk length " +
                          std::to_string(split.chunk_length));
    return sliding_window_samples(part == SplitPart::train ? split.train : split.validation, K);
}

void shuffle_windows(std::vector<WindowRef>& windows, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    portable_shuffle(std::span(windows), rng);
}

StereoSample materialize(const FrameSource& source, const WindowRef& window) {
    std::vector<Frame> frames;
    frames.reserve(static_cast<std::size_t>(window.length));
    for (auto i = window.first(); i <= window.last; ++i) frames.push_back(source.left(i));
    return StereoSample(FrameWindow(std::move(frames)), source.right(window.last));
}

torch::Tensor window_tensor(const FrameSource& source, const WindowRef& window, bool repeat_current) {
    if (window.first() < 0 || window.last >= source.size()) throw ShapeError("window outside the frame source");
    if (repeat_current) {
        return source.left(window.last).pixels().unsqueeze(0).expand({window.length, -1, -1, -1}).contiguous();
    }
    std::vector<torch::Tensor> frames;
    frames.reserve(static_cast<std::size_t>(window.length));
    for (auto i = window.first(); i <= window.last; ++i) frames.push_back(source.left(i).pixels());
    return torch::stack(frames);
}

std::pair<torch::Tensor, torch::Tensor> collate(const FrameSource& source, std::span<const WindowRef> windows,
                                                bool repeat_current) {
    std::vector<torch::Tensor> inputs;
    std::vector<torch::Tensor> targets;
    inputs.reserve(windows.size());
    targets.reserve(windows.size());
    for (const auto& w : windows) {
        inputs.push_back(window_tensor(source, w, repeat_current));
        targets.push_back(source.right(w.last).pixels());
    }
    return {torch::stack(inputs), torch::stack(targets)};
}

}  // namespace stereorecon
