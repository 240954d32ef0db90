#include "dwnet/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "dwnet/error.hpp"

namespace dwnet {

SkeletonSequence::SkeletonSequence(std::string id_, int label_, std::size_t frames_,
                                   std::size_t persons_, std::size_t joints_)
    : id(std::move(id_)),
      label(label_),
      frames(frames_),
      persons(persons_),
      joints(joints_),
      coords(frames_ * persons_ * joints_ * 3, 0.0) {}

void SkeletonSequence::validate() const {
    if (persons == 0 || joints == 0) {
        throw ConfigError("sequence '" + id + "': persons and joints must be positive");
    }
    if (frames < 2) {
        throw ConfigError("sequence '" + id + "': needs at least 2 frames, has " +
                          std::to_string(frames));
    }
    if (label < 0) {
        throw ConfigError("sequence '" + id + "': negative label");
    }
    if (coords.size() != frames * persons * joints * 3) {
        throw ConfigError("sequence '" + id + "': coordinate buffer has " +
                          std::to_string(coords.size()) + " values, expected " +
                          std::to_string(frames * persons * joints * 3));
    }
    for (double v : coords) {
        if (!std::isfinite(v)) {
            throw ConfigError("sequence '" + id + "': non-finite coordinate");
        }
    }
}

bool DatasetManifest::has_groups() const {
    return !entries.empty() && std::all_of(entries.begin(), entries.end(),
                                           [](const ManifestEntry& e) { return !e.group.empty(); });
}

void DatasetManifest::validate() const {
    if (class_names.empty()) {
        throw ConfigError("manifest: no class names");
    }
    std::vector<bool> seen(class_names.size(), false);
    std::set<std::string> ids;
    for (const auto& e : entries) {
        if (e.label < 0 || static_cast<std::size_t>(e.label) >= class_names.size()) {
            throw ConfigError("manifest: entry '" + e.id + "' has label " +
                              std::to_string(e.label) + " outside [0, " +
                              std::to_string(class_names.size()) + ")");
        }
        seen[static_cast<std::size_t>(e.label)] = true;
        if (!ids.insert(e.id).second) {
            throw ConfigError("manifest: duplicate id '" + e.id + "'");
        }
    }
    if (!entries.empty()) {
        for (std::size_t c = 0; c < seen.size(); ++c) {
            if (!seen[c]) {
                throw ConfigError("manifest: labels are not dense, class " + std::to_string(c) +
                                  " ('" + class_names[c] + "') has no entries");
            }
        }
    }
}

Json manifest_to_json(const DatasetManifest& manifest) {
    Json j;
    j["joints"] = manifest.joints;
    j["persons"] = manifest.persons;
    j["class_names"] = manifest.class_names;
    Json entries = Json::array();
    for (const auto& e : manifest.entries) {
        Json je;
        je["id"] = e.id;
        if (!e.path.empty()) {
            je["path"] = e.path;
        }
        je["label"] = e.label;
        if (!e.group.empty()) {
            je["group"] = e.group;
        }
        entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    return j;
}

DatasetManifest manifest_from_json(const Json& j) {
    DatasetManifest m;
    try {
        m.joints = j.at("joints").get<std::size_t>();
        m.persons = j.at("persons").get<std::size_t>();
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        for (const auto& je : j.at("entries")) {
            ManifestEntry e;
            e.id = je.at("id").get<std::string>();
            e.path = je.value("path", std::string{});
            e.label = je.at("label").get<int>();
            e.group = je.value("group", std::string{});
            m.entries.push_back(std::move(e));
        }
    } catch (const Json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
    m.validate();
    return m;
}

// ---- SBU ---------------------------------------------------------------------

SkeletonSequence parse_sbu_text(std::string_view text, std::string_view source) {
    std::vector<double> values;
    std::size_t frames = 0;
    std::size_t row = 0;
    while (!text.empty()) {
        const std::size_t nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++row;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            continue;
        }
        std::vector<double> fields;
        try {
            fields = doubles_from_csv(line);
        } catch (const ParseError& e) {
            throw ParseError(std::string(source) + ": row " + std::to_string(row) + ": " +
                             e.what());
        }
        if (fields.size() != kSbuFieldsPerRow) {
            throw ParseError(std::string(source) + ": row " + std::to_string(row) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(kSbuFieldsPerRow));
        }
        values.insert(values.end(), fields.begin() + 1, fields.end());
        ++frames;
    }
    if (frames < 2) {
        throw ParseError(std::string(source) + ": " + std::to_string(frames) +
                         " frame(s), at least 2 required");
    }
    SkeletonSequence seq(std::string(source), 0, frames, kSbuPersons, kSbuJoints);
    seq.coords = std::move(values);
    return seq;
}

SkeletonSequence parse_sbu(const std::filesystem::path& file) {
    return parse_sbu_text(read_text_file(file), file.string());
}

std::string format_sbu(const SkeletonSequence& seq) {
    if (seq.persons != kSbuPersons || seq.joints != kSbuJoints) {
        throw ShapeError("format_sbu: sequence must have 2 persons x 15 joints");
    }
    std::string out;
    const std::size_t per_frame = kSbuPersons * kSbuJoints * 3;
    for (std::size_t f = 0; f < seq.frames; ++f) {
        out += std::to_string(f + 1);
        for (std::size_t i = 0; i < per_frame; ++i) {
            out += ',';
            out += format_double(seq.coords[f * per_frame + i]);
        }
        out += '\n';
    }
    return out;
}

namespace {

const std::vector<std::string>& sbu_class_names() {
    static const std::vector<std::string> names{
        "approaching", "departing", "kicking",      "punching",
        "pushing",     "hugging",   "shaking_hands", "exchanging"};
    return names;
}

}  // namespace

Dataset load_sbu_dir(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) {
        throw ConfigError("SBU dataset directory not found: " + root.string());
    }
    Dataset data;
    const fs::path manifest_path = root / "manifest.json";
    if (fs::exists(manifest_path)) {
        data.manifest = manifest_from_json(read_json_file(manifest_path));
        for (const auto& e : data.manifest.entries) {
            auto seq = parse_sbu(root / e.path);
            seq.id = e.id;
            seq.label = e.label;
            seq.group = e.group;
            data.sequences.push_back(std::move(seq));
        }
        return data;
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file() && entry.path().filename() == "skeleton_pos.txt") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw ConfigError("no skeleton_pos.txt files under " + root.string());
    }
    data.manifest.class_names = sbu_class_names();
    data.manifest.joints = kSbuJoints;
    data.manifest.persons = kSbuPersons;
    for (const auto& file : files) {
        const fs::path take = file.parent_path();
        const fs::path action = take.parent_path();
        const fs::path pair = action.parent_path();
        int label = 0;
        try {
            label = std::stoi(action.filename().string()) - 1;
        } catch (const std::exception&) {
            throw ParseError(file.string() + ": action folder '" + action.filename().string() +
                             "' is not a class number");
        }
        if (label < 0 || label >= static_cast<int>(sbu_class_names().size())) {
            throw ParseError(file.string() + ": action number out of range 1..8");
        }
        ManifestEntry e;
        e.id = fs::relative(take, root).generic_string();
        e.path = fs::relative(file, root).generic_string();
        e.label = label;
        e.group = pair.filename().string();
        auto seq = parse_sbu(file);
        seq.id = e.id;
        seq.label = e.label;
        seq.group = e.group;
        data.manifest.entries.push_back(std::move(e));
        data.sequences.push_back(std::move(seq));
    }
    data.manifest.validate();
    return data;
}

// ---- JSONL -------------------------------------------------------------------

std::vector<SkeletonSequence> parse_jsonl_text(std::string_view text,
                                               std::optional<JsonlShape> expected,
                                               std::string_view source) {
    std::vector<SkeletonSequence> out;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) -> ParseError {
        return ParseError(std::string(source) + ": line " + std::to_string(line_no) + ": " +
                          what);
    };
    while (!text.empty()) {
        const std::size_t nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            continue;
        }
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw fail(std::string("malformed JSON: ") + e.what());
        }
        try {
            const auto& frames = j.at("frames");
            if (!frames.is_array() || frames.size() < 2) {
                throw fail("'frames' must be an array of at least 2 frames");
            }
            const std::size_t persons = frames.at(0).size();
            const std::size_t joints = persons == 0 ? 0 : frames.at(0).at(0).size();
            if (persons == 0 || joints == 0) {
                throw fail("empty person or joint list");
            }
            if (expected && (expected->joints != joints || expected->persons != persons)) {
                throw fail("sequence has " + std::to_string(persons) + " person(s) x " +
                           std::to_string(joints) + " joints, manifest expects " +
                           std::to_string(expected->persons) + " x " +
                           std::to_string(expected->joints));
            }
            if (!out.empty() && (out.front().joints != joints || out.front().persons != persons)) {
                throw fail("inconsistent joint/person count across sequences");
            }
            SkeletonSequence seq(j.at("id").get<std::string>(), j.at("label").get<int>(),
                                 frames.size(), persons, joints);
            seq.group = j.value("group", std::string{});
            for (std::size_t f = 0; f < frames.size(); ++f) {
                const auto& frame = frames[f];
                if (frame.size() != persons) {
                    throw fail("frame " + std::to_string(f) + " has " +
                               std::to_string(frame.size()) + " persons, expected " +
                               std::to_string(persons));
                }
                for (std::size_t p = 0; p < persons; ++p) {
                    if (frame[p].size() != joints) {
                        throw fail("frame " + std::to_string(f) + " person " + std::to_string(p) +
                                   " has " + std::to_string(frame[p].size()) +
                                   " joints, expected " + std::to_string(joints));
                    }
                    for (std::size_t k = 0; k < joints; ++k) {
                        const auto& xyz = frame[p][k];
                        if (xyz.size() != 3) {
                            throw fail("joint coordinates must be [x, y, z]");
                        }
                        for (std::size_t d = 0; d < 3; ++d) {
                            seq.at(f, p, k, d) = xyz[d].get<double>();
                        }
                    }
                }
            }
            try {
                seq.validate();
            } catch (const ConfigError& e) {
                throw fail(e.what());
            }
            out.push_back(std::move(seq));
        } catch (const Json::exception& e) {
            throw fail(e.what());
        }
    }
    return out;
}

std::vector<SkeletonSequence> parse_jsonl(const std::filesystem::path& file,
                                          std::optional<JsonlShape> expected) {
    return parse_jsonl_text(read_text_file(file), expected, file.string());
}

std::string to_jsonl_line(const SkeletonSequence& seq) {
    Json j;
    j["id"] = seq.id;
    j["label"] = seq.label;
    if (!seq.group.empty()) {
        j["group"] = seq.group;
    }
    Json frames = Json::array();
    for (std::size_t f = 0; f < seq.frames; ++f) {
        Json frame = Json::array();
        for (std::size_t p = 0; p < seq.persons; ++p) {
            Json person = Json::array();
            for (std::size_t k = 0; k < seq.joints; ++k) {
                person.push_back({seq.at(f, p, k, 0), seq.at(f, p, k, 1), seq.at(f, p, k, 2)});
            }
            frame.push_back(std::move(person));
        }
        frames.push_back(std::move(frame));
    }
    j["frames"] = std::move(frames);
    return j.dump();
}

Dataset load_jsonl_dataset(const std::filesystem::path& jsonl,
                           const std::optional<std::filesystem::path>& manifest_path) {
    if (!std::filesystem::exists(jsonl)) {
        throw ConfigError("dataset file not found: " + jsonl.string());
    }
    Dataset data;
    std::optional<JsonlShape> expected;
    if (manifest_path) {
        data.manifest = manifest_from_json(read_json_file(*manifest_path));
        expected = JsonlShape{data.manifest.joints, data.manifest.persons};
    }
    auto sequences = parse_jsonl(jsonl, expected);
    if (!manifest_path) {
        int max_label = -1;
        for (const auto& s : sequences) {
            max_label = std::max(max_label, s.label);
            data.manifest.entries.push_back({s.id, {}, s.label, s.group});
        }
        for (int c = 0; c <= max_label; ++c) {
            data.manifest.class_names.push_back("class_" + std::to_string(c));
        }
        if (!sequences.empty()) {
            data.manifest.joints = sequences.front().joints;
            data.manifest.persons = sequences.front().persons;
        }
        data.manifest.validate();
        data.sequences = std::move(sequences);
        return data;
    }
    // Order sequences as listed in the manifest.
    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        by_id.emplace(sequences[i].id, i);
    }
    for (const auto& e : data.manifest.entries) {
        auto it = by_id.find(e.id);
        if (it == by_id.end()) {
            throw ConfigError("manifest entry '" + e.id + "' not found in " + jsonl.string());
        }
        SkeletonSequence seq = sequences[it->second];
        seq.label = e.label;
        seq.group = e.group;
        data.sequences.push_back(std::move(seq));
    }
    return data;
}

void save_jsonl_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::string text;
    for (const auto& seq : data.sequences) {
        text += to_jsonl_line(seq);
        text += '\n';
    }
    write_text_file(dir / "dataset.jsonl", text);
    write_json_file(dir / "manifest.json", manifest_to_json(data.manifest));
}

// ---- preprocessing -----------------------------------------------------------

SkeletonSequence resample(const SkeletonSequence& seq, std::size_t frames) {
    if (frames < 2) {
        throw ConfigError("resample: target frame count must be >= 2, got " +
                          std::to_string(frames));
    }
    if (seq.frames < 2) {
        throw ConfigError("resample: sequence '" + seq.id + "' has fewer than 2 frames");
    }
    if (seq.frames == frames) {
        return seq;
    }
    SkeletonSequence out = seq;
    out.frames = frames;
    const std::size_t per_frame = seq.persons * seq.joints * 3;
    out.coords.assign(frames * per_frame, 0.0);
    const std::size_t last = seq.frames - 1;
    for (std::size_t t = 0; t < frames; ++t) {
        // t*(F-1) is an exact integer, so both endpoints land on whole frames.
        const double pos = static_cast<double>(t * last) / static_cast<double>(frames - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - static_cast<double>(lo);
        const double* a = seq.coords.data() + std::min(lo, last) * per_frame;
        double* dst = out.coords.data() + t * per_frame;
        if (lo >= last || frac == 0.0) {
            std::copy(a, a + per_frame, dst);
            continue;
        }
        const double* b = a + per_frame;
        for (std::size_t i = 0; i < per_frame; ++i) {
            dst[i] = a[i] + frac * (b[i] - a[i]);
        }
    }
    return out;
}

SkeletonSequence random_crop(const SkeletonSequence& seq, double ratio, Rng& rng) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw ConfigError("random_crop: ratio must be in (0, 1]");
    }
    const auto length = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(seq.frames)));
    if (length < 2) {
        throw ConfigError("random_crop: crop of '" + seq.id + "' would keep " +
                          std::to_string(length) + " frame(s), at least 2 required");
    }
    if (length >= seq.frames) {
        return seq;
    }
    const auto start = static_cast<std::size_t>(rng.below(seq.frames - length + 1));
    const std::size_t per_frame = seq.persons * seq.joints * 3;
    SkeletonSequence out = seq;
    out.frames = length;
    out.coords.assign(seq.coords.begin() + static_cast<std::ptrdiff_t>(start * per_frame),
                      seq.coords.begin() + static_cast<std::ptrdiff_t>((start + length) * per_frame));
    return out;
}

Tensor compute_motion(const Tensor& position) {
    require_rank(position, 4, "compute_motion position");
    const std::size_t p = position.dim(0), c = position.dim(1), t = position.dim(2),
                      k = position.dim(3);
    if (t < 2) {
        throw ShapeError("compute_motion: need at least 2 frames, got shape " +
                         shape_to_string(position.shape()));
    }
    Tensor motion(position.shape());
    for (std::size_t pi = 0; pi < p; ++pi) {
        for (std::size_t ci = 0; ci < c; ++ci) {
            for (std::size_t ti = 0; ti + 1 < t; ++ti) {
                for (std::size_t ki = 0; ki < k; ++ki) {
                    motion.at(pi, ci, ti, ki) =
                        position.at(pi, ci, ti + 1, ki) - position.at(pi, ci, ti, ki);
                }
            }
        }
    }
    return motion;
}

ClipTensors encode_clip(const SkeletonSequence& seq, std::size_t frames, std::size_t joints,
                        const EncodeOptions& options) {
    if (seq.joints != joints) {
        throw ShapeError("encode_clip: sequence '" + seq.id + "' has " +
                         std::to_string(seq.joints) + " joints, configuration expects " +
                         std::to_string(joints));
    }
    const std::size_t persons = options.persons == 0 ? seq.persons : options.persons;
    if (seq.persons > persons) {
        throw ShapeError("encode_clip: sequence '" + seq.id + "' has " +
                         std::to_string(seq.persons) + " persons, configuration allows " +
                         std::to_string(persons));
    }
    const SkeletonSequence fixed = resample(seq, frames);
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    if (options.center) {
        origin = {fixed.at(0, 0, 0, 0), fixed.at(0, 0, 0, 1), fixed.at(0, 0, 0, 2)};
    }
    Tensor position({persons, 3, frames, joints});
    for (std::size_t p = 0; p < fixed.persons; ++p) {
        for (std::size_t d = 0; d < 3; ++d) {
            for (std::size_t t = 0; t < frames; ++t) {
                for (std::size_t k = 0; k < joints; ++k) {
                    position.at(p, d, t, k) = fixed.at(t, p, k, d) - origin[d];
                }
            }
        }
    }
    Tensor motion = compute_motion(position);
    return {std::move(position), std::move(motion)};
}

// ---- folds -------------------------------------------------------------------

namespace {

std::vector<FoldSplit> folds_from_assignment(const std::vector<std::size_t>& fold_of,
                                             std::size_t k) {
    std::vector<FoldSplit> folds(k);
    for (std::size_t f = 0; f < k; ++f) {
        folds[f].fold = f;
        for (std::size_t i = 0; i < fold_of.size(); ++i) {
            (fold_of[i] == f ? folds[f].test : folds[f].train).push_back(i);
        }
    }
    return folds;
}

}  // namespace

std::vector<FoldSplit> kfold_splits(const DatasetManifest& manifest, std::size_t k,
                                    std::uint64_t seed) {
    if (k < 2) {
        throw ConfigError("kfold_splits: k must be >= 2");
    }
    if (manifest.entries.empty()) {
        throw ConfigError("kfold_splits: manifest is empty");
    }
    Rng rng(derive_seed(seed, 0x6b666f6c64ULL));
    std::vector<std::size_t> fold_of(manifest.entries.size(), 0);

    if (manifest.has_groups()) {
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
            groups[manifest.entries[i].group].push_back(i);
        }
        if (k > groups.size()) {
            throw ConfigError("kfold_splits: k = " + std::to_string(k) + " exceeds the " +
                              std::to_string(groups.size()) + " distinct group tags");
        }
        std::vector<const std::vector<std::size_t>*> order;
        for (const auto& [name, members] : groups) {
            order.push_back(&members);
        }
        rng.shuffle(std::span(order));
        // Largest groups first onto the currently smallest fold; stable for ties.
        std::stable_sort(order.begin(), order.end(),
                         [](auto* a, auto* b) { return a->size() > b->size(); });
        std::vector<std::size_t> load(k, 0);
        for (std::size_t g = 0; g < order.size(); ++g) {
            std::size_t target = 0;
            if (g >= k) {
                target = static_cast<std::size_t>(
                    std::min_element(load.begin(), load.end()) - load.begin());
            } else {
                target = g;
            }
            for (auto i : *order[g]) {
                fold_of[i] = target;
            }
            load[target] += order[g]->size();
        }
        return folds_from_assignment(fold_of, k);
    }

    if (k > manifest.entries.size()) {
        throw ConfigError("kfold_splits: k = " + std::to_string(k) + " exceeds the " +
                          std::to_string(manifest.entries.size()) + " entries");
    }
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        by_label[manifest.entries[i].label].push_back(i);
    }
    std::size_t next = 0;
    for (auto& [label, members] : by_label) {
        rng.shuffle(std::span(members));
        for (auto i : members) {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    return folds_from_assignment(fold_of, k);
}

FoldSplit holdout_split(const DatasetManifest& manifest,
                        const std::vector<std::string>& test_groups) {
    if (test_groups.empty()) {
        throw ConfigError("holdout_split: no test groups given");
    }
    const std::set<std::string> tests(test_groups.begin(), test_groups.end());
    FoldSplit split;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        (tests.count(manifest.entries[i].group) ? split.test : split.train).push_back(i);
    }
    if (split.test.empty() || split.train.empty()) {
        throw ConfigError("holdout_split: test groups leave an empty train or test set");
    }
    return split;
}

}  // namespace dwnet
