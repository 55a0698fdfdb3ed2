// siamhar: prepare data, train the segmentation and recognition networks,
// detect boundaries, embed, cluster and evaluate. Every command reads and
// writes files in one run directory (--out).

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "siamhar/cache.hpp"
#include "siamhar/checkpoint.hpp"
#include "siamhar/clustering.hpp"
#include "siamhar/datasets.hpp"
#include "siamhar/evaluation.hpp"
#include "siamhar/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace siamhar;

namespace {

// ---------------------------------------------------------------------------
// Run configuration: flat JSON keys, every one with a default.

struct RunConfig {
    std::string dataset = "synthetic";  // synthetic | dg | wisdm | sbhar
    std::string data_path;

    std::size_t synth_streams = 12;
    std::size_t synth_segments = 4;
    std::size_t synth_min_segment = 200;
    std::size_t synth_max_segment = 300;
    std::size_t synth_channels = 3;
    double synth_rate_hz = 50.0;
    std::size_t synth_ramp = 16;
    double synth_noise = 0.05;

    std::size_t conv_channels = 64;
    std::size_t kernel_width = 3;
    std::size_t lstm_hidden = 128;
    std::size_t lstm_layers = 2;

    std::size_t history = 128;
    std::size_t future = 64;
    std::size_t stride = 4;
    double threshold = 0.5;
    double gg_alpha = 8.0;
    double gg_beta = 8.0;
    std::vector<std::size_t> head_hidden{128, 64};
    double near_fraction = 0.5;
    double near_span = 3.0;

    std::size_t seg_steps = 4000;
    std::size_t seg_batch = 32;
    double seg_lr = 2e-3;

    std::size_t rec_steps = 1000;
    std::size_t rec_batch = 16;
    std::size_t rec_pairs = 200;
    double rec_positive_fraction = 0.5;
    std::size_t rec_crop = 64;
    double rec_lr = 1e-3;
    double rec_target_mse = 0.02;

    std::size_t clusters = 0;        // 0: one per activity class, or the largest merge gap without a legend
    double cluster_threshold = 0.0;  // > 0 and clusters == 0: merge while d <= threshold
    bool truth_boundaries = false;   // slice at labeled boundaries instead of detected ones
    std::string eval_split = "test";

    std::uint64_t seed = 1;
};

#define SIAMHAR_CONFIG_FIELDS(X)                                                                                  \
    X(dataset) X(data_path) X(synth_streams) X(synth_segments) X(synth_min_segment) X(synth_max_segment)          \
    X(synth_channels) X(synth_rate_hz) X(synth_ramp) X(synth_noise) X(conv_channels) X(kernel_width)              \
    X(lstm_hidden) X(lstm_layers) X(history) X(future) X(stride) X(threshold) X(gg_alpha) X(gg_beta)               \
    X(head_hidden) X(near_fraction) X(near_span) X(seg_steps) X(seg_batch) X(seg_lr) X(rec_steps) X(rec_batch)    \
    X(rec_pairs) X(rec_positive_fraction) X(rec_crop) X(rec_lr) X(rec_target_mse) X(clusters)                     \
    X(cluster_threshold) X(truth_boundaries) X(eval_split) X(seed)

json to_json(const RunConfig& c) {
    json j;
#define X(name) j[#name] = c.name;
    SIAMHAR_CONFIG_FIELDS(X)
#undef X
    return j;
}

void apply_json(RunConfig& c, const json& j, const std::string& where) {
    if (!j.is_object()) throw DataError(where + ": config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        try {
#define X(name)                                      \
    if (key == #name) {                              \
        c.name = value.get<decltype(c.name)>();      \
        known = true;                                \
    }
            SIAMHAR_CONFIG_FIELDS(X)
#undef X
        } catch (const json::exception& e) {
            throw DataError(where + ": bad value for '" + key + "': " + e.what());
        }
        if (!known) throw DataError(where + ": unknown config key '" + key + "'");
    }
}

/// key=value from --set; the value is parsed as JSON, falling back to a string.
void apply_override(RunConfig& c, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw DataError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq), raw = kv.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    apply_json(c, json{{key, value}}, "--set");
}

BranchConfig branch_config(const RunConfig& c, std::size_t channels) {
    BranchConfig b;
    b.in_channels = channels;
    b.conv_channels = {c.conv_channels, c.conv_channels, c.conv_channels, c.conv_channels};
    b.kernel_width = c.kernel_width;
    b.lstm_hidden.assign(c.lstm_layers, c.lstm_hidden);
    b.validate();
    return b;
}

SegmentationConfig seg_config(const RunConfig& c) {
    SegmentationConfig s;
    s.history = c.history;
    s.future = c.future;
    s.stride = c.stride;
    s.threshold = c.threshold;
    s.gg_alpha = c.gg_alpha;
    s.gg_beta = c.gg_beta;
    s.head_hidden = c.head_hidden;
    s.near_fraction = c.near_fraction;
    s.near_span = c.near_span;
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Run directory helpers

struct Run {
    RunConfig cfg;
    fs::path dir;
    std::string command;

    fs::path path(const std::string& name) const { return dir / name; }

    fs::path require(const std::string& name, const std::string& produced_by) const {
        fs::path p = path(name);
        if (!fs::exists(p)) {
            throw DataError("missing artifact " + p.string() + " (run '" + produced_by + "' first)");
        }
        return p;
    }

    void write_config() const {
        json j = {{"command", command}, {"version", SIAMHAR_VERSION}, {"config", to_json(cfg)}};
        write_text(command + ".config.json", j.dump(2) + "\n");
    }

    void write_text(const std::string& name, const std::string& text) const {
        fs::path p = path(name);
        fs::create_directories(p.parent_path());
        std::ofstream os(p, std::ios::binary);
        os << text;
        if (!os) throw DataError("cannot write " + p.string());
    }

    std::mt19937_64 rng(std::uint64_t salt) const { return std::mt19937_64(cfg.seed * 1000003ULL + salt); }
};

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& s, const std::string& where) {
    double v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw DataError(where + ": cannot parse number '" + s + "'");
    }
    return v;
}

/// Rows of a CSV file with the expected header; fields split on commas.
std::vector<std::vector<std::string>> read_csv(const fs::path& p, const std::string& header_prefix) {
    std::ifstream is(p);
    if (!is) throw DataError("cannot open " + p.string());
    std::string line;
    if (!std::getline(is, line) || line.rfind(header_prefix, 0) != 0) {
        throw DataError(p.string() + ":1: expected header starting with '" + header_prefix + "'");
    }
    std::vector<std::vector<std::string>> rows;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) rows.push_back(split_csv(line));
    }
    return rows;
}

PreparedDataset load_prepared(const Run& run) {
    run.require("streams/manifest.json", "prepare");
    auto ds = read_cache(run.path("streams"));
    if (!ds.norm) throw DataError("stream cache has no normalization statistics");
    return ds;
}

std::vector<SensorStream> normalized_split(const PreparedDataset& ds, Split s) {
    std::vector<SensorStream> out;
    for (auto& st : ds.select(s)) out.push_back(normalize(st, *ds.norm));
    if (out.empty()) throw DataError(std::string("no streams in the ") + split_name(s) + " split");
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: parameters and buffers, with the model geometry and the
// normalization statistics in the metadata.

json norm_json(const NormStats& n) { return {{"mean", n.mean}, {"stddev", n.stddev}}; }

void save_model(const fs::path& p, const std::string& kind, const RunConfig& cfg, std::size_t channels,
                const NormStats& norm, ParameterList params, const ParameterList& buffers) {
    Checkpoint ck;
    ck.meta = json{{"kind", kind},
                   {"version", SIAMHAR_VERSION},
                   {"channels", channels},
                   {"config", to_json(cfg)},
                   {"norm", norm_json(norm)}}
                  .dump();
    params.insert(params.end(), buffers.begin(), buffers.end());
    ck.tensors = std::move(params);
    save_checkpoint(p.string(), ck);
}

struct LoadedMeta {
    RunConfig cfg;
    std::size_t channels = 0;
    NormStats norm;
    Checkpoint ckpt;
};

LoadedMeta load_meta(const fs::path& p, const std::string& kind) {
    LoadedMeta m;
    m.ckpt = load_checkpoint(p.string());
    json j = json::parse(m.ckpt.meta, nullptr, false);
    if (j.is_discarded() || j.value("kind", "") != kind) throw DataError(p.string() + ": not a " + kind + " checkpoint");
    apply_json(m.cfg, j.at("config"), p.string());
    m.channels = j.at("channels").get<std::size_t>();
    m.norm = {j.at("norm").at("mean").get<std::vector<double>>(), j.at("norm").at("stddev").get<std::vector<double>>()};
    return m;
}

SegmentationModel load_segmentation(const fs::path& p) {
    auto m = load_meta(p, "segmentation");
    Rng rng(0);
    auto model = SegmentationModel::make(branch_config(m.cfg, m.channels), seg_config(m.cfg), rng);
    auto params = model.parameters(), buffers = model.buffers();
    assign_parameters(m.ckpt, params);
    assign_parameters(m.ckpt, buffers);
    return model;
}

RecognitionModel load_recognition(const fs::path& p) {
    auto m = load_meta(p, "recognition");
    Rng rng(0);
    auto model = RecognitionModel::make(branch_config(m.cfg, m.channels), rng);
    auto params = model.parameters(), buffers = model.buffers();
    assign_parameters(m.ckpt, params);
    assign_parameters(m.ckpt, buffers);
    return model;
}

std::string loss_csv(const std::vector<LossPoint>& curve) {
    std::string s = "step,loss\n";
    for (const auto& p : curve) s += std::to_string(p.step) + "," + fmt_double(p.loss) + "\n";
    return s;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_prepare(const Run& run) {
    const auto& c = run.cfg;
    PreparedDataset ds;
    ds.dataset = c.dataset;
    if (c.dataset == "synthetic") {
        SynthCorpusSpec spec;
        spec.streams = c.synth_streams;
        spec.segments_per_stream = c.synth_segments;
        spec.min_segment = c.synth_min_segment;
        spec.max_segment = c.synth_max_segment;
        spec.channels = c.synth_channels;
        spec.rate_hz = c.synth_rate_hz;
        spec.ramp = c.synth_ramp;
        spec.noise_sigma = c.synth_noise;
        auto rng = run.rng(1);
        ds.streams = synth_corpus(spec, rng);
    } else {
        if (c.data_path.empty()) throw DataError("dataset '" + c.dataset + "' needs data_path");
        ds.streams = load_dataset(c.dataset, c.data_path);
    }
    ds.legend = ds.streams.front().legend;
    std::vector<int> subjects;
    for (const auto& s : ds.streams) subjects.push_back(s.subject);
    const auto splits = assign_splits(c.dataset, subjects, c.seed);
    std::vector<SensorStream> train;
    std::string split_rows = "stream_id,subject,split,frames\n";
    for (const auto& s : ds.streams) {
        ds.splits.push_back(splits.at(s.subject));
        if (ds.splits.back() == Split::train) train.push_back(s);
        split_rows += s.id + "," + std::to_string(s.subject) + "," + split_name(ds.splits.back()) + "," +
                      std::to_string(s.length()) + "\n";
    }
    if (train.empty()) throw DataError("the train split is empty");
    ds.norm = compute_norm_stats(train);
    write_cache(run.path("streams"), ds);
    run.write_text("splits.csv", split_rows);
    std::cout << "prepared " << ds.streams.size() << " streams (" << train.size() << " train) in "
              << run.path("streams").string() << "\n";
}

void cmd_train_seg(const Run& run) {
    auto ds = load_prepared(run);
    auto train = normalized_split(ds, Split::train);
    auto rng = run.rng(2);
    Rng mrng = run.rng(3);
    const std::size_t channels = train.front().channels();
    auto model = SegmentationModel::make(branch_config(run.cfg, channels), seg_config(run.cfg), mrng);
    SegTrainOptions o;
    o.steps = run.cfg.seg_steps;
    o.batch = run.cfg.seg_batch;
    o.learning_rate = run.cfg.seg_lr;
    auto curve = train_segmentation(model, train, o, rng);
    save_model(run.path("segmentation.ckpt"), "segmentation", run.cfg, channels, *ds.norm, model.parameters(),
               model.buffers());
    run.write_text("segmentation_loss.csv", loss_csv(curve));
    std::cout << "trained segmentation for " << curve.size() << " steps, final batch loss "
              << (curve.empty() ? 0.0 : curve.back().loss) << "\n";
}

void cmd_train_rec(const Run& run) {
    auto ds = load_prepared(run);
    auto train = normalized_split(ds, Split::train);
    auto rng = run.rng(4);
    Rng mrng = run.rng(5);
    const std::size_t channels = train.front().channels();
    auto model = RecognitionModel::make(branch_config(run.cfg, channels), mrng);
    const std::size_t crop = std::max(run.cfg.rec_crop, model.min_length());
    std::vector<Segment> segments;
    for (const auto& s : train) {
        auto r = truth_segments(s, crop);
        segments.insert(segments.end(), r.segments.begin(), r.segments.end());
    }
    RecTrainOptions o;
    o.max_steps = run.cfg.rec_steps;
    o.batch = run.cfg.rec_batch;
    o.pairs = run.cfg.rec_pairs;
    o.positive_fraction = run.cfg.rec_positive_fraction;
    o.crop_length = crop;
    o.learning_rate = run.cfg.rec_lr;
    o.target_mse = run.cfg.rec_target_mse;
    auto result = train_recognition(model, segments, o, rng);
    save_model(run.path("recognition.ckpt"), "recognition", run.cfg, channels, *ds.norm, model.parameters(),
               model.buffers());
    run.write_text("recognition_loss.csv", loss_csv(result.curve));
    std::cout << "trained recognition for " << result.steps << " steps, pair-pool MSE " << result.pool_mse << "\n";
}

Split eval_split(const RunConfig& c) { return parse_split(c.eval_split); }

void cmd_segment(const Run& run) {
    auto ds = load_prepared(run);
    auto model = load_segmentation(run.require("segmentation.ckpt", "train-seg"));
    auto streams = normalized_split(ds, eval_split(run.cfg));
    std::size_t total = 0;
    for (const auto& s : streams) {
        auto regions = detect_boundaries(model, s);
        total += regions.size();
        std::ostringstream os;
        write_boundaries_csv(os, regions);
        run.write_text("boundaries/" + s.id + ".csv", os.str());
    }
    std::cout << "detected " << total << " boundary regions in " << streams.size() << " streams\n";
}

std::vector<BoundaryRegion> read_boundaries(const fs::path& p) {
    std::vector<BoundaryRegion> out;
    std::size_t line = 1;
    for (const auto& row : read_csv(p, "start_frame,end_frame,peak_score")) {
        const std::string where = p.string() + ":" + std::to_string(++line);
        if (row.size() != 3) throw DataError(where + ": expected 3 fields");
        out.push_back({static_cast<std::size_t>(parse_number(row[0], where)),
                       static_cast<std::size_t>(parse_number(row[1], where)), parse_number(row[2], where)});
    }
    return out;
}

/// Boundary regions per evaluation stream: from the segment step, or the
/// labels when truth_boundaries is set.
std::vector<std::vector<BoundaryRegion>> stream_regions(const Run& run, const std::vector<SensorStream>& streams) {
    std::vector<std::vector<BoundaryRegion>> out;
    for (const auto& s : streams) {
        out.push_back(run.cfg.truth_boundaries ? truth_regions(s)
                                               : read_boundaries(run.require("boundaries/" + s.id + ".csv", "segment")));
    }
    return out;
}

void cmd_embed(const Run& run) {
    auto ds = load_prepared(run);
    auto model = load_recognition(run.require("recognition.ckpt", "train-rec"));
    auto streams = normalized_split(ds, eval_split(run.cfg));
    auto regions = stream_regions(run, streams);
    std::vector<Tensor> windows;
    std::vector<std::string> ids;
    std::string seg_rows = "segment_id,stream_id,start_frame,end_frame,true_label\n";
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < streams.size(); ++i) {
        const auto& s = streams[i];
        auto sl = slice_segments(s, regions[i], model.min_length());
        dropped += sl.dropped;
        for (std::size_t k = 0; k < sl.segments.size(); ++k) {
            const auto& seg = sl.segments[k];
            ids.push_back(s.id + ":" + std::to_string(k));
            windows.push_back(seg.window);
            seg_rows += ids.back() + "," + s.id + "," + std::to_string(seg.begin) + "," + std::to_string(seg.end - 1) +
                        "," + (seg.label >= 0 ? s.legend[static_cast<std::size_t>(seg.label)] : "") + "\n";
        }
    }
    auto embeddings = embed_segments(model, windows, ids);
    std::ostringstream os;
    write_embeddings_csv(os, embeddings);
    run.write_text("embeddings.csv", os.str());
    run.write_text("segments.csv", seg_rows);
    std::cout << "embedded " << embeddings.size() << " segments (" << dropped << " too short, dropped)\n";
}

std::vector<Embedding> read_embeddings(const fs::path& p) {
    std::vector<Embedding> out;
    std::size_t line = 1;
    for (const auto& row : read_csv(p, "segment_id")) {
        const std::string where = p.string() + ":" + std::to_string(++line);
        if (row.size() < 2) throw DataError(where + ": no embedding values");
        std::vector<double> v;
        for (std::size_t k = 1; k < row.size(); ++k) v.push_back(parse_number(row[k], where));
        const std::size_t d = v.size();
        out.push_back({Tensor(Shape{d}, std::move(v)), row[0]});
    }
    return out;
}

void cmd_cluster(const Run& run) {
    auto embeddings = read_embeddings(run.require("embeddings.csv", "embed"));
    if (embeddings.empty()) throw DataError("embeddings.csv holds no segments");
    ClusterAssignment a{{0}, 1, {}};
    if (embeddings.size() > 1) {
        StopRule stop = StopRule::largest_gap();
        if (run.cfg.clusters > 0) {
            stop = StopRule::clusters(std::min(run.cfg.clusters, embeddings.size()));
        } else if (run.cfg.cluster_threshold > 0) {
            stop = StopRule::distance(run.cfg.cluster_threshold);
        } else if (auto ds = load_prepared(run); !ds.legend.empty()) {
            stop = StopRule::clusters(std::min(ds.legend.size(), embeddings.size()));
        }
        a = single_linkage(pairwise_distances(embeddings), stop);
    }
    std::vector<std::string> ids;
    for (const auto& e : embeddings) ids.push_back(e.source_id);
    std::ostringstream os;
    write_assignments_csv(os, ids, a.labels);
    run.write_text("assignments.csv", os.str());
    std::cout << "clustered " << embeddings.size() << " segments into " << a.k << " clusters\n";
}

void cmd_evaluate(const Run& run) {
    const auto emb_path = run.require("embeddings.csv", "embed");
    const auto seg_path = run.require("segments.csv", "embed");
    const auto asg_path = run.require("assignments.csv", "cluster");
    auto ds = load_prepared(run);
    auto streams = normalized_split(ds, eval_split(run.cfg));
    auto regions = stream_regions(run, streams);

    EvaluationReport r;
    r.streams = streams.size();
    r.embeddings = read_embeddings(emb_path);
    std::map<std::string, int> cluster_of;
    std::set<int> distinct;
    std::size_t line = 1;
    for (const auto& row : read_csv(asg_path, "segment_id,cluster_id")) {
        const std::string where = asg_path.string() + ":" + std::to_string(++line);
        if (row.size() != 2) throw DataError(where + ": expected 2 fields");
        cluster_of[row[0]] = static_cast<int>(parse_number(row[1], where));
        distinct.insert(cluster_of[row[0]]);
    }
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < streams.size(); ++i) index[streams[i].id] = i;
    r.per_stream.resize(streams.size());
    for (std::size_t i = 0; i < streams.size(); ++i) r.per_stream[i].regions = regions[i];
    // score_assignments walks segments stream by stream.
    std::vector<std::vector<int>> clusters_by_stream(streams.size());
    line = 1;
    for (const auto& row : read_csv(seg_path, "segment_id,stream_id,start_frame,end_frame")) {
        const std::string where = seg_path.string() + ":" + std::to_string(++line);
        if (row.size() < 4) throw DataError(where + ": expected at least 4 fields");
        auto it = index.find(row[1]);
        if (it == index.end()) throw DataError(where + ": unknown stream '" + row[1] + "'");
        auto c = cluster_of.find(row[0]);
        if (c == cluster_of.end()) throw DataError(where + ": segment '" + row[0] + "' has no cluster assignment");
        const auto& s = streams[it->second];
        const auto b = static_cast<std::size_t>(parse_number(row[2], where));
        const auto e = static_cast<std::size_t>(parse_number(row[3], where)) + 1;
        if (b >= e || e > s.length()) throw DataError(where + ": segment outside its stream");
        r.per_stream[it->second].segments.push_back(make_segment(s, b, e));
        clusters_by_stream[it->second].push_back(c->second);
    }
    for (const auto& v : clusters_by_stream) r.segment_clusters.insert(r.segment_clusters.end(), v.begin(), v.end());
    for (const auto& ss : r.per_stream) {
        r.boundary_regions += ss.regions.size();
        r.segments += ss.segments.size();
    }
    r.clusters = distinct.size();
    score_assignments(streams, r);

    std::ostringstream report, confusion;
    const std::string rule = ds.dataset == "dg" ? describe_dataset("dg").split_rule
                                                : "seeded shuffle of subject ids, 70/10/20 train/validation/test";
    report << "# dataset " << ds.dataset << ", split " << run.cfg.eval_split << ", seed " << run.cfg.seed << "\n"
           << "# split rule: " << rule << "\n";
    write_report(report, r);
    write_confusion_csv(confusion, r.frame_pred, r.frame_truth, ds.legend);
    run.write_text("report.txt", report.str());
    run.write_text("confusion.csv", confusion.str());
    std::cout << report.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weakly supervised activity segmentation and recognition with siamese networks"};
    app.set_version_flag("--version", std::string(SIAMHAR_VERSION));
    app.require_subcommand(1);

    std::string config_path, out_dir = "run";
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;

    struct Command {
        const char* name;
        const char* help;
        void (*fn)(const Run&);
    };
    const Command commands[] = {
        {"prepare", "load or synthesize streams, split subjects, cache streams and normalization stats", cmd_prepare},
        {"train-seg", "train the boundary scoring network", cmd_train_seg},
        {"train-rec", "train the siamese recognition network on labeled segments", cmd_train_rec},
        {"segment", "detect boundary regions in the evaluation split", cmd_segment},
        {"embed", "slice the evaluation streams at boundaries and embed each segment", cmd_embed},
        {"cluster", "single-linkage clustering of the segment embeddings", cmd_cluster},
        {"evaluate", "score cluster assignments against ground truth", cmd_evaluate},
    };
    std::map<CLI::App*, const Command*> lookup;
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config_path, "JSON file with run settings")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "random seed (overrides the config file)");
        sub->add_option("--out", out_dir, "run directory for inputs and outputs")->capture_default_str();
        sub->add_option("--set", overrides, "override one config key, key=value (repeatable)");
        lookup[sub] = &c;
    }
    CLI11_PARSE(app, argc, argv);

    const Command* cmd = nullptr;
    for (auto* sub : app.get_subcommands()) cmd = lookup.at(sub);
    try {
        Run run;
        run.command = cmd->name;
        run.dir = out_dir;
        if (!config_path.empty()) {
            std::ifstream is(config_path);
            json j = json::parse(is, nullptr, false);
            if (j.is_discarded()) throw DataError(config_path + ": invalid JSON");
            apply_json(run.cfg, j, config_path);
        }
        for (const auto& kv : overrides) apply_override(run.cfg, kv);
        if (seed) run.cfg.seed = *seed;
        fs::create_directories(run.dir);
        run.write_config();
        cmd->fn(run);
    } catch (const std::exception& e) {
        std::cerr << "siamhar " << cmd->name << ": error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
