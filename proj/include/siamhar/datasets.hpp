#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "tensor.hpp"

namespace siamhar {

enum class Split { train, validation, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw DataError("unknown split '" + s + "'");
}

struct DatasetDescriptor {
    std::string name;
    double rate_hz = 0.0;
    std::vector<std::string> channel_names;
    std::vector<std::string> class_names;
    std::string split_rule;
};

inline DatasetDescriptor describe_dataset(const std::string& name) {
    if (name == "dg") {
        return {"dg", 64.0,
                {"ankle_x", "ankle_y", "ankle_z", "thigh_x", "thigh_y", "thigh_z", "trunk_x", "trunk_y", "trunk_z"},
                {"no_freeze", "freeze"},
                "subject 9 validation, subject 2 test, others train"};
    }
    if (name == "wisdm") {
        return {"wisdm", 20.0, {"acc_x", "acc_y", "acc_z"},
                {"Walking", "Jogging", "Upstairs", "Downstairs", "Sitting", "Standing"},
                "seeded shuffle of subject ids, 70/10/20 train/validation/test"};
    }
    if (name == "sbhar") {
        return {"sbhar", 50.0, {"acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z"},
                {"WALKING", "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS", "SITTING", "STANDING", "LAYING"},
                "seeded shuffle of subject ids, 70/10/20 train/validation/test"};
    }
    throw DataError("unknown dataset '" + name + "' (expected dg, wisdm or sbhar)");
}

/// Subject → split. DG uses its fixed subjects; the others shuffle the sorted
/// subject ids with `seed` and cut 70/10/20.
inline std::map<int, Split> assign_splits(const std::string& dataset, const std::vector<int>& subjects,
                                          std::uint64_t seed) {
    std::set<int> uniq(subjects.begin(), subjects.end());
    std::map<int, Split> out;
    if (dataset == "dg") {
        for (int s : uniq) out[s] = s == 9 ? Split::validation : s == 2 ? Split::test : Split::train;
        return out;
    }
    std::vector<int> ids(uniq.begin(), uniq.end());
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t n = ids.size();
    const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))));
    for (std::size_t i = 0; i < n; ++i) {
        out[ids[i]] = i < n_train ? Split::train : i < n_train + n_val ? Split::validation : Split::test;
    }
    return out;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view tok, const std::string& where) {
    tok = trim(tok);
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        throw DataError(where + ": cannot parse number '" + std::string(tok) + "'");
    }
    return v;
}

inline long long parse_int(std::string_view tok, const std::string& where) {
    tok = trim(tok);
    long long v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
        throw DataError(where + ": cannot parse integer '" + std::string(tok) + "'");
    }
    return v;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline SensorStream build_stream(std::string id, int subject, double rate, const std::vector<std::vector<double>>& rows,
                                 std::vector<int> labels, std::vector<std::string> legend) {
    SensorStream s;
    s.id = std::move(id);
    s.subject = subject;
    s.rate_hz = rate;
    const std::size_t chans = rows.empty() ? 0 : rows.front().size();
    s.frames = Tensor(Shape{chans, rows.size()});
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t c = 0; c < chans; ++c) s.frames[c * rows.size() + t] = rows[t][c];
    s.labels = std::move(labels);
    s.legend = std::move(legend);
    s.boundary_centers = label_boundary_centers(s.labels);
    s.validate();
    return s;
}

inline std::ifstream open_input(const std::filesystem::path& p) {
    std::ifstream is(p);
    if (!is) throw DataError("cannot open '" + p.string() + "'");
    return is;
}

}  // namespace detail

/// Daphnet gait files SxxRyy.txt: time, 9 acceleration columns, annotation
/// (0 outside the experiment → U, 1 no freeze, 2 freeze). One stream per file.
inline std::vector<SensorStream> load_dg(const std::filesystem::path& dir) {
    const auto desc = describe_dataset("dg");
    std::vector<std::filesystem::path> files;
    const std::regex name_re(R"(S(\d+)R(\d+)\.txt)");
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && std::regex_match(e.path().filename().string(), name_re)) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("dg: no SxxRyy.txt files under '" + dir.string() + "'");
    std::vector<SensorStream> out;
    for (const auto& f : files) {
        std::smatch m;
        const std::string fname = f.filename().string();
        std::regex_match(fname, m, name_re);
        const int subject = std::stoi(m[1].str());
        auto is = detail::open_input(f);
        std::vector<std::vector<double>> rows;
        std::vector<int> labels;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (detail::trim(line).empty()) continue;
            const std::string where = f.string() + ":" + std::to_string(lineno);
            auto toks = detail::split_ws(line);
            if (toks.size() != 11) throw DataError(where + ": expected 11 columns, got " + std::to_string(toks.size()));
            std::vector<double> row;
            for (std::size_t c = 1; c <= 9; ++c) row.push_back(detail::parse_double(toks[c], where));
            const long long ann = detail::parse_int(toks[10], where);
            if (ann < 0 || ann > 2) throw DataError(where + ": unknown annotation " + std::to_string(ann));
            labels.push_back(ann == 0 ? kUnknown : static_cast<int>(ann - 1));
            rows.push_back(std::move(row));
        }
        if (rows.empty()) throw DataError(f.string() + ": no rows");
        out.push_back(detail::build_stream(fname.substr(0, fname.size() - 4), subject, desc.rate_hz, rows,
                                           std::move(labels), desc.class_names));
    }
    return out;
}

/// WISDM raw file: records "user,activity,timestamp,x,y,z;" (several may
/// share a line). Each maximal run of one user's consecutive records is a stream.
inline std::vector<SensorStream> load_wisdm(const std::filesystem::path& path) {
    const auto desc = describe_dataset("wisdm");
    std::filesystem::path file = path;
    if (std::filesystem::is_directory(path)) {
        file.clear();
        for (const auto& e : std::filesystem::recursive_directory_iterator(path)) {
            const std::string n = e.path().filename().string();
            if (e.is_regular_file() && n.find("raw") != std::string::npos && n.ends_with(".txt")) {
                file = e.path();
                break;
            }
        }
        if (file.empty()) throw DataError("wisdm: no *raw*.txt file under '" + path.string() + "'");
    }
    auto is = detail::open_input(file);
    std::vector<SensorStream> out;
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    int current_user = -1;
    std::map<int, int> chunks;
    auto flush = [&] {
        if (rows.empty()) return;
        const int k = chunks[current_user]++;
        out.push_back(detail::build_stream("user" + std::to_string(current_user) + "_" + std::to_string(k), current_user,
                                           desc.rate_hz, rows, std::move(labels), desc.class_names));
        rows.clear();
        labels.clear();
    };
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string where = file.string() + ":" + std::to_string(lineno);
        std::string_view rest(line);
        while (!detail::trim(rest).empty()) {
            const auto semi = rest.find(';');
            std::string_view rec = detail::trim(rest.substr(0, semi));
            rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
            if (rec.empty()) continue;
            std::vector<std::string_view> f;
            std::size_t start = 0;
            while (true) {
                const auto comma = rec.find(',', start);
                f.push_back(rec.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
                if (comma == std::string_view::npos) break;
                start = comma + 1;
            }
            if (f.size() != 6) throw DataError(where + ": expected 6 fields, got " + std::to_string(f.size()));
            const int user = static_cast<int>(detail::parse_int(f[0], where));
            const std::string act(detail::trim(f[1]));
            auto it = std::find(desc.class_names.begin(), desc.class_names.end(), act);
            if (it == desc.class_names.end()) throw DataError(where + ": unknown activity '" + act + "'");
            if (user != current_user) {
                flush();
                current_user = user;
            }
            rows.push_back({detail::parse_double(f[3], where), detail::parse_double(f[4], where),
                            detail::parse_double(f[5], where)});
            labels.push_back(static_cast<int>(it - desc.class_names.begin()));
        }
    }
    flush();
    if (out.empty()) throw DataError("wisdm: no records in '" + file.string() + "'");
    return out;
}

/// SBHAR raw release: acc_expXX_userYY.txt and gyro_expXX_userYY.txt (three
/// columns each) plus labels.txt rows "exp user activity start end" (1-based,
/// inclusive). Activities 1–6 are classes 0–5, 7–12 are transitions (T);
/// unlabeled frames are U. One stream per experiment.
inline std::vector<SensorStream> load_sbhar(const std::filesystem::path& dir) {
    const auto desc = describe_dataset("sbhar");
    std::filesystem::path labels_file;
    std::map<std::pair<int, int>, std::filesystem::path> acc, gyro;
    const std::regex re(R"((acc|gyro)_exp(\d+)_user(\d+)\.txt)");
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string n = e.path().filename().string();
        std::smatch m;
        if (n == "labels.txt") {
            labels_file = e.path();
        } else if (std::regex_match(n, m, re)) {
            (m[1] == "acc" ? acc : gyro)[{std::stoi(m[2].str()), std::stoi(m[3].str())}] = e.path();
        }
    }
    if (labels_file.empty()) throw DataError("sbhar: labels.txt not found under '" + dir.string() + "'");
    if (acc.empty()) throw DataError("sbhar: no acc_expXX_userYY.txt files under '" + dir.string() + "'");

    auto read3 = [](const std::filesystem::path& p) {
        auto is = detail::open_input(p);
        std::vector<std::vector<double>> rows;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (detail::trim(line).empty()) continue;
            const std::string where = p.string() + ":" + std::to_string(lineno);
            auto toks = detail::split_ws(line);
            if (toks.size() != 3) throw DataError(where + ": expected 3 columns, got " + std::to_string(toks.size()));
            rows.push_back({detail::parse_double(toks[0], where), detail::parse_double(toks[1], where),
                            detail::parse_double(toks[2], where)});
        }
        return rows;
    };

    struct Run {
        long long activity, start, end;
    };
    std::map<int, std::vector<Run>> runs;
    {
        auto is = detail::open_input(labels_file);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (detail::trim(line).empty()) continue;
            const std::string where = labels_file.string() + ":" + std::to_string(lineno);
            auto toks = detail::split_ws(line);
            if (toks.size() != 5) throw DataError(where + ": expected 5 columns, got " + std::to_string(toks.size()));
            const int exp = static_cast<int>(detail::parse_int(toks[0], where));
            Run r{detail::parse_int(toks[2], where), detail::parse_int(toks[3], where), detail::parse_int(toks[4], where)};
            if (r.activity < 1 || r.activity > 12) throw DataError(where + ": unknown activity " + std::to_string(r.activity));
            if (r.start < 1 || r.end < r.start) throw DataError(where + ": bad frame range");
            runs[exp].push_back(r);
        }
    }

    std::vector<SensorStream> out;
    for (const auto& [key, acc_path] : acc) {
        auto g = gyro.find(key);
        if (g == gyro.end()) throw DataError("sbhar: missing gyro file for " + acc_path.filename().string());
        auto a = read3(acc_path), y = read3(g->second);
        if (a.size() != y.size()) {
            throw DataError("sbhar: " + acc_path.filename().string() + " and " + g->second.filename().string() +
                            " differ in length");
        }
        std::vector<std::vector<double>> rows(a.size());
        for (std::size_t t = 0; t < a.size(); ++t) {
            rows[t] = a[t];
            rows[t].insert(rows[t].end(), y[t].begin(), y[t].end());
        }
        std::vector<int> labels(a.size(), kUnknown);
        for (const auto& r : runs[key.first]) {
            if (static_cast<std::size_t>(r.end) > a.size()) {
                throw DataError("sbhar: label run for experiment " + std::to_string(key.first) + " ends past the data");
            }
            const int code = r.activity <= 6 ? static_cast<int>(r.activity - 1) : kTransition;
            for (long long t = r.start - 1; t < r.end; ++t) labels[static_cast<std::size_t>(t)] = code;
        }
        char id[32];
        std::snprintf(id, sizeof id, "exp%02d_user%02d", key.first, key.second);
        out.push_back(detail::build_stream(id, key.second, desc.rate_hz, rows, std::move(labels), desc.class_names));
    }
    return out;
}

inline std::vector<SensorStream> load_dataset(const std::string& name, const std::filesystem::path& path) {
    if (name == "dg") return load_dg(path);
    if (name == "wisdm") return load_wisdm(path);
    if (name == "sbhar") return load_sbhar(path);
    describe_dataset(name);  // throws for unknown names
    return {};
}

}  // namespace siamhar
