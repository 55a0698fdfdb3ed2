#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "data.hpp"
#include "datasets.hpp"
#include "errors.hpp"

// Prepared-stream cache: a directory holding manifest.json and data.bin.
// data.bin is a flat array of little-endian binary64 values; each stream
// owns [frames_offset, frames_offset + 8*C*T) in channel-major order and
// [labels_offset, labels_offset + 8*T) with the integer label codes.

namespace siamhar {

struct PreparedDataset {
    std::string dataset;
    std::vector<std::string> legend;
    std::vector<SensorStream> streams;
    std::vector<Split> splits;  // parallel to streams
    std::optional<NormStats> norm;

    std::vector<SensorStream> select(Split s) const {
        std::vector<SensorStream> out;
        for (std::size_t i = 0; i < streams.size(); ++i)
            if (splits[i] == s) out.push_back(streams[i]);
        return out;
    }
};

inline constexpr int kCacheVersion = 1;

inline void write_cache(const std::filesystem::path& dir, const PreparedDataset& ds) {
    if (ds.splits.size() != ds.streams.size()) throw ContractError("write_cache: one split per stream required");
    std::filesystem::create_directories(dir);
    std::string payload;
    nlohmann::json streams = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.streams.size(); ++i) {
        const auto& s = ds.streams[i];
        s.validate();
        const std::size_t frames_offset = payload.size();
        for (double v : s.frames.data()) detail::put_le_double(payload, v);
        const std::size_t labels_offset = payload.size();
        for (int l : s.labels) detail::put_le_double(payload, static_cast<double>(l));
        streams.push_back({{"id", s.id},
                           {"subject", s.subject},
                           {"split", split_name(ds.splits[i])},
                           {"rate_hz", s.rate_hz},
                           {"channels", s.channels()},
                           {"length", s.length()},
                           {"frames_offset", frames_offset},
                           {"labels_offset", labels_offset},
                           {"boundary_centers", s.boundary_centers}});
    }
    nlohmann::json m = {{"format", "siamhar-streams"},
                        {"version", kCacheVersion},
                        {"dataset", ds.dataset},
                        {"legend", ds.legend},
                        {"data_bytes", payload.size()},
                        {"streams", streams}};
    if (ds.norm) m["norm"] = {{"mean", ds.norm->mean}, {"stddev", ds.norm->stddev}};

    std::ofstream bin(dir / "data.bin", std::ios::binary);
    if (!bin) throw DataError("cannot write '" + (dir / "data.bin").string() + "'");
    bin.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    std::ofstream man(dir / "manifest.json");
    if (!man) throw DataError("cannot write '" + (dir / "manifest.json").string() + "'");
    man << m.dump(2) << "\n";
    if (!bin || !man) throw DataError("write_cache: write failed in '" + dir.string() + "'");
}

inline PreparedDataset read_cache(const std::filesystem::path& dir) {
    const auto man_path = dir / "manifest.json", bin_path = dir / "data.bin";
    std::ifstream man(man_path);
    if (!man) throw DataError("missing stream cache manifest '" + man_path.string() + "'");
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(man);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(man_path.string() + ": " + e.what());
    }
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataError("missing stream cache data '" + bin_path.string() + "'");
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

    PreparedDataset ds;
    try {
        if (m.at("format") != "siamhar-streams") throw DataError(man_path.string() + ": not a stream cache");
        if (m.at("version").get<int>() != kCacheVersion) {
            throw DataError(man_path.string() + ": unsupported cache version " + m.at("version").dump());
        }
        if (m.at("data_bytes").get<std::size_t>() != bytes.size()) {
            throw DataError(bin_path.string() + ": size does not match manifest");
        }
        ds.dataset = m.at("dataset").get<std::string>();
        ds.legend = m.at("legend").get<std::vector<std::string>>();
        if (m.contains("norm")) {
            ds.norm = NormStats{m["norm"].at("mean").get<std::vector<double>>(),
                                m["norm"].at("stddev").get<std::vector<double>>()};
        }
        for (const auto& js : m.at("streams")) {
            SensorStream s;
            s.id = js.at("id").get<std::string>();
            s.subject = js.at("subject").get<int>();
            s.rate_hz = js.at("rate_hz").get<double>();
            const auto c = js.at("channels").get<std::size_t>(), t = js.at("length").get<std::size_t>();
            const auto fo = js.at("frames_offset").get<std::size_t>(), lo = js.at("labels_offset").get<std::size_t>();
            if (fo + 8 * c * t > bytes.size() || lo + 8 * t > bytes.size()) {
                throw DataError(man_path.string() + ": stream " + s.id + " extends past data.bin");
            }
            std::vector<double> values(c * t);
            for (std::size_t k = 0; k < values.size(); ++k) values[k] = detail::get_le_double(bytes.data() + fo + 8 * k);
            s.frames = Tensor(Shape{c, t}, std::move(values));
            s.labels.resize(t);
            for (std::size_t k = 0; k < t; ++k)
                s.labels[k] = static_cast<int>(detail::get_le_double(bytes.data() + lo + 8 * k));
            s.legend = ds.legend;
            s.boundary_centers = js.at("boundary_centers").get<std::vector<double>>();
            s.validate();
            ds.splits.push_back(parse_split(js.at("split").get<std::string>()));
            ds.streams.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(man_path.string() + ": " + e.what());
    }
    return ds;
}

}  // namespace siamhar
