#pragma once
/// gfld-1 field files (JSON sidecar + raw little-endian float64 payload), JSON and CSV writers.

#include "cmlab/field.hpp"

#include <json.hpp>

#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cmlab {

using json = nlohmann::ordered_json;

namespace fs = std::filesystem;

// "<dir>/name.json" + "<dir>/name.bin" from a path with or without the .json suffix.
inline std::pair<fs::path, fs::path> field_paths(const fs::path& p) {
    fs::path base = p;
    if (base.extension() == ".json" || base.extension() == ".bin") base.replace_extension();
    fs::path js = base, bin = base;
    js += ".json";
    bin += ".bin";
    return {js, bin};
}

inline void write_field(const GridField& f, const fs::path& path) {
    static_assert(std::endian::native == std::endian::little, "payload is written in host byte order");
    f.validate();
    auto [js, bin] = field_paths(path);
    if (js.has_parent_path()) fs::create_directories(js.parent_path());
    json j;
    j["format"] = "gfld-1";
    j["m"] = f.m;
    j["n"] = f.n;
    j["dims"] = f.dims;
    j["origin"] = f.origin;
    j["spacing"] = f.h;
    if (!f.mask.empty()) {
        std::vector<int> mk(f.mask.begin(), f.mask.end());
        j["mask"] = mk;
    }
    j["payload"] = bin.filename().string();
    std::ofstream(js) << j.dump(2) << "\n";
    std::ofstream out(bin, std::ios::binary);
    out.write(reinterpret_cast<const char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    if (!out) throw ConfigError("cannot write " + bin.string());
}

inline GridField read_field(const fs::path& path) {
    auto [js, bin] = field_paths(path);
    std::ifstream in(js);
    if (!in) throw ConfigError("cannot open field file " + js.string());
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("malformed field sidecar " + js.string() + ": " + e.what());
    }
    if (j.value("format", "") != "gfld-1") throw ConfigError("not a gfld-1 sidecar: " + js.string());
    GridField f;
    try {
        f.m = j.at("m").get<int>();
        f.n = j.at("n").get<int>();
        f.dims = j.at("dims").get<std::vector<int>>();
        f.origin = j.at("origin").get<std::vector<double>>();
        f.h = j.at("spacing").get<double>();
        if (j.contains("mask")) {
            auto mk = j.at("mask").get<std::vector<int>>();
            f.mask.assign(mk.begin(), mk.end());
        }
        if (j.contains("payload")) bin = js.parent_path() / j.at("payload").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError("bad field sidecar " + js.string() + ": " + e.what());
    }
    if (static_cast<int>(f.dims.size()) != f.m) throw ConfigError("dims length differs from m in " + js.string());
    f.check_shape();
    f.values.resize(f.size() * static_cast<std::size_t>(f.n));
    std::ifstream b(bin, std::ios::binary | std::ios::ate);
    if (!b) throw ConfigError("cannot open field payload " + bin.string());
    auto bytes = static_cast<std::size_t>(b.tellg());
    if (bytes != f.values.size() * sizeof(double)) throw ConfigError("payload size mismatch in " + bin.string());
    b.seekg(0);
    b.read(reinterpret_cast<char*>(f.values.data()), static_cast<std::streamsize>(bytes));
    f.validate();
    return f;
}

inline void write_json(const json& j, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    if (!out) throw ConfigError("cannot write " + path.string());
}

// Minimal CSV table with full-precision numbers.
struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }

    std::string str() const {
        std::ostringstream s;
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t i = 0; i < r.size(); ++i) s << (i ? "," : "") << r[i];
            s << "\n";
        };
        line(header);
        for (auto& r : rows) line(r);
        return s.str();
    }

    void write(const fs::path& path) const {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        std::ofstream out(path);
        out << str();
        if (!out) throw ConfigError("cannot write " + path.string());
    }
};

inline std::string num(double v) { return fmt_double(v); }
inline std::string num(int v) { return std::to_string(v); }
inline std::string num(std::size_t v) { return std::to_string(v); }

}  // namespace cmlab
