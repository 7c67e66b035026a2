#pragma once

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "unmix/mixing.hpp"
#include "unmix/network.hpp"
#include "unmix/training.hpp"

namespace unmix {

static_assert(std::endian::native == std::endian::little,
              "file payloads are little-endian; big-endian hosts are unsupported");

namespace io_detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);  // round-trips f64 exactly
    return buf;
}

inline void write_raw_f64(std::ostream& os, const std::vector<double>& values) {
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
}

inline void write_raw_f32(std::ostream& os, const std::vector<double>& values) {
    std::vector<float> tmp(values.begin(), values.end());
    os.write(reinterpret_cast<const char*>(tmp.data()),
             static_cast<std::streamsize>(tmp.size() * sizeof(float)));
}

/// Reads a JSON header terminated by '\n' + '\0'; returns the parsed header
/// and the payload offset.
inline std::pair<nlohmann::json, std::size_t> read_json_header(const std::vector<char>& bytes,
                                                               const std::string& what) {
    constexpr std::size_t kMaxHeader = 1 << 24;
    const std::size_t limit = std::min(bytes.size(), kMaxHeader);
    std::size_t nul = 0;
    bool found = false;
    for (std::size_t i = 0; i < limit; ++i)
        if (bytes[i] == '\0') {
            nul = i;
            found = true;
            break;
        }
    if (!found) throw FormatError(what + ": no header terminator within the first " +
                                  std::to_string(limit) + " bytes");
    if (nul == 0 || bytes[nul - 1] != '\n')
        throw FormatError(what + ": header must end with newline before NUL at offset " +
                          std::to_string(nul));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(std::string(bytes.data(), nul - 1));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(what + ": header is not valid JSON: " + e.what());
    }
    return {j, nul + 1};
}

inline std::vector<char> slurp(const std::filesystem::path& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(what + ": cannot open " + path.string());
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// HSIC cube container
// ---------------------------------------------------------------------------

inline void write_hsic(const HsiCube& cube, const std::filesystem::path& path,
                       const std::string& dtype = "f64") {
    if (dtype != "f64" && dtype != "f32") throw FormatError("hsic: dtype must be f64 or f32");
    nlohmann::json header;
    header["magic"] = "HSIC1";
    header["B"] = cube.bands;
    header["H"] = cube.height;
    header["W"] = cube.width;
    header["dtype"] = dtype;
    if (!cube.wavelengths.empty()) header["wavelengths"] = cube.wavelengths;
    if (!cube.band_names.empty()) header["band_names"] = cube.band_names;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("hsic: cannot open " + path.string() + " for writing");
    out << header.dump() << '\n' << '\0';
    if (dtype == "f64")
        io_detail::write_raw_f64(out, cube.data);
    else
        io_detail::write_raw_f32(out, cube.data);
    if (!out) throw FormatError("hsic: write failed for " + path.string());
}

inline HsiCube read_hsic(const std::filesystem::path& path) {
    const auto bytes = io_detail::slurp(path, "hsic");
    auto [header, offset] = io_detail::read_json_header(bytes, "hsic");
    if (!header.contains("magic") || header["magic"] != "HSIC1")
        throw FormatError("hsic: bad magic in " + path.string() + " (expected \"HSIC1\")");
    for (const char* key : {"B", "H", "W", "dtype"})
        if (!header.contains(key)) throw FormatError(std::string("hsic: header missing \"") + key + "\"");

    const std::int64_t b = header["B"], h = header["H"], w = header["W"];
    const std::string dtype = header["dtype"];
    if (b < 1 || h < 1 || w < 1) throw FormatError("hsic: non-positive extents in header");
    if (dtype != "f64" && dtype != "f32") throw FormatError("hsic: unknown dtype \"" + dtype + "\"");

    const std::size_t elem = dtype == "f64" ? sizeof(double) : sizeof(float);
    const std::size_t expected = static_cast<std::size_t>(b * h * w) * elem;
    const std::size_t actual = bytes.size() - offset;
    if (actual != expected)
        throw FormatError("hsic: payload at offset " + std::to_string(offset) + " should be " +
                          std::to_string(expected) + " bytes, file has " + std::to_string(actual));

    HsiCube cube(b, h, w);
    if (dtype == "f64") {
        std::memcpy(cube.data.data(), bytes.data() + offset, expected);
    } else {
        std::vector<float> tmp(static_cast<std::size_t>(b * h * w));
        std::memcpy(tmp.data(), bytes.data() + offset, expected);
        for (std::size_t i = 0; i < tmp.size(); ++i) cube.data[i] = static_cast<double>(tmp[i]);
    }
    if (header.contains("wavelengths")) cube.wavelengths = header["wavelengths"].get<std::vector<double>>();
    if (header.contains("band_names")) cube.band_names = header["band_names"].get<std::vector<std::string>>();
    return cube;
}

/// Abundance stacks travel as HSIC files with B = R and the names as band names.
inline void write_abundance_hsic(const AbundanceCube& a, const std::vector<std::string>& names,
                                 const std::filesystem::path& path) {
    HsiCube cube(a.count, a.height, a.width);
    cube.data = a.data;
    cube.band_names = names;
    write_hsic(cube, path);
}

inline AbundanceCube read_abundance_hsic(const std::filesystem::path& path) {
    const HsiCube cube = read_hsic(path);
    AbundanceCube a(cube.bands, cube.height, cube.width);
    a.data = cube.data;
    return a;
}

// ---------------------------------------------------------------------------
// PGM maps
// ---------------------------------------------------------------------------

/// One binary PGM (P5, maxval 255) per endmember; pixel = round(255*clamp(a,0,1)),
/// round half up. Returns the written paths.
inline std::vector<std::filesystem::path> export_abundance_pgm(
    const AbundanceCube& a, const std::filesystem::path& dir,
    const std::vector<std::string>& names = {}) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    const std::int64_t n = a.pixels();
    for (std::int64_t r = 0; r < a.count; ++r) {
        const std::string name = (r < static_cast<std::int64_t>(names.size()) &&
                                  !names[static_cast<std::size_t>(r)].empty())
                                     ? names[static_cast<std::size_t>(r)]
                                     : "em" + std::to_string(r + 1);
        const auto path = dir / ("abundance_" + std::to_string(r + 1) + "_" + name + ".pgm");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw FormatError("pgm: cannot open " + path.string() + " for writing");
        out << "P5\n" << a.width << " " << a.height << "\n255\n";
        std::vector<unsigned char> row(static_cast<std::size_t>(a.width));
        for (std::int64_t y = 0; y < a.height; ++y) {
            for (std::int64_t x = 0; x < a.width; ++x) {
                const double v = std::min(1.0, std::max(0.0, a.data[static_cast<std::size_t>(r * n + y * a.width + x)]));
                row[static_cast<std::size_t>(x)] = static_cast<unsigned char>(std::floor(255.0 * v + 0.5));
            }
            out.write(reinterpret_cast<const char*>(row.data()), a.width);
        }
        written.push_back(path);
    }
    return written;
}

struct PgmImage {
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::vector<unsigned char> pixels;
};

inline PgmImage read_pgm(const std::filesystem::path& path) {
    const auto bytes = io_detail::slurp(path, "pgm");
    PgmImage img;
    std::int64_t maxval = 0;
    int field = 0;
    std::size_t i = 0;
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        throw FormatError("pgm: bad magic in " + path.string());
    i = 2;
    std::string tok;
    while (field < 3 && i < bytes.size()) {
        const char c = bytes[i++];
        if (c == ' ' || c == '\n' || c == '\t' || c == '\r') {
            if (!tok.empty()) {
                const std::int64_t v = std::stoll(tok);
                if (field == 0) img.width = v;
                if (field == 1) img.height = v;
                if (field == 2) maxval = v;
                ++field;
                tok.clear();
            }
        } else {
            tok += c;
        }
    }
    if (field != 3 || maxval != 255) throw FormatError("pgm: unsupported header in " + path.string());
    const std::size_t expected = static_cast<std::size_t>(img.width * img.height);
    if (bytes.size() - i != expected)
        throw FormatError("pgm: payload should be " + std::to_string(expected) + " bytes at offset " +
                          std::to_string(i) + ", file has " + std::to_string(bytes.size() - i));
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(i), bytes.end());
    return img;
}

// ---------------------------------------------------------------------------
// Endmember CSV
// ---------------------------------------------------------------------------

/// Header row `wavelength,<name1>,...`; one row per band. Missing wavelengths
/// fall back to the band index. Values are written so they re-parse exactly.
inline void write_endmembers_csv(const EndmemberMatrix& em, const std::vector<double>& wavelengths,
                                 const std::filesystem::path& path) {
    if (!wavelengths.empty() && static_cast<std::int64_t>(wavelengths.size()) != em.bands())
        throw DimensionError("endmember csv: wavelength count does not match band count");
    std::ofstream out(path);
    if (!out) throw FormatError("endmember csv: cannot open " + path.string() + " for writing");
    out << "wavelength";
    for (std::int64_t r = 0; r < em.count(); ++r) out << "," << em.name_of(r);
    out << "\n";
    for (std::int64_t b = 0; b < em.bands(); ++b) {
        out << (wavelengths.empty() ? io_detail::fmt_double(static_cast<double>(b))
                                    : io_detail::fmt_double(wavelengths[static_cast<std::size_t>(b)]));
        for (std::int64_t r = 0; r < em.count(); ++r) out << "," << io_detail::fmt_double(em.E(b, r));
        out << "\n";
    }
}

struct EndmemberCsv {
    EndmemberMatrix endmembers;
    std::vector<double> wavelengths;
};

inline EndmemberCsv read_endmembers_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("endmember csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("endmember csv: empty file " + path.string());
    std::vector<std::string> names;
    {
        std::size_t pos = 0;
        bool first = true;
        while (pos <= line.size()) {
            const std::size_t comma = line.find(',', pos);
            const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            if (!first) names.push_back(cell);
            first = false;
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    if (names.empty()) throw FormatError("endmember csv: header has no endmember columns");

    std::vector<double> wavelengths;
    std::vector<std::vector<double>> rows;
    std::int64_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> cells;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            const std::size_t comma = line.find(',', pos);
            const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            try {
                cells.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw FormatError("endmember csv: bad number \"" + cell + "\" at line " +
                                  std::to_string(lineno));
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (cells.size() != names.size() + 1)
            throw FormatError("endmember csv: line " + std::to_string(lineno) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(names.size() + 1));
        wavelengths.push_back(cells[0]);
        rows.push_back(std::vector<double>(cells.begin() + 1, cells.end()));
    }
    if (rows.empty()) throw FormatError("endmember csv: no band rows in " + path.string());

    EndmemberCsv result;
    result.endmembers.E.resize(static_cast<std::int64_t>(rows.size()),
                               static_cast<std::int64_t>(names.size()));
    for (std::size_t b = 0; b < rows.size(); ++b)
        for (std::size_t r = 0; r < names.size(); ++r)
            result.endmembers.E(static_cast<std::int64_t>(b), static_cast<std::int64_t>(r)) = rows[b][r];
    result.endmembers.names = std::move(names);
    result.wavelengths = std::move(wavelengths);
    return result;
}

// ---------------------------------------------------------------------------
// Training history CSV
// ---------------------------------------------------------------------------

inline void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("history csv: cannot open " + path.string() + " for writing");
    out << "epoch,lr,loss,L_RE,L_SAD\n";
    for (std::size_t e = 0; e < history.total.size(); ++e)
        out << (e + 1) << "," << io_detail::fmt_double(history.lr[e]) << ","
            << io_detail::fmt_double(history.total[e]) << "," << io_detail::fmt_double(history.re[e])
            << "," << io_detail::fmt_double(history.sad[e]) << "\n";
}

// ---------------------------------------------------------------------------
// Parameter checkpoints
// ---------------------------------------------------------------------------

namespace io_detail {

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
    return nlohmann::json{{"B", cfg.B},
                          {"H", cfg.H},
                          {"W", cfg.W},
                          {"R", cfg.R},
                          {"C", cfg.C},
                          {"p", cfg.p},
                          {"h_n", cfg.h_n},
                          {"n_encoders", cfg.n_encoders},
                          {"mlp_ratio", cfg.mlp_ratio},
                          {"dropout_rate", cfg.dropout_rate},
                          {"leaky_slope", cfg.leaky_slope},
                          {"bn_momentum", cfg.bn_momentum},
                          {"bn_eps", cfg.bn_eps},
                          {"ln_eps", cfg.ln_eps}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.B = j.at("B");
    cfg.H = j.at("H");
    cfg.W = j.at("W");
    cfg.R = j.at("R");
    cfg.C = j.at("C");
    cfg.p = j.at("p");
    cfg.h_n = j.at("h_n");
    cfg.n_encoders = j.at("n_encoders");
    cfg.mlp_ratio = j.at("mlp_ratio");
    cfg.dropout_rate = j.at("dropout_rate");
    cfg.leaky_slope = j.at("leaky_slope");
    cfg.bn_momentum = j.at("bn_momentum");
    cfg.bn_eps = j.at("bn_eps");
    cfg.ln_eps = j.at("ln_eps");
    return cfg;
}

struct NamedArray {
    std::string name;
    Shape shape;
    const std::vector<double>* values;
};

inline std::vector<NamedArray> checkpoint_arrays(ModelParams& mp) {
    std::vector<NamedArray> arrays;
    for (auto& p : mp.parameters()) arrays.push_back({p.name, p.tensor.shape(), &p.tensor.data()});
    auto bn_stats = [&arrays](const std::string& prefix, BatchNormState& bn) {
        arrays.push_back({prefix + ".bn_mean", {bn.channels()}, &bn.running_mean});
        arrays.push_back({prefix + ".bn_var", {bn.channels()}, &bn.running_var});
    };
    bn_stats("encoder.layer1", mp.enc1.bn);
    bn_stats("encoder.layer2", mp.enc2.bn);
    bn_stats("encoder.layer3", mp.enc3.bn);
    return arrays;
}

}  // namespace io_detail

/// Checkpoint container: "UMCK1" JSON header (config + array directory,
/// newline + NUL terminated) followed by the named float64 payloads in
/// directory order, little-endian. Bit-exact round-trip.
inline void save_checkpoint(ModelParams& mp, const ModelConfig& cfg,
                            const std::filesystem::path& path) {
    auto arrays = io_detail::checkpoint_arrays(mp);
    nlohmann::json header;
    header["magic"] = "UMCK1";
    header["config"] = io_detail::config_to_json(cfg);
    auto& dir = header["arrays"] = nlohmann::json::array();
    for (const auto& a : arrays) dir.push_back({{"name", a.name}, {"shape", a.shape}});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("checkpoint: cannot open " + path.string() + " for writing");
    out << header.dump() << '\n' << '\0';
    for (const auto& a : arrays) io_detail::write_raw_f64(out, *a.values);
    if (!out) throw FormatError("checkpoint: write failed for " + path.string());
}

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = io_detail::slurp(path, "checkpoint");
    auto [header, offset] = io_detail::read_json_header(bytes, "checkpoint");
    if (!header.contains("magic") || header["magic"] != "UMCK1")
        throw FormatError("checkpoint: bad magic in " + path.string());
    Checkpoint ck;
    ck.config = io_detail::config_from_json(header.at("config"));

    RngStream dummy(0);
    ck.params = init_params(ck.config, Eigen::MatrixXd::Zero(ck.config.B, ck.config.R), dummy);
    auto arrays = io_detail::checkpoint_arrays(ck.params);

    const auto& dir = header.at("arrays");
    if (dir.size() != arrays.size())
        throw FormatError("checkpoint: directory lists " + std::to_string(dir.size()) +
                          " arrays, expected " + std::to_string(arrays.size()));
    std::size_t cursor = offset;
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        const std::string name = dir[i].at("name");
        const Shape shape = dir[i].at("shape").get<Shape>();
        if (name != arrays[i].name || shape != arrays[i].shape)
            throw FormatError("checkpoint: array " + std::to_string(i) + " is \"" + name +
                              "\" with shape " + shape_str(shape) + ", expected \"" + arrays[i].name +
                              "\" " + shape_str(arrays[i].shape));
        auto* dst = const_cast<std::vector<double>*>(arrays[i].values);
        const std::size_t nbytes = dst->size() * sizeof(double);
        if (cursor + nbytes > bytes.size())
            throw FormatError("checkpoint: payload truncated at offset " + std::to_string(cursor) +
                              " reading \"" + name + "\" (" + std::to_string(nbytes) + " bytes needed, " +
                              std::to_string(bytes.size() - cursor) + " available)");
        std::memcpy(dst->data(), bytes.data() + cursor, nbytes);
        cursor += nbytes;
    }
    if (cursor != bytes.size())
        throw FormatError("checkpoint: " + std::to_string(bytes.size() - cursor) +
                          " trailing bytes after payload at offset " + std::to_string(cursor));
    return ck;
}

// ---------------------------------------------------------------------------
// Run records
// ---------------------------------------------------------------------------

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("json: cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("json: cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("json: " + path.string() + " is not valid JSON: " + e.what());
    }
}

}  // namespace unmix
