#pragma once

// Snapshot recorders and plain-text number formatting.
//
// CSV layout (one row per particle per snapshot):
//   t[time],particle_id[index],x1[length],...,xd[length],k_abs[length]
//
// Binary layout: one line of JSON header terminated by '\n', then for each
// snapshot a block of
//   float64 t, uint64 n, n * (d + 1) float64 (x1..xd, k_abs)
// all little-endian.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "engine.hpp"
#include "errors.hpp"

namespace rmv {

// Round-trip exact, locale independent.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_header_positions(std::size_t dim) {
    std::string h = "t[time],particle_id[index]";
    for (std::size_t k = 0; k < dim; ++k) h += ",x" + std::to_string(k + 1) + "[length]";
    h += ",k_abs[length]";
    return h;
}

class CsvSnapshotWriter : public Recorder {
public:
    explicit CsvSnapshotWriter(std::ostream& os) : os_(os) {}

    void record(const ParticleCloud& c) override {
        if (!header_written_) {
            os_ << csv_header_positions(c.dim) << '\n';
            header_written_ = true;
        }
        const std::string t = fmt_double(c.time);
        for (std::size_t i = 0; i < c.n; ++i) {
            os_ << t << ',' << i;
            for (std::size_t k = 0; k < c.dim; ++k) os_ << ',' << fmt_double(c.positions[i * c.dim + k]);
            os_ << ',' << fmt_double(c.local_time_magnitude[i]) << '\n';
        }
    }

private:
    std::ostream& os_;
    bool header_written_ = false;
};

class BinarySnapshotWriter : public Recorder {
public:
    BinarySnapshotWriter(std::ostream& os, nlohmann::json meta = {}) : os_(os), meta_(std::move(meta)) {}

    void record(const ParticleCloud& c) override {
        if (!header_written_) {
            nlohmann::json h = {{"format", "rmv-snapshots"},
                                {"version", 1},
                                {"dim", c.dim},
                                {"n", c.n},
                                {"endianness", "little"},
                                {"block", {"t:f64", "n:u64", "rows:f64[n][dim+1]"}},
                                {"columns", csv_header_positions(c.dim)},
                                {"meta", meta_}};
            os_ << h.dump() << '\n';
            header_written_ = true;
        }
        write(c.time);
        const std::uint64_t n = c.n;
        os_.write(reinterpret_cast<const char*>(&n), sizeof n);
        for (std::size_t i = 0; i < c.n; ++i) {
            for (std::size_t k = 0; k < c.dim; ++k) write(c.positions[i * c.dim + k]);
            write(c.local_time_magnitude[i]);
        }
    }

private:
    void write(double v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }

    std::ostream& os_;
    nlohmann::json meta_;
    bool header_written_ = false;
};

struct Snapshot {
    double time = 0.0;
    std::size_t dim = 0;
    std::vector<double> positions;
    std::vector<double> local_time_magnitude;
};

struct SnapshotBlock {
    nlohmann::json header;
    std::vector<Snapshot> snapshots;
};

inline SnapshotBlock read_binary_snapshots(std::istream& is) {
    SnapshotBlock out;
    std::string line;
    if (!std::getline(is, line)) throw Error("binary snapshots: missing header");
    out.header = nlohmann::json::parse(line);
    const std::size_t dim = out.header.at("dim").get<std::size_t>();
    for (;;) {
        double t = 0.0;
        if (!is.read(reinterpret_cast<char*>(&t), sizeof t)) break;
        std::uint64_t n = 0;
        if (!is.read(reinterpret_cast<char*>(&n), sizeof n)) throw Error("binary snapshots: truncated block");
        Snapshot s;
        s.time = t;
        s.dim = dim;
        s.positions.resize(n * dim);
        s.local_time_magnitude.resize(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            if (!is.read(reinterpret_cast<char*>(&s.positions[i * dim]), static_cast<std::streamsize>(dim * 8)) ||
                !is.read(reinterpret_cast<char*>(&s.local_time_magnitude[i]), 8))
                throw Error("binary snapshots: truncated rows");
        }
        out.snapshots.push_back(std::move(s));
    }
    return out;
}

class MemoryRecorder : public Recorder {
public:
    void record(const ParticleCloud& c) override {
        snapshots.push_back({c.time, c.dim, c.positions, c.local_time_magnitude});
    }
    std::vector<Snapshot> snapshots;
};

// Writes to `path.tmp` and renames on commit, so readers never see partial files.
class AtomicFile {
public:
    explicit AtomicFile(std::filesystem::path path)
        : path_(std::move(path)), tmp_(path_.string() + ".tmp"), os_(tmp_, std::ios::binary) {
        if (!os_) throw Error("cannot open " + tmp_.string() + " for writing");
    }
    ~AtomicFile() {
        if (!committed_) {
            os_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }
    AtomicFile(const AtomicFile&) = delete;
    AtomicFile& operator=(const AtomicFile&) = delete;

    std::ostream& stream() { return os_; }

    void commit() {
        os_.close();
        if (!os_) throw Error("failed writing " + tmp_.string());
        std::filesystem::rename(tmp_, path_);
        committed_ = true;
    }

private:
    std::filesystem::path path_, tmp_;
    std::ofstream os_;
    bool committed_ = false;
};

} // namespace rmv
