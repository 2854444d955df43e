#pragma once

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dsc/encoder.hpp"
#include "dsc/nn_cnn_att.hpp"
#include "dsc/nn_regressor.hpp"

namespace dsc::io {

using enc::RowStats;
using scen::TabularWindow;

// ---------------------------------------------------------------------------
// Little-endian primitives (explicit so files are portable)
// ---------------------------------------------------------------------------

namespace detail {

inline void put_bytes(std::string& out, uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(char(uint8_t(v >> (8 * i))));
}

struct Reader {
    const uint8_t* p;
    size_t n, off = 0;
    std::string path;

    uint64_t get(int bytes) {
        if (off + size_t(bytes) > n)
            throw ValidationError(path + ": truncated file");
        uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= uint64_t(p[off + size_t(i)]) << (8 * i);
        off += size_t(bytes);
        return v;
    }
    uint16_t u16() { return uint16_t(get(2)); }
    uint32_t u32() { return uint32_t(get(4)); }
    uint64_t u64() { return get(8); }
    uint8_t u8() { return uint8_t(get(1)); }
    int8_t i8() { return int8_t(uint8_t(get(1))); }
    float f32() { return std::bit_cast<float>(uint32_t(get(4))); }
    double f64() { return std::bit_cast<double>(get(8)); }
};

inline void put_f32(std::string& out, float v) { put_bytes(out, std::bit_cast<uint32_t>(v), 4); }
inline void put_f64(std::string& out, double v) { put_bytes(out, std::bit_cast<uint64_t>(v), 8); }

inline std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

/// Atomic write: temp file in the same directory, then rename.
inline void write_file_atomic(const std::string& path, const std::string& data) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw NumericalError("cannot write " + tmp);
        out.write(data.data(), std::streamsize(data.size()));
        if (!out) throw NumericalError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset container ("DSC1")
// ---------------------------------------------------------------------------

struct DatasetRecord {
    uint64_t id = 0;
    uint32_t line = 0;
    double x_pct = 0, tau = 0, k = 0;
    uint8_t tis = 0, boundary = 0, diverged = 0;
    int8_t dr_label = -1;
    double r_metric = 0, rhat = 0, lambda_max = 0;
};

/// In-memory dataset: one f32 payload block per record, channels x rows x
/// cols, row-major. channels = 1 for raw feature windows, 5 for encoded
/// volumes.
struct Dataset {
    uint32_t channels = 1;
    uint32_t rows = 270, cols = 250;
    std::vector<DatasetRecord> records;
    std::vector<std::vector<float>> payloads;

    size_t payload_size() const { return size_t(channels) * rows * cols; }

    TabularWindow window(size_t i) const {
        if (channels != 1) throw ValidationError("dataset does not hold raw windows");
        const auto& rec = records[i];
        TabularWindow w;
        w.data.assign(payloads[i].begin(), payloads[i].end());
        w.scenario_id = rec.id;
        w.line = int(rec.line);
        w.x_pct = rec.x_pct;
        w.tau = rec.tau;
        w.k = rec.k;
        w.tis = rec.tis;
        w.boundary = rec.boundary != 0;
        w.diverged = rec.diverged != 0;
        w.r_metric = rec.r_metric;
        w.rhat = rec.rhat;
        w.dr_label = rec.dr_label;
        return w;
    }
};

inline Dataset dataset_from_batch(const scen::BatchResult& batch) {
    Dataset ds;
    ds.channels = 1;
    for (size_t i = 0; i < batch.records.size(); ++i) {
        const auto& r = batch.records[i];
        if (!r.error.empty()) continue;  // failed scenarios are reported, not stored
        const auto& w = batch.windows[i];
        if (w.data.empty()) continue;
        DatasetRecord rec;
        rec.id = r.id;
        rec.line = uint32_t(r.line);
        rec.x_pct = r.x_pct;
        rec.tau = r.tau;
        rec.k = r.k;
        rec.tis = uint8_t(r.tis);
        rec.boundary = r.boundary ? 1 : 0;
        rec.diverged = r.diverged ? 1 : 0;
        rec.dr_label = int8_t(r.dr_label);
        rec.r_metric = r.r_metric;
        rec.rhat = r.rhat;
        rec.lambda_max = r.lambda_max;
        ds.records.push_back(rec);
        ds.payloads.emplace_back(w.data.begin(), w.data.end());
    }
    return ds;
}

inline std::string sidecar_path(const std::string& path) { return path + ".csv"; }

inline void write_sidecar_csv(const Dataset& ds, const std::string& path) {
    std::string out = "id,line,x_pct,tau,k,tis,boundary,diverged,dr_label,R,Rhat,lambda_max\n";
    char buf[256];
    for (const auto& r : ds.records) {
        std::snprintf(buf, sizeof(buf), "%llu,%u,%s,%s,%s,%u,%u,%u,%d,%s,%s,%s\n",
                      (unsigned long long)r.id, r.line, csv::fnum(r.x_pct).c_str(),
                      csv::fnum(r.tau).c_str(), csv::fnum(r.k).c_str(), r.tis, r.boundary,
                      r.diverged, int(r.dr_label), csv::fnum(r.r_metric).c_str(),
                      csv::fnum(r.rhat).c_str(), csv::fnum(r.lambda_max).c_str());
        out += buf;
    }
    detail::write_file_atomic(path, out);
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
    if (ds.records.size() != ds.payloads.size())
        throw ValidationError("record/payload count mismatch");
    std::string out;
    out.reserve(24 + ds.records.size() * (ds.payload_size() * 4 + 64));
    out += "DSC1";
    detail::put_bytes(out, 1, 2);  // version
    detail::put_bytes(out, 0, 2);
    detail::put_bytes(out, ds.records.size(), 4);
    detail::put_bytes(out, ds.channels, 4);
    detail::put_bytes(out, ds.rows, 4);
    detail::put_bytes(out, ds.cols, 4);
    for (const auto& p : ds.payloads) {
        if (p.size() != ds.payload_size())
            throw ValidationError("payload has the wrong shape");
        for (float v : p) detail::put_f32(out, v);
    }
    for (const auto& r : ds.records) {
        detail::put_bytes(out, r.id, 8);
        detail::put_bytes(out, r.line, 4);
        detail::put_f64(out, r.x_pct);
        detail::put_f64(out, r.tau);
        detail::put_f64(out, r.k);
        out.push_back(char(r.tis));
        out.push_back(char(r.boundary));
        out.push_back(char(r.diverged));
        out.push_back(char(uint8_t(r.dr_label)));
        detail::put_f64(out, r.r_metric);
        detail::put_f64(out, r.rhat);
        detail::put_f64(out, r.lambda_max);
    }
    detail::write_file_atomic(path, out);
    write_sidecar_csv(ds, sidecar_path(path));
}

inline Dataset read_dataset(const std::string& path) {
    std::string data = detail::read_all(path);
    detail::Reader rd{reinterpret_cast<const uint8_t*>(data.data()), data.size(), 0, path};
    if (data.size() < 4 || std::memcmp(data.data(), "DSC1", 4) != 0)
        throw ValidationError(path + ": not a DSC1 dataset (bad magic)");
    rd.off = 4;
    uint16_t version = rd.u16();
    if (version != 1) throw ValidationError(strf("%s: unsupported version %u", path.c_str(), version));
    rd.u16();
    uint32_t n = rd.u32();
    Dataset ds;
    ds.channels = rd.u32();
    ds.rows = rd.u32();
    ds.cols = rd.u32();
    if (ds.rows != 270 || ds.cols != 250 || (ds.channels != 1 && ds.channels != 5))
        throw ValidationError(path + ": unexpected tensor shape in header");
    // header 24 B; per record: f32 payload + 64 B of metadata
    const size_t expect = 24 + size_t(n) * (ds.payload_size() * 4 + 64);
    if (data.size() != expect)
        throw ValidationError(strf("%s: header count %u does not match file size", path.c_str(), n));
    ds.payloads.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        auto& p = ds.payloads[i];
        p.resize(ds.payload_size());
        for (auto& v : p) v = rd.f32();
    }
    ds.records.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        auto& r = ds.records[i];
        r.id = rd.u64();
        r.line = rd.u32();
        r.x_pct = rd.f64();
        r.tau = rd.f64();
        r.k = rd.f64();
        r.tis = rd.u8();
        r.boundary = rd.u8();
        r.diverged = rd.u8();
        r.dr_label = rd.i8();
        r.r_metric = rd.f64();
        r.rhat = rd.f64();
        r.lambda_max = rd.f64();
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Model checkpoints ("DSCM"): layer dimensions, 64-bit parameters and the
// frozen normalization stats
// ---------------------------------------------------------------------------

inline constexpr uint16_t kModelCnnAtt = 1;
inline constexpr uint16_t kModelRegressor = 2;

inline void append_stats(std::string& out, const RowStats& st) {
    detail::put_bytes(out, st.min.size(), 4);
    for (double v : st.min) detail::put_f64(out, v);
    for (double v : st.max) detail::put_f64(out, v);
}

inline RowStats read_stats(detail::Reader& rd) {
    RowStats st;
    uint32_t rows = rd.u32();
    st.min.resize(rows);
    st.max.resize(rows);
    for (auto& v : st.min) v = rd.f64();
    for (auto& v : st.max) v = rd.f64();
    return st;
}

inline void save_cnn_att(const nn::CnnAttModel<float>& model, const RowStats& stats,
                         const std::string& path) {
    const auto& c = model.config();
    std::string out = "DSCM";
    detail::put_bytes(out, 1, 2);
    detail::put_bytes(out, kModelCnnAtt, 2);
    for (int v : {c.in_ch, c.rows, c.cols, c.nf, c.heads, c.dk, c.dv, c.classes})
        detail::put_bytes(out, uint64_t(v), 4);
    for (int v : c.kernels) detail::put_bytes(out, uint64_t(v), 4);
    detail::put_f64(out, c.dropout);
    append_stats(out, stats);
    detail::put_bytes(out, model.params().size(), 8);
    for (float v : model.params()) detail::put_f64(out, double(v));
    detail::write_file_atomic(path, out);
}

struct LoadedCnnAtt {
    nn::CnnAttModel<float> model;
    RowStats stats;
};

inline LoadedCnnAtt load_cnn_att(const std::string& path) {
    std::string data = detail::read_all(path);
    if (data.size() < 8 || std::memcmp(data.data(), "DSCM", 4) != 0)
        throw ValidationError(path + ": not a DSCM checkpoint (bad magic)");
    detail::Reader rd{reinterpret_cast<const uint8_t*>(data.data()), data.size(), 4, path};
    uint16_t version = rd.u16();
    if (version != 1) throw ValidationError(strf("%s: unsupported version %u", path.c_str(), version));
    uint16_t type = rd.u16();
    if (type != kModelCnnAtt)
        throw ValidationError(path + ": checkpoint does not hold a classifier");
    nn::CnnAttConfig c;
    c.in_ch = int(rd.u32());
    c.rows = int(rd.u32());
    c.cols = int(rd.u32());
    c.nf = int(rd.u32());
    c.heads = int(rd.u32());
    c.dk = int(rd.u32());
    c.dv = int(rd.u32());
    c.classes = int(rd.u32());
    for (auto& kv : c.kernels) kv = int(rd.u32());
    c.dropout = rd.f64();
    LoadedCnnAtt out{nn::CnnAttModel<float>(c), read_stats(rd)};
    uint64_t np = rd.u64();
    if (np != out.model.params().size())
        throw ValidationError(path + ": parameter count does not match the architecture");
    for (auto& v : out.model.params()) v = float(rd.f64());
    if (rd.off != data.size()) throw ValidationError(path + ": trailing bytes");
    return out;
}

inline void save_regressor(const nn::RegressorModel<double>& model, const std::string& path) {
    const auto& c = model.config();
    std::string out = "DSCM";
    detail::put_bytes(out, 1, 2);
    detail::put_bytes(out, kModelRegressor, 2);
    detail::put_bytes(out, uint64_t(c.input_dim), 4);
    detail::put_bytes(out, c.hidden.size(), 4);
    for (int h : c.hidden) detail::put_bytes(out, uint64_t(h), 4);
    detail::put_bytes(out, model.params().size(), 8);
    for (double v : model.params()) detail::put_f64(out, v);
    detail::write_file_atomic(path, out);
}

inline nn::RegressorModel<double> load_regressor(const std::string& path) {
    std::string data = detail::read_all(path);
    if (data.size() < 8 || std::memcmp(data.data(), "DSCM", 4) != 0)
        throw ValidationError(path + ": not a DSCM checkpoint (bad magic)");
    detail::Reader rd{reinterpret_cast<const uint8_t*>(data.data()), data.size(), 4, path};
    if (rd.u16() != 1) throw ValidationError(path + ": unsupported version");
    if (rd.u16() != kModelRegressor)
        throw ValidationError(path + ": checkpoint does not hold a regressor");
    nn::RegressorConfig c;
    c.input_dim = int(rd.u32());
    c.hidden.resize(rd.u32());
    for (auto& h : c.hidden) h = int(rd.u32());
    nn::RegressorModel<double> model(c);
    uint64_t np = rd.u64();
    if (np != model.params().size())
        throw ValidationError(path + ": parameter count does not match the architecture");
    for (auto& v : model.params()) v = rd.f64();
    return model;
}

}  // namespace dsc::io
