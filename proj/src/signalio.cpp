#include "respnet/signalio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "respnet/dsp.hpp"

namespace respnet {

std::string modality_name(Modality m) {
    switch (m) {
        case Modality::capnometry: return "capnometry";
        case Modality::impedance_pneumography: return "impedance_pneumography";
        case Modality::oral_nasal_pressure: return "oral_nasal_pressure";
        case Modality::synthetic: return "synthetic";
    }
    return "synthetic";
}

Modality modality_from_name(const std::string& name) {
    if (name == "capnometry") return Modality::capnometry;
    if (name == "impedance_pneumography") return Modality::impedance_pneumography;
    if (name == "oral_nasal_pressure") return Modality::oral_nasal_pressure;
    if (name == "synthetic") return Modality::synthetic;
    throw FormatError("unknown modality: " + name);
}

double SignalRecord::duration_s() const {
    return fs_ppg > 0.0 ? static_cast<double>(ppg.size()) / fs_ppg : 0.0;
}

void SignalRecord::validate() const {
    if (!(fs_ppg > 0.0) || !(fs_resp > 0.0))
        throw FormatError("record " + record_id + ": sampling rates must be positive");
    if (ppg.empty() || resp.empty())
        throw FormatError("record " + record_id + ": empty channel");
    for (double v : ppg)
        if (!std::isfinite(v)) throw FormatError("record " + record_id + ": non-finite PPG");
    for (double v : resp)
        if (!std::isfinite(v)) throw FormatError("record " + record_id + ": non-finite resp");
    const double dur_ppg = static_cast<double>(ppg.size()) / fs_ppg;
    const double dur_resp = static_cast<double>(resp.size()) / fs_resp;
    const double tol = 1.0 / std::min(fs_ppg, fs_resp) + 1e-9;
    if (std::abs(dur_ppg - dur_resp) > tol)
        throw FormatError("record " + record_id + ": channel durations disagree");
}

void SynthConfig::validate() const {
    if (!(duration_s > 0.0) || !(fs > 0.0) || !(heart_rate_bpm > 0.0) ||
        !(resp_rate_bpm > 0.0))
        throw InvalidConfig("synth config: non-positive duration/rate");
    if (am_depth < 0.0 || am_depth >= 1.0 || fm_depth < 0.0 || fm_depth >= 1.0 ||
        bw_depth < 0.0 || bw_depth >= 1.0)
        throw InvalidConfig("synth config: modulation depths must be in [0,1)");
    if (noise_std < 0.0) throw InvalidConfig("synth config: negative noise std");
    if (!(resp_rate_bpm / 60.0 < heart_rate_bpm / 120.0))
        throw InvalidConfig("synth config: respiration must be slower than half the pulse rate");
}

std::vector<size_t> WindowedDataset::train_indices() const {
    std::vector<size_t> out;
    for (size_t i = 0; i < windows.size(); ++i)
        if (windows[i].split == 0) out.push_back(i);
    return out;
}

std::vector<size_t> WindowedDataset::test_indices() const {
    std::vector<size_t> out;
    for (size_t i = 0; i < windows.size(); ++i)
        if (windows[i].split == 1) out.push_back(i);
    return out;
}

// --- manifest ----------------------------------------------------------------

std::vector<RecordMeta> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    if (!j.is_array()) throw FormatError("manifest: expected a JSON array");
    std::vector<RecordMeta> metas;
    for (const auto& item : j) {
        try {
            RecordMeta m;
            m.record_id = item.at("record_id").get<std::string>();
            m.csv_path = item.at("csv").get<std::string>();
            m.fs_ppg = item.at("fs_ppg").get<double>();
            m.fs_resp = item.at("fs_resp").get<double>();
            m.modality = modality_from_name(item.at("modality").get<std::string>());
            metas.push_back(std::move(m));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("manifest entry: ") + e.what());
        }
    }
    return metas;
}

void write_manifest(const std::vector<RecordMeta>& metas, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& m : metas)
        j.push_back({{"record_id", m.record_id},
                     {"csv", m.csv_path},
                     {"fs_ppg", m.fs_ppg},
                     {"fs_resp", m.fs_resp},
                     {"modality", modality_name(m.modality)}});
    std::ofstream os(path);
    if (!os) throw IoError("cannot write manifest: " + path);
    os << j.dump(2) << "\n";
}

// --- record CSV ---------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& s, const char* what) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw FormatError(std::string("bad number in column ") + what);
        return v;
    } catch (const std::exception&) {
        throw FormatError(std::string("bad number in column ") + what);
    }
}

}  // namespace

SignalRecord load_record(const std::string& csv_path, const RecordMeta& meta) {
    std::ifstream is(csv_path);
    if (!is) throw IoError("cannot open record: " + csv_path);
    std::string line;
    if (!std::getline(is, line)) throw FormatError("record CSV: empty file");
    {
        std::string header = trim(line);
        if (header != "t_s,ppg,resp")
            throw FormatError("record CSV: expected header t_s,ppg,resp");
    }
    SignalRecord rec;
    rec.record_id = meta.record_id;
    rec.fs_ppg = meta.fs_ppg;
    rec.fs_resp = meta.fs_resp;
    rec.modality = meta.modality;
    double prev_t = -std::numeric_limits<double>::infinity();
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 == std::string::npos ? 0 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw FormatError("record CSV: expected 3 columns");
        const std::string ts = trim(line.substr(0, c1));
        const std::string ps = trim(line.substr(c1 + 1, c2 - c1 - 1));
        const std::string rs = trim(line.substr(c2 + 1));
        const double t = parse_double(ts, "t_s");
        if (!(t > prev_t)) throw NonMonotonicTime("record CSV: timestamps must increase");
        prev_t = t;
        if (!ps.empty()) rec.ppg.push_back(parse_double(ps, "ppg"));
        if (!rs.empty()) rec.resp.push_back(parse_double(rs, "resp"));
    }
    rec.validate();
    return rec;
}

void write_record(const SignalRecord& record, const std::string& csv_path) {
    record.validate();
    std::ofstream os(csv_path);
    if (!os) throw IoError("cannot write record: " + csv_path);
    const bool ppg_faster = record.fs_ppg >= record.fs_resp;
    const auto& fast = ppg_faster ? record.ppg : record.resp;
    const auto& slow = ppg_faster ? record.resp : record.ppg;
    const double fs_fast = ppg_faster ? record.fs_ppg : record.fs_resp;
    const double fs_slow = ppg_faster ? record.fs_resp : record.fs_ppg;
    // slower channel samples land on their nearest fast-grid row
    std::vector<int64_t> slow_row(slow.size());
    for (size_t j = 0; j < slow.size(); ++j)
        slow_row[j] = std::llround(static_cast<double>(j) * fs_fast / fs_slow);
    os << "t_s,ppg,resp\n";
    char buf[64];
    size_t j = 0;
    for (size_t i = 0; i < fast.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(i) / fs_fast);
        os << buf << ",";
        std::string pcell, rcell;
        const bool slow_here = j < slow.size() && slow_row[j] == static_cast<int64_t>(i);
        std::snprintf(buf, sizeof(buf), "%.17g", fast[i]);
        (ppg_faster ? pcell : rcell) = buf;
        if (slow_here) {
            std::snprintf(buf, sizeof(buf), "%.17g", slow[j]);
            (ppg_faster ? rcell : pcell) = buf;
            ++j;
        }
        os << pcell << "," << rcell << "\n";
    }
    if (!os) throw IoError("write failed: " + csv_path);
}

// --- resampling ----------------------------------------------------------------

std::vector<double> resample(std::span<const double> x, double fs_in, double fs_out) {
    if (x.size() < 2) throw EmptyInput("resample: need at least 2 samples");
    if (!(fs_in > 0.0) || !(fs_out > 0.0))
        throw InvalidConfig("resample: sampling rates must be positive");
    if (fs_in == fs_out) return {x.begin(), x.end()};

    const auto n_in = static_cast<int64_t>(x.size());
    const auto n_out = std::llround(static_cast<double>(n_in) * fs_out / fs_in);
    const double ratio = fs_out / fs_in;
    const double fc = std::min(1.0, ratio);  // cutoff as fraction of input Nyquist
    constexpr double kBeta = 8.0;
    constexpr int64_t kZeros = 16;
    const auto half = static_cast<int64_t>(std::ceil(static_cast<double>(kZeros) / fc));
    const double i0_beta = dsp::kaiser_bessel_i0(kBeta);

    std::vector<double> out(static_cast<size_t>(n_out));
    for (int64_t n = 0; n < n_out; ++n) {
        const double center = static_cast<double>(n) / ratio;
        const auto m0 = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(center)) - half);
        const auto m1 = std::min<int64_t>(n_in - 1,
                                          static_cast<int64_t>(std::floor(center)) + half);
        double acc = 0.0, wsum = 0.0;
        for (int64_t m = m0; m <= m1; ++m) {
            const double u = static_cast<double>(m) - center;
            const double r = u / static_cast<double>(half);
            if (r <= -1.0 || r >= 1.0) continue;
            const double arg = M_PI * fc * u;
            const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
            const double w =
                sinc * dsp::kaiser_bessel_i0(kBeta * std::sqrt(1.0 - r * r)) / i0_beta;
            acc += w * x[static_cast<size_t>(m)];
            wsum += w;
        }
        out[static_cast<size_t>(n)] = wsum != 0.0 ? acc / wsum : 0.0;
    }
    return out;
}

// --- windowing & split ----------------------------------------------------------

std::vector<std::pair<std::vector<double>, std::vector<double>>> make_windows(
    const SignalRecord& record, double window_s, double fs) {
    record.validate();
    if (record.duration_s() < window_s)
        throw RecordTooShort("record " + record.record_id + " shorter than one window");
    const auto win_len = static_cast<int64_t>(std::llround(window_s * fs));
    const std::vector<double> px = resample(record.ppg, record.fs_ppg, fs);
    const std::vector<double> py = resample(record.resp, record.fs_resp, fs);
    const auto usable = static_cast<int64_t>(std::min(px.size(), py.size()));
    const int64_t n = usable / win_len;
    if (n < 1) throw RecordTooShort("record " + record.record_id + " shorter than one window");
    std::vector<std::pair<std::vector<double>, std::vector<double>>> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t w = 0; w < n; ++w) {
        const auto a = static_cast<size_t>(w * win_len);
        const auto b = static_cast<size_t>((w + 1) * win_len);
        out.emplace_back(std::vector<double>(px.begin() + a, px.begin() + b),
                         std::vector<double>(py.begin() + a, py.begin() + b));
    }
    return out;
}

namespace {

// Fisher-Yates with an explicit bound step so shuffles are reproducible
// independent of the standard library's distribution internals.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (size_t i = v.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace

WindowedDataset split_train_test(std::vector<Window> windows, double train_frac,
                                 uint64_t seed, SplitMode mode) {
    if (windows.size() < 2) throw TooFewWindows("split needs at least 2 windows");
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw InvalidConfig("train fraction must be in (0,1)");
    const size_t n_train =
        static_cast<size_t>(std::floor(train_frac * static_cast<double>(windows.size())));

    if (mode == SplitMode::by_window) {
        std::vector<size_t> idx(windows.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        deterministic_shuffle(idx, seed);
        for (auto& w : windows) w.split = 1;
        for (size_t i = 0; i < n_train; ++i) windows[idx[i]].split = 0;
    } else {
        std::vector<std::string> ids;
        for (const auto& w : windows)
            if (std::find(ids.begin(), ids.end(), w.record_id) == ids.end())
                ids.push_back(w.record_id);
        deterministic_shuffle(ids, seed);
        std::vector<std::string> train_ids;
        size_t assigned = 0;
        for (const auto& id : ids) {
            if (assigned >= n_train) break;
            train_ids.push_back(id);
            for (const auto& w : windows)
                if (w.record_id == id) ++assigned;
        }
        for (auto& w : windows)
            w.split = std::find(train_ids.begin(), train_ids.end(), w.record_id) !=
                              train_ids.end()
                          ? 0
                          : 1;
    }

    WindowedDataset ds;
    ds.window_len = static_cast<int64_t>(windows.front().x.size());
    ds.split_seed = seed;
    ds.windows = std::move(windows);
    return ds;
}

NormalizeResult minmax_normalize(std::span<const double> x) {
    if (x.empty()) throw EmptyInput("minmax_normalize: empty input");
    const auto [mn_it, mx_it] = std::minmax_element(x.begin(), x.end());
    const double mn = *mn_it, mx = *mx_it;
    NormalizeResult res;
    res.values.resize(x.size());
    if (mx == mn) {
        std::fill(res.values.begin(), res.values.end(), 0.5);
        res.degenerate = true;
        return res;
    }
    for (size_t i = 0; i < x.size(); ++i) res.values[i] = (x[i] - mn) / (mx - mn);
    return res;
}

std::vector<double> zscore(std::span<const double> x) {
    if (x.empty()) throw EmptyInput("zscore: empty input");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    std::vector<double> out(x.size());
    if (var == 0.0) return out;
    const double inv = 1.0 / std::sqrt(var);
    for (size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv;
    return out;
}

// --- synthetic records ------------------------------------------------------------

SignalRecord synth_record(const SynthConfig& cfg, const std::string& record_id) {
    cfg.validate();
    const auto n = static_cast<int64_t>(std::llround(cfg.duration_s * cfg.fs));
    const double f_resp = cfg.resp_rate_bpm / 60.0;
    const double f_hr = cfg.heart_rate_bpm / 60.0;

    std::mt19937_64 rng(cfg.seed);
    auto uniform01 = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    auto gauss = [&]() {
        const double u1 = std::max(uniform01(), 1e-300), u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    };

    // asymmetric double-gaussian pulse template on beat phase u in [0,1)
    auto pulse = [](double u) {
        const double d1 = (u - 0.30) / 0.10, d2 = (u - 0.62) / 0.14;
        return std::exp(-d1 * d1) + 0.4 * std::exp(-d2 * d2);
    };

    SignalRecord rec;
    rec.record_id = record_id;
    rec.fs_ppg = cfg.fs;
    rec.fs_resp = cfg.fs;
    rec.modality = Modality::synthetic;
    rec.ppg.resize(static_cast<size_t>(n));
    rec.resp.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / cfg.fs;
        const double r = std::sin(2.0 * M_PI * f_resp * t);
        // beat phase with frequency modulation integrated in closed form;
        // instantaneous rate f_hr * (1 - fm_depth * r), so the inter-beat
        // interval rises and falls with the reference signal
        const double phase =
            f_hr * (t - cfg.fm_depth * (1.0 - std::cos(2.0 * M_PI * f_resp * t)) /
                            (2.0 * M_PI * f_resp));
        const double u = phase - std::floor(phase);
        double v = (1.0 + cfg.am_depth * r) * pulse(u) + cfg.bw_depth * r;
        if (cfg.noise_std > 0.0) v += cfg.noise_std * gauss();
        rec.ppg[static_cast<size_t>(i)] = v;
        rec.resp[static_cast<size_t>(i)] = r;
    }
    return rec;
}

// --- windowed dataset binary -------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'R', 'S', 'P', 'W'};
constexpr uint16_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("windowed dataset: truncated file");
    return v;
}

}  // namespace

void write_windowed(const WindowedDataset& ds, const std::string& path) {
    if (ds.windows.empty()) throw FormatError("refusing to write an empty dataset");
    for (const auto& w : ds.windows)
        if (static_cast<int64_t>(w.x.size()) != ds.window_len ||
            static_cast<int64_t>(w.y.size()) != ds.window_len)
            throw FormatError("window length inconsistent with dataset header");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kMagic, 4);
    write_le<uint16_t>(os, kVersion);
    write_le<uint32_t>(os, static_cast<uint32_t>(ds.windows.size()));
    write_le<uint32_t>(os, static_cast<uint32_t>(ds.window_len));
    write_le<uint16_t>(os, static_cast<uint16_t>(std::llround(ds.fs)));
    write_le<uint64_t>(os, ds.split_seed);
    for (const auto& w : ds.windows) {
        write_le<uint16_t>(os, static_cast<uint16_t>(w.record_id.size()));
        os.write(w.record_id.data(), static_cast<std::streamsize>(w.record_id.size()));
        write_le<uint8_t>(os, w.split);
        for (double v : w.x) write_le<float>(os, static_cast<float>(v));
        for (double v : w.y) write_le<float>(os, static_cast<float>(v));
    }
    if (!os) throw IoError("write failed: " + path);
}

WindowedDataset read_windowed(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("windowed dataset: bad magic");
    if (read_le<uint16_t>(is) != kVersion)
        throw FormatError("windowed dataset: unsupported version");
    WindowedDataset ds;
    const auto n = read_le<uint32_t>(is);
    ds.window_len = read_le<uint32_t>(is);
    ds.fs = static_cast<double>(read_le<uint16_t>(is));
    ds.split_seed = read_le<uint64_t>(is);
    ds.windows.resize(n);
    for (auto& w : ds.windows) {
        const auto len = read_le<uint16_t>(is);
        w.record_id.resize(len);
        is.read(w.record_id.data(), len);
        if (!is) throw FormatError("windowed dataset: truncated file");
        w.split = read_le<uint8_t>(is);
        w.x.resize(static_cast<size_t>(ds.window_len));
        w.y.resize(static_cast<size_t>(ds.window_len));
        for (auto& v : w.x) v = static_cast<double>(read_le<float>(is));
        for (auto& v : w.y) v = static_cast<double>(read_le<float>(is));
    }
    return ds;
}

}  // namespace respnet
