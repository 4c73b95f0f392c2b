#include "cvqkd/common.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace cvqkd {

const char* to_string(Errc code) {
    switch (code) {
        case Errc::invalid_argument: return "invalid argument";
        case Errc::length_mismatch: return "length mismatch";
        case Errc::band_overlap: return "band overlap";
        case Errc::non_positive_definite: return "covariance not positive definite";
        case Errc::singular_innovation: return "singular innovation covariance";
        case Errc::degenerate_estimate: return "degenerate rotation estimate";
        case Errc::unstable_step_size: return "unstable CMA step size";
        case Errc::singular_matrix: return "singular matrix";
        case Errc::pilot_not_found: return "pilot not found";
        case Errc::invalid_calibration: return "invalid calibration";
        case Errc::zero_power: return "zero-power channel";
        case Errc::unphysical_covariance: return "unphysical covariance";
        case Errc::invalid_estimate: return "invalid channel estimate";
        case Errc::stream_too_short: return "stream too short";
        case Errc::config: return "config error";
        case Errc::io: return "I/O error";
    }
    return "unknown error";
}

double mean_power(std::span<const cplx> z) {
    if (z.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& v : z) acc += std::norm(v);
    return acc / static_cast<double>(z.size());
}

double quadrature_variance(std::span<const cplx> z) {
    if (z.size() < 2) throw Error(Errc::invalid_argument, "variance needs at least two samples");
    cplx mean{};
    for (const auto& v : z) mean += v;
    mean /= static_cast<double>(z.size());
    double acc = 0.0;
    for (const auto& v : z) acc += std::norm(v - mean);
    return 0.5 * acc / static_cast<double>(z.size() - 1);
}

namespace {

void put_le(std::ofstream& out, double v) {
    static_assert(sizeof(double) == 8);
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    out.write(reinterpret_cast<const char*>(&bits), 8);
}

double get_le(const char* p) {
    std::uint64_t bits;
    std::memcpy(&bits, p, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    return std::bit_cast<double>(bits);
}

}  // namespace

void write_waveform_binary(const std::string& path, const DualPolWaveform& wf) {
    if (wf.x.size() != wf.y.size()) throw Error(Errc::length_mismatch, "x/y length differ");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io, "cannot open " + path);
    for (const auto* pol : {&wf.x, &wf.y}) {
        for (const auto& v : *pol) {
            put_le(out, v.real());
            put_le(out, v.imag());
        }
    }
}

DualPolWaveform read_waveform_binary(const std::string& path, double sample_rate) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 32 != 0) throw Error(Errc::io, path + ": size is not a whole dual-pol record");
    const std::size_t n = bytes.size() / 32;
    DualPolWaveform wf(n, sample_rate);
    const char* p = bytes.data();
    for (auto* pol : {&wf.x, &wf.y}) {
        for (std::size_t i = 0; i < n; ++i, p += 16) (*pol)[i] = {get_le(p), get_le(p + 8)};
    }
    return wf;
}

}  // namespace cvqkd
