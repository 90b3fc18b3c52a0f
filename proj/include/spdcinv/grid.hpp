#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <new>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace spdcinv {

using cd = std::complex<double>;

inline constexpr double speed_of_light = 299792458.0;
inline constexpr double pi = std::numbers::pi;

/// 64-byte aligned allocator so FFTW's SIMD codelets see the same alignment
/// for every buffer they are executed on.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() noexcept = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), alignment));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using FieldBuffer = std::vector<cd, AlignedAllocator<cd>>;

inline bool is_power_of_two(long n) { return n > 0 && (n & (n - 1)) == 0; }

struct GridConfig {
    long nx = 64;
    long ny = 64;
    double dx = 4e-6;
    double dy = 4e-6;
    double length = 1e-3;
    double dz = 1e-5;
};

/// Discretized transverse plane plus propagation axis. Row-major storage with
/// x varying fastest: index = iy * nx + ix. Spatial coordinates are centered,
/// x[j] = (j - nx/2) dx; spectral axes are in FFT order.
struct SimGrid {
    long nx = 0, ny = 0;
    double dx = 0, dy = 0;
    long nz = 0;
    double dz = 0;
    double length = 0;
    std::vector<double> x, y;
    std::vector<double> kx, ky;

    std::size_t cells() const { return static_cast<std::size_t>(nx * ny); }
    double cell_area() const { return dx * dy; }
    double x_at(long ix) const { return x[static_cast<std::size_t>(ix)]; }
    double y_at(long iy) const { return y[static_cast<std::size_t>(iy)]; }

    bool same_plane(const SimGrid& o) const {
        return nx == o.nx && ny == o.ny && dx == o.dx && dy == o.dy;
    }
};

/// Standard discrete-frequency layout (numpy.fft.fftfreq) scaled by 2 pi.
inline std::vector<double> angular_frequency_axis(long n, double step) {
    std::vector<double> k(static_cast<std::size_t>(n));
    for (long j = 0; j < n; ++j) {
        const long m = j < n / 2 ? j : j - n;
        k[static_cast<std::size_t>(j)] = 2.0 * pi * static_cast<double>(m) / (static_cast<double>(n) * step);
    }
    return k;
}

inline SimGrid build_grid(const GridConfig& cfg) {
    if (!is_power_of_two(cfg.nx) || !is_power_of_two(cfg.ny))
        throw ConfigError("grid: nx and ny must be powers of two (got " + std::to_string(cfg.nx) + "x" +
                          std::to_string(cfg.ny) + ")");
    if (!(cfg.dx > 0) || !(cfg.dy > 0) || !(cfg.dz > 0) || !(cfg.length > 0))
        throw ConfigError("grid: dx, dy, dz and length must be strictly positive");
    const double ratio = cfg.length / cfg.dz;
    const long nz = std::lround(ratio);
    if (nz < 1 || std::abs(ratio - static_cast<double>(nz)) > 1e-6 * ratio)
        throw ConfigError("grid: dz must divide length into an integer number of steps");

    SimGrid g;
    g.nx = cfg.nx;
    g.ny = cfg.ny;
    g.dx = cfg.dx;
    g.dy = cfg.dy;
    g.nz = nz;
    g.length = cfg.length;
    g.dz = cfg.length / static_cast<double>(nz);
    g.x.resize(static_cast<std::size_t>(g.nx));
    g.y.resize(static_cast<std::size_t>(g.ny));
    for (long j = 0; j < g.nx; ++j) g.x[static_cast<std::size_t>(j)] = static_cast<double>(j - g.nx / 2) * g.dx;
    for (long j = 0; j < g.ny; ++j) g.y[static_cast<std::size_t>(j)] = static_cast<double>(j - g.ny / 2) * g.dy;
    g.kx = angular_frequency_axis(g.nx, g.dx);
    g.ky = angular_frequency_axis(g.ny, g.dy);
    return g;
}

/// Complex samples on the transverse plane of a grid.
struct ComplexField2D {
    long nx = 0, ny = 0;
    double dx = 0, dy = 0;
    FieldBuffer data;

    ComplexField2D() = default;
    explicit ComplexField2D(const SimGrid& g, cd fill = {0.0, 0.0})
        : nx(g.nx), ny(g.ny), dx(g.dx), dy(g.dy), data(g.cells(), fill) {}

    std::size_t size() const { return data.size(); }
    cd& operator()(long ix, long iy) { return data[static_cast<std::size_t>(iy * nx + ix)]; }
    const cd& operator()(long ix, long iy) const { return data[static_cast<std::size_t>(iy * nx + ix)]; }
    cd& operator[](std::size_t i) { return data[i]; }
    const cd& operator[](std::size_t i) const { return data[i]; }

    bool same_plane(const ComplexField2D& o) const { return nx == o.nx && ny == o.ny && dx == o.dx && dy == o.dy; }
    bool on(const SimGrid& g) const { return nx == g.nx && ny == g.ny && dx == g.dx && dy == g.dy; }

    bool all_finite() const {
        for (const auto& v : data)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        return true;
    }

    /// sum |E|^2 dx dy
    double power() const {
        double s = 0.0;
        for (const auto& v : data) s += std::norm(v);
        return s * dx * dy;
    }

    ComplexField2D& operator+=(const ComplexField2D& o) {
        require_same(o);
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }
    ComplexField2D& operator*=(cd a) {
        for (auto& v : data) v *= a;
        return *this;
    }

    void require_same(const ComplexField2D& o) const {
        if (!same_plane(o)) throw ShapeError("field grid mismatch");
    }
};

/// Cached FFTW plans for one transverse shape. Plans are built under a global
/// lock with FFTW_ESTIMATE (deterministic algorithm choice) and executed with the
/// new-array interface, which is safe to call concurrently.
class Fft2D {
public:
    static const Fft2D& get(long nx, long ny) {
        static std::mutex mutex;
        static std::map<std::pair<long, long>, std::unique_ptr<Fft2D>> cache;
        std::lock_guard lock(mutex);
        auto& slot = cache[{nx, ny}];
        if (!slot) slot.reset(new Fft2D(nx, ny));
        return *slot;
    }

    void forward(cd* data) const { fftw_execute_dft(fwd_, as_fftw(data), as_fftw(data)); }
    void backward(cd* data) const { fftw_execute_dft(bwd_, as_fftw(data), as_fftw(data)); }
    void forward(ComplexField2D& f) const { forward(f.data.data()); }
    void backward(ComplexField2D& f) const { backward(f.data.data()); }

    long nx() const { return nx_; }
    long ny() const { return ny_; }

    Fft2D(const Fft2D&) = delete;
    Fft2D& operator=(const Fft2D&) = delete;
    ~Fft2D() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }

private:
    Fft2D(long nx, long ny) : nx_(nx), ny_(ny) {
        FieldBuffer scratch(static_cast<std::size_t>(nx * ny));
        fwd_ = fftw_plan_dft_2d(static_cast<int>(ny), static_cast<int>(nx), as_fftw(scratch.data()),
                                as_fftw(scratch.data()), FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_2d(static_cast<int>(ny), static_cast<int>(nx), as_fftw(scratch.data()),
                                as_fftw(scratch.data()), FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    static fftw_complex* as_fftw(cd* p) { return reinterpret_cast<fftw_complex*>(p); }

    long nx_, ny_;
    fftw_plan fwd_{}, bwd_{};
};

/// Unnormalized forward transform followed by the normalized inverse.
inline void fft_roundtrip(ComplexField2D& f) {
    const auto& fft = Fft2D::get(f.nx, f.ny);
    fft.forward(f);
    fft.backward(f);
    const double inv = 1.0 / static_cast<double>(f.size());
    for (auto& v : f.data) v *= inv;
}

/// Spectral multiplier of one paraxial diffraction step of length dz for a wave
/// of wavenumber k. The envelope obeys i dE/dz = -lap(E)/(2k); with the FFTW
/// forward transform carrying exp(-i kx x) each spectral bin picks up
/// exp(-i (kx^2 + ky^2) dz / (2k)).
inline ComplexField2D transverse_propagator_phase(const SimGrid& g, double k, double dz) {
    if (!(k > 0)) throw ConfigError("propagator phase: wavenumber must be positive");
    ComplexField2D h(g);
    for (long iy = 0; iy < g.ny; ++iy) {
        const double ky = g.ky[static_cast<std::size_t>(iy)];
        for (long ix = 0; ix < g.nx; ++ix) {
            const double kx = g.kx[static_cast<std::size_t>(ix)];
            const double phase = -(kx * kx + ky * ky) * dz / (2.0 * k);
            h(ix, iy) = std::polar(1.0, phase);
        }
    }
    return h;
}

/// Applies a precomputed linear step: E <- IFFT(multiplier * FFT(E)). The
/// multiplier already contains the 1/N normalization.
class LinearStep {
public:
    LinearStep() = default;
    LinearStep(const SimGrid& g, double k, double dz) : fft_(&Fft2D::get(g.nx, g.ny)) {
        auto h = transverse_propagator_phase(g, k, dz);
        const double inv = 1.0 / static_cast<double>(g.cells());
        mult_.resize(h.size());
        adj_.resize(h.size());
        for (std::size_t i = 0; i < h.size(); ++i) {
            mult_[i] = h[i] * inv;
            adj_[i] = std::conj(h[i]) * inv;
        }
    }

    void apply(cd* data) const { run(data, mult_); }
    /// Hermitian adjoint (propagation by -dz).
    void apply_adjoint(cd* data) const { run(data, adj_); }
    void apply(ComplexField2D& f) const { apply(f.data.data()); }

private:
    void run(cd* data, const FieldBuffer& m) const {
        fft_->forward(data);
        const std::size_t n = m.size();
        for (std::size_t i = 0; i < n; ++i) data[i] *= m[i];
        fft_->backward(data);
    }

    const Fft2D* fft_ = nullptr;
    FieldBuffer mult_, adj_;
};

/// Free-space (chi = 0) propagation of a field over `distance` in `steps`
/// equal paraxial steps.
inline ComplexField2D diffract(ComplexField2D field, const SimGrid& g, double k, double distance, long steps = 1) {
    if (!field.on(g)) throw ShapeError("diffract: field not on grid");
    const LinearStep step(g, k, distance / static_cast<double>(steps));
    for (long s = 0; s < steps; ++s) step.apply(field);
    return field;
}

struct WaveParams {
    double lambda_p = 0, lambda_s = 0, lambda_i = 0;
    double n_p = 1, n_s = 1, n_i = 1;
    double k_p = 0, k_s = 0, k_i = 0;
    double omega_s = 0, omega_i = 0;
    double d24 = 0;
    double poling_period = 0;
    double delta_k = 0;
};

struct WaveInputs {
    double lambda_p = 405e-9, lambda_s = 810e-9, lambda_i = 810e-9;
    double n_p = 1.8, n_s = 1.8, n_i = 1.8;
};

/// Poling period that cancels k_p - k_s - k_i exactly.
inline double qpm_period(const WaveInputs& w) {
    const double mismatch = 2.0 * pi * (w.n_p / w.lambda_p - w.n_s / w.lambda_s - w.n_i / w.lambda_i);
    if (!(std::abs(mismatch) > 0)) throw ConfigError("waves: zero bulk mismatch, no QPM period defined");
    return 2.0 * pi / std::abs(mismatch);
}

inline WaveParams wave_params(const WaveInputs& in, double poling_period, double d24) {
    for (double lam : {in.lambda_p, in.lambda_s, in.lambda_i})
        if (!(lam > 0)) throw ConfigError("waves: wavelengths must be positive");
    for (double n : {in.n_p, in.n_s, in.n_i})
        if (!(n >= 1.0)) throw ConfigError("waves: refractive indices must be >= 1");
    const double inv_p = 1.0 / in.lambda_p;
    const double mismatch = inv_p - 1.0 / in.lambda_s - 1.0 / in.lambda_i;
    if (std::abs(mismatch) > 1e-9 * inv_p)
        throw ConfigError("waves: energy conservation violated (1/lambda_p != 1/lambda_s + 1/lambda_i)");
    if (!(poling_period > 0)) throw ConfigError("waves: poling period must be positive");

    WaveParams w;
    w.lambda_p = in.lambda_p;
    w.lambda_s = in.lambda_s;
    w.lambda_i = in.lambda_i;
    w.n_p = in.n_p;
    w.n_s = in.n_s;
    w.n_i = in.n_i;
    w.k_p = 2.0 * pi * in.n_p / in.lambda_p;
    w.k_s = 2.0 * pi * in.n_s / in.lambda_s;
    w.k_i = 2.0 * pi * in.n_i / in.lambda_i;
    w.omega_s = 2.0 * pi * speed_of_light / in.lambda_s;
    w.omega_i = 2.0 * pi * speed_of_light / in.lambda_i;
    w.d24 = d24;
    w.poling_period = poling_period;
    // Sign of the grating vector follows the bulk mismatch so QPM always cancels it.
    const double bulk = w.k_p - w.k_s - w.k_i;
    const double grating = (bulk >= 0 ? 1.0 : -1.0) * 2.0 * pi / poling_period;
    w.delta_k = bulk - grating;
    return w;
}

} // namespace spdcinv
