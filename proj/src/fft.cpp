#include "homog/fft.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace homog {

namespace {

using cplx = std::complex<double>;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Iterative radix-2 Cooley-Tukey, in place, size must be a power of two.
void fft_pow2(cplx* a, std::size_t n, bool inverse) {
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cplx u = a[i + k];
                const cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) a[i] *= inv;
    }
}

// Bluestein's chirp-z for arbitrary sizes.
struct BluesteinPlan {
    std::size_t m = 0;      // logical size
    std::size_t padded = 0; // pow2 convolution size
    std::vector<cplx> chirp;      // e^{-i pi k^2 / m}
    std::vector<cplx> kernel_fft; // FFT of wrapped conjugate chirp

    explicit BluesteinPlan(std::size_t m_in) : m(m_in) {
        padded = next_pow2(2 * m - 1);
        chirp.resize(m);
        for (std::size_t k = 0; k < m; ++k) {
            // k^2 mod 2m keeps the angle argument bounded
            const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % (2 * m);
            const double ang = -M_PI * static_cast<double>(k2) / static_cast<double>(m);
            chirp[k] = cplx(std::cos(ang), std::sin(ang));
        }
        std::vector<cplx> b(padded, cplx(0.0, 0.0));
        b[0] = std::conj(chirp[0]);
        for (std::size_t k = 1; k < m; ++k) b[k] = b[padded - k] = std::conj(chirp[k]);
        fft_pow2(b.data(), padded, false);
        kernel_fft = std::move(b);
    }

    void execute(cplx* data, bool inverse, std::vector<cplx>& scratch) const {
        scratch.assign(padded, cplx(0.0, 0.0));
        for (std::size_t k = 0; k < m; ++k)
            scratch[k] = data[k] * (inverse ? std::conj(chirp[k]) : chirp[k]);
        fft_pow2(scratch.data(), padded, false);
        if (!inverse) {
            for (std::size_t k = 0; k < padded; ++k) scratch[k] *= kernel_fft[k];
        } else {
            for (std::size_t k = 0; k < padded; ++k) scratch[k] *= std::conj(kernel_fft[k]);
        }
        fft_pow2(scratch.data(), padded, true);
        const double inv_m = inverse ? 1.0 / static_cast<double>(m) : 1.0;
        for (std::size_t k = 0; k < m; ++k)
            data[k] = scratch[k] * (inverse ? std::conj(chirp[k]) : chirp[k]) * inv_m;
    }
};

}  // namespace

void fft_inplace(std::vector<cplx>& data, bool inverse) {
    const std::size_t n = data.size();
    if (n <= 1) return;
    if (is_pow2(n)) {
        fft_pow2(data.data(), n, inverse);
        return;
    }
    BluesteinPlan plan(n);
    std::vector<cplx> scratch;
    plan.execute(data.data(), inverse, scratch);
}

struct Dst1Plan::Impl {
    std::size_t m = 0;  // 2(n+1)
    bool pow2 = false;
    std::unique_ptr<BluesteinPlan> bluestein;
};

Dst1Plan::Dst1Plan(int n) : n_(n), impl_(new Impl) {
    if (n < 1) throw std::invalid_argument("dst1: size must be >= 1");
    impl_->m = 2 * (static_cast<std::size_t>(n) + 1);
    impl_->pow2 = is_pow2(impl_->m);
    if (!impl_->pow2) impl_->bluestein = std::make_unique<BluesteinPlan>(impl_->m);
}

Dst1Plan::~Dst1Plan() = default;

void Dst1Plan::execute(double* line) const {
    // odd extension, complex FFT, S[k] = -Im(V[k+1]) / 2
    thread_local std::vector<cplx> buf;
    thread_local std::vector<cplx> scratch;
    const std::size_t m = impl_->m;
    const auto n = static_cast<std::size_t>(n_);
    buf.assign(m, cplx(0.0, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        buf[i + 1] = cplx(line[i], 0.0);
        buf[m - 1 - i] = cplx(-line[i], 0.0);
    }
    if (impl_->pow2)
        fft_pow2(buf.data(), m, false);
    else
        impl_->bluestein->execute(buf.data(), false, scratch);
    for (std::size_t k = 0; k < n; ++k) line[k] = -0.5 * buf[k + 1].imag();
}

}  // namespace homog
