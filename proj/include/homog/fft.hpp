// Discrete sine transform (DST-I) engine used by the spectral preconditioner.
// DST-I diagonalizes the cell-centered Dirichlet Laplacian with ghost value 0:
// eigenvector k has per-axis factor sin(pi (i+1)(k+1)/(n+1)) and eigenvalue
// (4/h^2) sin^2(pi (k+1) / (2(n+1))).
#pragma once

#include <complex>
#include <memory>
#include <vector>

namespace homog {

// Unnormalized DST-I of length n; applying it twice multiplies by (n+1)/2.
class Dst1Plan {
  public:
    explicit Dst1Plan(int n);
    ~Dst1Plan();
    Dst1Plan(const Dst1Plan&) = delete;
    Dst1Plan& operator=(const Dst1Plan&) = delete;

    int size() const { return n_; }
    // Thread-safe: uses thread-local scratch.
    void execute(double* line) const;

  private:
    struct Impl;
    int n_;
    std::unique_ptr<Impl> impl_;
};

// In-place complex FFT of arbitrary length (radix-2 or Bluestein). Exposed for tests.
void fft_inplace(std::vector<std::complex<double>>& data, bool inverse);

}  // namespace homog
