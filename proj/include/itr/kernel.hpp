#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace itr {

enum class KernelFamily { epanechnikov, quartic, gaussian };

/// Parses "epanechnikov" | "quartic" | "gaussian"; throws std::invalid_argument otherwise.
KernelFamily parse_kernel_family(std::string_view name);
std::string to_string(KernelFamily family);

/// Strictly positive, finite smoothing bandwidth on the index scale.
class Bandwidth {
public:
    explicit Bandwidth(double h);
    double value() const noexcept { return h_; }

private:
    double h_;
};

/// Second-order symmetric kernel.
///
/// The gaussian family does not have compact support; its support_radius()
/// is the point beyond which phi(u) underflows to zero in double precision,
/// so windowed sums over |u| <= radius are exact for every family.
struct KernelSpec {
    KernelFamily family = KernelFamily::epanechnikov;

    double operator()(double u) const noexcept;
    double support_radius() const noexcept;
    bool compact() const noexcept { return family != KernelFamily::gaussian; }

    /// int u^2 K(u) du
    double second_moment() const noexcept;
    /// int K(u)^2 du
    double roughness() const noexcept;
};

double kernel_eval(const KernelSpec& spec, double u);

/// Element j is K((centers[j] - point) / h) / h.
std::vector<double> scaled_weights(const KernelSpec& spec, Bandwidth h,
                                   std::span<const double> centers, double point);

/// Kernel density estimate n^-1 sum_j K_h(sample[j] - point).
double kde(const KernelSpec& spec, Bandwidth h, std::span<const double> sample, double point);

/// Composite Simpson rule with an even number of panels.
template <class F>
double simpson(F&& f, double lo, double hi, int panels) {
    if (panels % 2 != 0) ++panels;
    const double step = (hi - lo) / panels;
    double acc = f(lo) + f(hi);
    for (int k = 1; k < panels; ++k) {
        acc += f(lo + k * step) * (k % 2 == 1 ? 4.0 : 2.0);
    }
    return acc * step / 3.0;
}

}  // namespace itr
