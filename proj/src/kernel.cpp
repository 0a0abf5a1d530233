#include "itr/kernel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace itr {

KernelFamily parse_kernel_family(std::string_view name) {
    if (name == "epanechnikov") return KernelFamily::epanechnikov;
    if (name == "quartic") return KernelFamily::quartic;
    if (name == "gaussian") return KernelFamily::gaussian;
    throw std::invalid_argument("unknown kernel family '" + std::string(name) + "'");
}

std::string to_string(KernelFamily family) {
    switch (family) {
        case KernelFamily::epanechnikov: return "epanechnikov";
        case KernelFamily::quartic: return "quartic";
        case KernelFamily::gaussian: return "gaussian";
    }
    return "unknown";
}

Bandwidth::Bandwidth(double h) : h_(h) {
    if (!(h > 0.0) || !std::isfinite(h)) {
        throw std::invalid_argument("bandwidth must be positive and finite");
    }
}

double KernelSpec::operator()(double u) const noexcept {
    switch (family) {
        case KernelFamily::epanechnikov: {
            const double v = 1.0 - u * u;
            return v > 0.0 ? 0.75 * v : 0.0;
        }
        case KernelFamily::quartic: {
            const double v = 1.0 - u * u;
            return v > 0.0 ? (15.0 / 16.0) * v * v : 0.0;
        }
        case KernelFamily::gaussian:
            return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
    }
    return 0.0;
}

double KernelSpec::support_radius() const noexcept {
    // exp(-0.5 * 38.6^2) / sqrt(2 pi) is below the smallest subnormal double.
    return compact() ? 1.0 : 38.6;
}

double KernelSpec::second_moment() const noexcept {
    switch (family) {
        case KernelFamily::epanechnikov: return 0.2;
        case KernelFamily::quartic: return 1.0 / 7.0;
        case KernelFamily::gaussian: return 1.0;
    }
    return 0.0;
}

double KernelSpec::roughness() const noexcept {
    switch (family) {
        case KernelFamily::epanechnikov: return 0.6;
        case KernelFamily::quartic: return 5.0 / 7.0;
        case KernelFamily::gaussian: return 0.5 / std::sqrt(std::numbers::pi);
    }
    return 0.0;
}

double kernel_eval(const KernelSpec& spec, double u) { return spec(u); }

std::vector<double> scaled_weights(const KernelSpec& spec, Bandwidth h,
                                   std::span<const double> centers, double point) {
    std::vector<double> out;
    out.reserve(centers.size());
    const double bw = h.value();
    for (double c : centers) {
        if (!std::isfinite(c)) throw std::invalid_argument("scaled_weights: non-finite center");
        out.push_back(spec((c - point) / bw) / bw);
    }
    return out;
}

double kde(const KernelSpec& spec, Bandwidth h, std::span<const double> sample, double point) {
    if (sample.empty()) throw std::invalid_argument("kde: empty sample");
    const double bw = h.value();
    double acc = 0.0;
    for (double s : sample) acc += spec((s - point) / bw);
    return acc / (bw * static_cast<double>(sample.size()));
}

}  // namespace itr
