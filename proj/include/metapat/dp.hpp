#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "metapat/error.hpp"
#include "metapat/special.hpp"

namespace metapat {

enum class Side { positive, negative };

inline constexpr double kDefaultSigma0Sq = 10.0;
inline constexpr double kDefaultAlpha = 1.0;

/// One CRP table: sufficient statistics of its member Z-values.
struct Component {
    std::size_t count = 0;
    double sum_z = 0.0;
};

/// Dirichlet-process mixture for one side (up or down) of one study.
///
/// Component means have a N(0, sigma0_sq) base truncated to the side's half
/// line and every member Z is N(mu, 1) around its component mean. Only the
/// count and sum of each component are kept; the posterior of mu given the
/// members is then a truncated normal with
///   m = sum * sigma0_sq / (count * sigma0_sq + 1),  v = sigma0_sq / (count * sigma0_sq + 1).
/// The predictive density of a new Z is
///   N(z; m, 1 + v) * Phi(+-m'/sqrt(v')) / Phi(+-m/sqrt(v)),
/// with (m', v') the posterior after also observing z. An empty component
/// gives the prior predictive.
class DpSide {
public:
    static constexpr std::size_t kNew = static_cast<std::size_t>(-1);

    DpSide(Side side = Side::positive, double alpha = kDefaultAlpha, double sigma0_sq = kDefaultSigma0Sq)
        : side_(side), alpha_(alpha), sigma0_sq_(sigma0_sq) {
        if (!(alpha > 0.0)) throw DomainError("DpSide: alpha must be positive");
        if (!(sigma0_sq > 0.0)) throw DomainError("DpSide: sigma0_sq must be positive");
        new_log_norm_ = log_mass(0, 0.0);
    }

    Side side() const noexcept { return side_; }
    double alpha() const noexcept { return alpha_; }
    double sigma0_sq() const noexcept { return sigma0_sq_; }
    std::size_t size() const noexcept { return components_.size(); }
    /// Number of observations seated on this side.
    std::size_t total() const noexcept { return total_; }
    const Component& component(std::size_t k) const {
        check_index(k);
        return components_[k];
    }
    const std::vector<Component>& components() const noexcept { return components_; }

    double log_predictive_existing(std::size_t k, double z) const {
        check_index(k);
        const Component& c = components_[k];
        return log_predictive(c.count, c.sum_z, log_norm_[k], z);
    }
    double predictive_existing(std::size_t k, double z) const { return std::exp(log_predictive_existing(k, z)); }

    double log_predictive_new(double z) const { return log_predictive(0, 0.0, new_log_norm_, z); }
    double predictive_new(double z) const { return std::exp(log_predictive_new(z)); }

    /// CRP seating weights with the current occupancy: n_k / (n + alpha) for
    /// an existing table and alpha / (n + alpha) for a new one.
    double seat_weight(std::size_t k) const {
        check_index(k);
        return static_cast<double>(components_[k].count) / (static_cast<double>(total_) + alpha_);
    }
    double new_seat_weight() const { return alpha_ / (static_cast<double>(total_) + alpha_); }

    /// Seats z at table k (or a fresh table for kNew); returns its index.
    std::size_t assign(std::size_t k, double z) {
        if (k == kNew) {
            components_.push_back({1, z});
            log_norm_.push_back(log_mass(1, z));
            ++total_;
            return components_.size() - 1;
        }
        check_index(k);
        Component& c = components_[k];
        ++c.count;
        c.sum_z += z;
        log_norm_[k] = log_mass(c.count, c.sum_z);
        ++total_;
        return k;
    }

    /// Unseats z from table k. Returns true when the table emptied and was
    /// erased; every index above k then shifts down by one.
    bool remove(std::size_t k, double z) {
        check_index(k);
        Component& c = components_[k];
        if (c.count == 0) throw DomainError("DpSide::remove: component is empty");
        --total_;
        if (--c.count == 0) {
            components_.erase(components_.begin() + static_cast<std::ptrdiff_t>(k));
            log_norm_.erase(log_norm_.begin() + static_cast<std::ptrdiff_t>(k));
            return true;
        }
        c.sum_z -= z;
        log_norm_[k] = log_mass(c.count, c.sum_z);
        return false;
    }

    /// Replaces all tables at once (checkpoint restore, initialization).
    void set_components(std::vector<Component> comps) {
        components_ = std::move(comps);
        log_norm_.clear();
        total_ = 0;
        for (const auto& c : components_) {
            if (c.count == 0) throw DomainError("DpSide: component with zero count");
            log_norm_.push_back(log_mass(c.count, c.sum_z));
            total_ += c.count;
        }
    }

private:
    double sign() const noexcept { return side_ == Side::positive ? 1.0 : -1.0; }

    // log of the posterior mass of the side's half line under the untruncated
    // posterior N(m, v) after `count` observations summing to `sum`.
    double log_mass(std::size_t count, double sum) const {
        const double denom = static_cast<double>(count) * sigma0_sq_ + 1.0;
        const double v = sigma0_sq_ / denom;
        const double m = sum * v;
        return special::normal_log_cdf(sign() * m / std::sqrt(v));
    }

    double log_predictive(std::size_t count, double sum, double log_norm, double z) const {
        const double denom = static_cast<double>(count) * sigma0_sq_ + 1.0;
        const double v = sigma0_sq_ / denom;
        const double m = sum * v;
        return special::normal_log_pdf(z, m, 1.0 + v) + log_mass(count + 1, sum + z) - log_norm;
    }

    void check_index(std::size_t k) const {
        if (k >= components_.size())
            throw DomainError("DpSide: component index " + std::to_string(k) + " out of range");
    }

    Side side_;
    double alpha_;
    double sigma0_sq_;
    std::vector<Component> components_;
    std::vector<double> log_norm_;
    std::size_t total_ = 0;
    double new_log_norm_ = 0.0;
};

} // namespace metapat
