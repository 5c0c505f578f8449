#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include "btp/errors.hpp"

namespace btp {

/// Noise coefficient a(u) with the constants it is claimed to satisfy.
struct DiffusionSpec {
    std::string label;
    std::function<double(double)> a;
    std::optional<double> lipschitz_const;  ///< K with |a(u) - a(v)| <= K |u - v|
    double growth_const = 1.0;              ///< C with a(u)^2 <= C (1 + u^2)
    std::optional<double> constant_value;   ///< set when a does not depend on u
    double param = 1.0;

    double operator()(double u) const { return a(u); }

    /// Spot-checks the growth and Lipschitz bounds on a grid of u in [-50, 50].
    void validate() const {
        if (!a) throw ConfigError("diffusion '" + label + "' has no evaluator");
        double prev_u = -50.0, prev_a = a(prev_u);
        for (int i = 1; i <= 2000; ++i) {
            const double u = -50.0 + 0.05 * i, v = a(u);
            if (!std::isfinite(v)) throw ConfigError("diffusion '" + label + "' is not finite");
            if (v * v > growth_const * (1.0 + u * u) * (1.0 + 1e-12))
                throw ConfigError("diffusion '" + label + "' violates its growth bound");
            if (lipschitz_const && std::abs(v - prev_a) > *lipschitz_const * std::abs(u - prev_u) * (1.0 + 1e-9) + 1e-15)
                throw ConfigError("diffusion '" + label + "' violates its Lipschitz bound");
            prev_u = u;
            prev_a = v;
        }
    }
};

/// Builtin coefficients: zero, one (alias additive), linear (c u), sine (alias
/// bounded-sine, c sin u),
/// sqrt-abs (sqrt|u|, continuous but not Lipschitz).
inline DiffusionSpec make_diffusion(const std::string& label, double param = 1.0) {
    DiffusionSpec s;
    s.label = label;
    s.param = param;
    if (label == "zero") {
        s.a = [](double) { return 0.0; };
        s.lipschitz_const = 0.0;
        s.growth_const = 0.0;
        s.constant_value = 0.0;
    } else if (label == "one" || label == "additive") {
        s.a = [param](double) { return param; };
        s.lipschitz_const = 0.0;
        s.growth_const = param * param;
        s.constant_value = param;
    } else if (label == "linear") {
        s.a = [param](double u) { return param * u; };
        s.lipschitz_const = std::abs(param);
        s.growth_const = param * param;
    } else if (label == "sine" || label == "bounded-sine") {
        s.a = [param](double u) { return param * std::sin(u); };
        s.lipschitz_const = std::abs(param);
        s.growth_const = param * param;
    } else if (label == "sqrt-abs") {
        s.a = [param](double u) { return param * std::sqrt(std::abs(u)); };
        s.growth_const = param * param;
    } else {
        throw ConfigError("unknown diffusion label '" + label + "'");
    }
    s.validate();
    return s;
}

}  // namespace btp
