#include "prunekit/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "prunekit/ops.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace {

constexpr double kNormFloor = 1e-12;

void check_lengths(const std::vector<Grad>& grads, const char* who) {
    if (grads.empty()) throw std::invalid_argument(std::string(who) + ": no gradients");
    for (const Grad& g : grads) {
        if (g.size() != grads.front().size()) {
            throw std::invalid_argument(std::string(who) + ": gradient length mismatch");
        }
    }
}

// result -= (result·d / ||d||^2) * d, skipping near-zero directions.
void project_off_inplace(Grad& result, const Grad& d) {
    const double nn = dot(d, d);
    if (nn < kNormFloor * kNormFloor) return;
    const double coef = dot(result, d) / nn;
    for (std::size_t i = 0; i < result.size(); ++i) result[i] -= coef * d[i];
}

}  // namespace

Grad project(const Grad& g, const Grad& onto) {
    if (g.size() != onto.size()) throw std::invalid_argument("project: length mismatch");
    Grad out = g;
    project_off_inplace(out, onto);
    return out;
}

std::vector<Grad> enumerate_project(const std::vector<Grad>& grads, std::uint64_t shuffle_seed) {
    check_lengths(grads, "enumerate_project");
    std::vector<Grad> out = grads;
    Rng rng(shuffle_seed);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        std::vector<std::size_t> order = rng.permutation(grads.size());
        Grad& running = out[i];
        for (std::size_t j : order) {
            if (dot(running, grads[j]) < 0.0) project_off_inplace(running, grads[j]);
        }
    }
    return out;
}

int count_conflicts(const std::vector<Grad>& grads) {
    check_lengths(grads, "count_conflicts");
    int n = 0;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        for (std::size_t j = i + 1; j < grads.size(); ++j) {
            if (dot(grads[i], grads[j]) < 0.0) ++n;
        }
    }
    return n;
}

Grad integrate(const std::vector<Grad>& originals, const std::vector<Grad>& adjusted, const IntegrationConfig& cfg) {
    check_lengths(originals, "integrate");
    if (adjusted.size() != originals.size()) {
        throw std::invalid_argument("integrate: adjusted gradient count mismatch");
    }
    for (const Grad& g : adjusted) {
        if (g.size() != originals.front().size()) {
            throw std::invalid_argument("integrate: adjusted gradient length mismatch");
        }
    }
    if (cfg.alpha < 0.0) throw std::invalid_argument("integrate: alpha must be >= 0");
    const std::size_t count = originals.size();
    const std::size_t len = originals.front().size();

    std::vector<double> gamma(count);
    double gamma_sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        // Agreement between a loss's own direction and what survived the
        // projections. Mathematically >= 0; rounding can leave a tiny
        // negative, hence the clamp before the fractional power.
        double c = cosine_similarity(originals[i], adjusted[i]);
        c = std::clamp(c, 0.0, 1.0);
        gamma[i] = std::pow(c, cfg.alpha);
        gamma_sum += gamma[i];
    }

    // With one gradient the weight cancels (gamma/gamma_sum == 1 exactly in
    // the math), so hand it back untouched instead of rounding through the
    // multiply-divide.
    if (count == 1 && gamma_sum > cfg.gamma_floor) {
        return cfg.rule == IntegrationRule::WeightedOriginals ? originals[0] : adjusted[0];
    }

    Grad out(len, 0.0);
    if (gamma_sum <= cfg.gamma_floor) {
        // No loss expressed a usable direction; fall back to the plain sum.
        for (const Grad& g : originals) {
            for (std::size_t k = 0; k < len; ++k) out[k] += g[k];
        }
        return out;
    }
    const std::vector<Grad>& v = cfg.rule == IntegrationRule::WeightedOriginals ? originals : adjusted;
    const double scale = static_cast<double>(count) / gamma_sum;
    for (std::size_t i = 0; i < count; ++i) {
        const double w = gamma[i] * scale;
        if (w == 0.0) continue;
        const Grad& g = v[i];
        for (std::size_t k = 0; k < len; ++k) out[k] += w * g[k];
    }
    return out;
}

Grad integrate_gradients(const std::vector<Grad>& grads, const IntegrationConfig& cfg) {
    return integrate(grads, enumerate_project(grads, cfg.shuffle_seed), cfg);
}

IntegrationResult integrate_bundle(const GradientBundle& bundle, const IntegrationConfig& cfg) {
    if (bundle.grads.empty()) throw std::invalid_argument("integrate_bundle: no losses");
    for (const auto& per_loss : bundle.grads) {
        if (per_loss.size() != bundle.blocks()) {
            throw std::invalid_argument("integrate_bundle: a loss is missing blocks");
        }
    }
    IntegrationResult res;
    res.integrated.resize(bundle.blocks());
    res.conflicts.resize(bundle.blocks());
    for (std::size_t b = 0; b < bundle.blocks(); ++b) {
        std::vector<Grad> per_block(bundle.losses());
        for (std::size_t l = 0; l < bundle.losses(); ++l) per_block[l] = bundle.grads[l][b];
        IntegrationConfig block_cfg = cfg;
        block_cfg.shuffle_seed = derive_seed(cfg.shuffle_seed, b);
        res.conflicts[b] = count_conflicts(per_block);
        res.integrated[b] = integrate(per_block, enumerate_project(per_block, block_cfg.shuffle_seed), block_cfg);
    }
    return res;
}

}  // namespace prunekit
