#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace prunekit {

// Flat gradient for one parameter block.
using Grad = std::vector<double>;

// g minus its component along a conflicting direction:
// g - (g·onto / ||onto||^2) * onto. A direction with norm below 1e-12 is
// treated as absent and g is returned unchanged.
Grad project(const Grad& g, const Grad& onto);

// For every gradient g_i: start from g_i, visit all original gradients in a
// seeded shuffled order (one pass, self included — it can never conflict with
// the running value it seeded), and whenever the running vector has negative
// dot with the visited original, project it off. Returns the adjusted
// gradients; inputs must be non-empty and equal-length.
std::vector<Grad> enumerate_project(const std::vector<Grad>& grads, std::uint64_t shuffle_seed);

// Unordered pairs (i, j), i < j, with g_i · g_j < 0.
int count_conflicts(const std::vector<Grad>& grads);

enum class IntegrationRule {
    WeightedOriginals,    // weighted sum of the unprojected gradients (default)
    WeightedProjections,  // weighted sum of the projection-adjusted gradients
};

struct IntegrationConfig {
    double alpha = 0.5;  // exponent on the agreement weight; must be >= 0
    IntegrationRule rule = IntegrationRule::WeightedOriginals;
    std::uint64_t shuffle_seed = 0;
    double gamma_floor = 1e-12;
};

// Agreement-weighted combination of N+1 per-loss gradients:
//   gamma_i = clamp(cos(g_i, g_i_adjusted), 0, 1) ^ alpha
//   out     = (N+1) * sum(gamma_i * v_i) / sum(gamma_i)
// where v is the originals or the adjusted gradients per the rule. alpha = 0
// makes every present gradient weigh 1. If the weights all vanish
// (sum <= gamma_floor) the combination degenerates to the plain sum of the
// originals. The result is linear in a common scaling of the inputs.
Grad integrate(const std::vector<Grad>& originals, const std::vector<Grad>& adjusted, const IntegrationConfig& cfg);

// Convenience: enumerate_project + integrate in one call.
Grad integrate_gradients(const std::vector<Grad>& grads, const IntegrationConfig& cfg);

// One flat gradient per (loss, block). Blocks follow the model's parameter
// order; every loss supplies every block (zero-filled where a subnetwork has
// no use for the block's connections).
struct GradientBundle {
    std::vector<std::string> block_names;
    std::vector<std::vector<Grad>> grads;  // [loss][block]

    std::size_t losses() const { return grads.size(); }
    std::size_t blocks() const { return block_names.size(); }
};

struct IntegrationResult {
    std::vector<Grad> integrated;  // per block
    std::vector<int> conflicts;    // per block, counted on the originals
};

// Integrates each block independently. Block b gets its own shuffle stream
// derived from cfg.shuffle_seed and b, so the visiting order is reproducible
// but not shared across blocks.
IntegrationResult integrate_bundle(const GradientBundle& bundle, const IntegrationConfig& cfg);

}  // namespace prunekit
