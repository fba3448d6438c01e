#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "preflab/errors.hpp"
#include "preflab/rng.hpp"

namespace preflab {

// Finite prompt/response universe. Responses are atomic arms: one response is
// one decision, there is no token structure.
struct World {
  int n_prompts = 0;
  int n_responses = 0;
  std::vector<double> prompt_dist;  // categorical over prompts
  std::uint64_t seed = 0;

  World() = default;
  World(int prompts, int responses, std::uint64_t world_seed)
      : n_prompts(prompts),
        n_responses(responses),
        prompt_dist(static_cast<std::size_t>(prompts), prompts > 0 ? 1.0 / prompts : 0.0),
        seed(world_seed) {
    validate();
  }
  World(int prompts, int responses, std::vector<double> dist, std::uint64_t world_seed)
      : n_prompts(prompts), n_responses(responses), prompt_dist(std::move(dist)), seed(world_seed) {
    validate();
  }

  void validate() const {
    if (n_prompts < 1) throw InputError("World: need at least one prompt");
    if (n_responses < 2) throw InputError("World: need at least two responses per prompt");
    if (static_cast<int>(prompt_dist.size()) != n_prompts)
      throw InputError("World: prompt_dist size mismatch");
    double total = 0.0;
    for (double p : prompt_dist) {
      if (p < 0.0) throw InputError("World: negative prompt probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InputError("World: prompt_dist must sum to 1");
  }

  void check_prompt(int x) const {
    if (x < 0 || x >= n_prompts) throw InputError("prompt id out of range");
  }
  void check_response(int y) const {
    if (y < 0 || y >= n_responses) throw InputError("response id out of range");
  }

  int sample_prompt(Rng& rng) const { return rng.categorical(prompt_dist); }
};

}  // namespace preflab
