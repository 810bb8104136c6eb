// Copyright 2026 The GFix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Rate-distortion search over the quantization step.
//
// For every candidate step the closed-form modulation maps are quantized and
// scored by J = R + λ·D, where R is the ideal code length (bits) under each
// rank group's empirical histogram and D = Σ ||ΔW_target − A·(step·M̂)·B||²_F.

#ifndef GFIX_RD_OPT_HPP_
#define GFIX_RD_OPT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfix/codec.hpp"
#include "gfix/linalg.hpp"
#include "gfix/mlora.hpp"

namespace gfix {

enum class RatePath {
  kRounding,        // code length of the actual rounded symbols
  kNoiseSimulated,  // histogram of round(M* / step + u), u ~ U(-0.5, 0.5)
};

struct RdConfig {
  double lambda = 0.01;
  std::vector<double> step_grid;
  bool refine = false;
  int max_refine_passes = 8;
  RatePath rate_path = RatePath::kRounding;
  std::uint64_t noise_seed = 0x5eed;
};

struct RdCandidate {
  double step = 0.0;
  double rate_bits = 0.0;
  double distortion = 0.0;
  double objective = 0.0;
};

struct RdResult {
  double lambda = 0.0;
  double chosen_step = 0.0;
  std::vector<QuantizedGroup> groups;
  double rate_bits = 0.0;
  double distortion = 0.0;
  double objective = 0.0;
  int refine_moves = 0;
  std::vector<RdCandidate> candidates;  // every grid point, ascending step
};

// 24 steps spaced geometrically over [1e-4, 1e1] · scale.
inline std::vector<double> DefaultStepGrid(double scale, std::size_t points = 24) {
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
  std::vector<double> grid(points);
  const double lo = std::log(1e-4), hi = std::log(1e1);
  for (std::size_t i = 0; i < points; ++i) {
    const double t = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
    grid[i] = scale * std::exp(lo + t * (hi - lo));
  }
  return grid;
}

namespace detail {

inline void ValidateRdInputs(const std::vector<MloraAdapter>& adapters,
                             const std::vector<Matrix>& targets, const RdConfig& cfg) {
  if (adapters.empty()) throw InvalidArgument("no adapters to optimize");
  if (adapters.size() != targets.size()) {
    throw InvalidArgument("adapter count " + std::to_string(adapters.size()) +
                          " != target count " + std::to_string(targets.size()));
  }
  if (cfg.step_grid.empty()) throw InvalidArgument("empty step grid");
  for (std::size_t i = 0; i < cfg.step_grid.size(); ++i) {
    if (!(cfg.step_grid[i] > 0.0) || !std::isfinite(cfg.step_grid[i])) {
      throw InvalidArgument("step grid entries must be positive and finite");
    }
    if (i > 0 && !(cfg.step_grid[i] > cfg.step_grid[i - 1])) {
      throw InvalidArgument("step grid must be strictly ascending");
    }
  }
  if (!(cfg.lambda >= 0.0) || std::isnan(cfg.lambda)) throw InvalidArgument("lambda must be >= 0");
}

inline double GroupRate(std::span<const std::int32_t> symbols) {
  return SelfInformationBits(BuildPmf(symbols));
}

inline double LayerDistortion(const MloraAdapter& ad, const Matrix& target,
                              const Matrix& dequantized) {
  return FrobNormSquared(Subtract(target, Delta(ad, dequantized)));
}

// Quantizes every group at `step` and scores it.
struct Evaluation {
  std::vector<QuantizedGroup> groups;
  RdCandidate score;
};

inline Evaluation Evaluate(const std::vector<MloraAdapter>& adapters,
                           const std::vector<Matrix>& targets, const std::vector<Matrix>& fitted,
                           const std::vector<std::vector<std::size_t>>& rank_groups, double step,
                           const RdConfig& cfg) {
  Evaluation ev;
  ev.score.step = step;
  for (std::size_t gi = 0; gi < rank_groups.size(); ++gi) {
    std::vector<Matrix> maps;
    std::vector<std::string> ids;
    for (std::size_t li : rank_groups[gi]) {
      maps.push_back(fitted[li]);
      ids.push_back(adapters[li].layer_id);
    }
    const ModulationGroup g = ConcatGroup(maps, ids);
    QuantizedGroup q = Quantize(g, step);
    if (cfg.rate_path == RatePath::kRounding) {
      ev.score.rate_bits += GroupRate(q.symbols);
    } else {
      const ModulationGroup noisy = NoiseSimulate(g, step, cfg.noise_seed + gi);
      ev.score.rate_bits += GroupRate(Quantize(noisy, step).symbols);
    }
    const ModulationGroup deq = Dequantize(q);
    for (std::size_t k = 0; k < rank_groups[gi].size(); ++k) {
      const std::size_t li = rank_groups[gi][k];
      ev.score.distortion += LayerDistortion(adapters[li], targets[li], deq.maps[k]);
    }
    ev.groups.push_back(std::move(q));
  }
  ev.score.objective = ev.score.rate_bits + cfg.lambda * ev.score.distortion;
  return ev;
}

inline double CountTerm(std::uint64_t c) {
  return c == 0 ? 0.0 : static_cast<double>(c) * std::log2(static_cast<double>(c));
}

// Greedy ±1 symbol moves. Because A = U·D and B = Vᵀ with orthonormal U, V,
// the distortion splits per element as d_i²·(M*_ij − step·q_ij)² plus a
// constant, and the rate N·log2 N − Σ c·log2 c changes through two counts, so
// each trial move is O(1). Returns the number of accepted moves.
inline int Refine(std::vector<QuantizedGroup>& groups, const std::vector<MloraAdapter>& adapters,
                  const std::vector<Matrix>& fitted,
                  const std::vector<std::vector<std::size_t>>& rank_groups, const RdConfig& cfg) {
  int moves = 0;
  for (int pass = 0; pass < cfg.max_refine_passes; ++pass) {
    int pass_moves = 0;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      QuantizedGroup& q = groups[gi];
      std::unordered_map<std::int32_t, std::uint64_t> counts;
      for (auto s : q.symbols) ++counts[s];
      const std::size_t r = q.rank;
      const std::size_t per = r * r;
      for (std::size_t idx = 0; idx < q.symbols.size(); ++idx) {
        const std::size_t li = rank_groups[gi][idx / per];
        const std::size_t i = (idx % per) / r;
        const std::size_t j = idx % r;
        const double d2 = adapters[li].singular[i] * adapters[li].singular[i];
        const double target = fitted[li](i, j);
        const std::int32_t s = q.symbols[idx];
        const double cur_err = target - q.step * s;
        const double cur_d = d2 * cur_err * cur_err;

        double best_delta = 0.0;
        std::int32_t best_s = s;
        for (int dir : {-1, 1}) {
          const std::int64_t cand64 = static_cast<std::int64_t>(s) + dir;
          if (cand64 > std::numeric_limits<std::int32_t>::max() ||
              cand64 < -std::numeric_limits<std::int32_t>::max()) {
            continue;
          }
          const auto cand = static_cast<std::int32_t>(cand64);
          const std::uint64_t cs = counts[s];
          auto it = counts.find(cand);
          const std::uint64_t cc = it == counts.end() ? 0 : it->second;
          // Rate = N log N − Σ c log c; only the two touched counts change.
          const double d_rate =
              (CountTerm(cs) + CountTerm(cc)) - (CountTerm(cs - 1) + CountTerm(cc + 1));
          const double new_err = target - q.step * cand;
          const double d_dist = d2 * new_err * new_err - cur_d;
          const double delta = d_rate + cfg.lambda * d_dist;
          if (delta < best_delta) {
            best_delta = delta;
            best_s = cand;
          }
        }
        if (best_s != s) {
          if (--counts[s] == 0) counts.erase(s);
          ++counts[best_s];
          q.symbols[idx] = best_s;
          ++pass_moves;
        }
      }
    }
    moves += pass_moves;
    if (pass_moves == 0) break;
  }
  return moves;
}

}  // namespace detail

inline RdResult RdFit(const std::vector<MloraAdapter>& adapters, const std::vector<Matrix>& targets,
                      const RdConfig& cfg) {
  detail::ValidateRdInputs(adapters, targets, cfg);
  std::vector<Matrix> fitted;
  fitted.reserve(adapters.size());
  for (std::size_t i = 0; i < adapters.size(); ++i) {
    fitted.push_back(FitModulation(adapters[i], targets[i]));
  }
  const auto rank_groups = RankGroups(adapters);

  RdResult result;
  result.lambda = cfg.lambda;
  detail::Evaluation best;
  bool have_best = false;
  // Ascending scan with <= keeps the larger step on ties.
  for (double step : cfg.step_grid) {
    detail::Evaluation ev = detail::Evaluate(adapters, targets, fitted, rank_groups, step, cfg);
    result.candidates.push_back(ev.score);
    if (!have_best || ev.score.objective <= best.score.objective) {
      best = std::move(ev);
      have_best = true;
    }
  }

  result.chosen_step = best.score.step;
  result.groups = std::move(best.groups);
  result.rate_bits = best.score.rate_bits;
  result.distortion = best.score.distortion;
  result.objective = best.score.objective;

  if (cfg.refine) {
    std::vector<QuantizedGroup> refined = result.groups;
    const int moves = detail::Refine(refined, adapters, fitted, rank_groups, cfg);
    if (moves > 0) {
      double rate = 0.0, dist = 0.0;
      for (std::size_t gi = 0; gi < refined.size(); ++gi) {
        rate += detail::GroupRate(refined[gi].symbols);
        const ModulationGroup deq = Dequantize(refined[gi]);
        for (std::size_t k = 0; k < rank_groups[gi].size(); ++k) {
          const std::size_t li = rank_groups[gi][k];
          dist += detail::LayerDistortion(adapters[li], targets[li], deq.maps[k]);
        }
      }
      const double objective = rate + cfg.lambda * dist;
      // Recomputed from scratch, the total can differ from the incremental
      // bookkeeping by roundoff; never report a worse point than the grid's.
      if (objective <= result.objective) {
        result.groups = std::move(refined);
        result.rate_bits = rate;
        result.distortion = dist;
        result.objective = objective;
        result.refine_moves = moves;
      }
    }
  }
  return result;
}

// One RdFit per λ.
inline std::vector<RdResult> RdCurve(const std::vector<MloraAdapter>& adapters,
                                     const std::vector<Matrix>& targets,
                                     const std::vector<double>& lambdas, RdConfig cfg) {
  if (lambdas.empty()) throw InvalidArgument("no lambda values");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0) || !std::isfinite(lambdas[i])) {
      throw InvalidArgument("lambda values must be positive");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (lambdas[i] == lambdas[j]) throw InvalidArgument("duplicate lambda value");
    }
  }
  std::vector<RdResult> out;
  for (double l : lambdas) {
    cfg.lambda = l;
    out.push_back(RdFit(adapters, targets, cfg));
  }
  return out;
}

// Largest |M*| over the closed-form fits; the default grid scales with it.
inline double FittedScale(const std::vector<MloraAdapter>& adapters,
                          const std::vector<Matrix>& targets) {
  double s = 0.0;
  for (std::size_t i = 0; i < adapters.size() && i < targets.size(); ++i) {
    s = std::max(s, MaxAbs(FitModulation(adapters[i], targets[i])));
  }
  return s;
}

// Default λ sweep for rate-distortion curves.
inline const std::vector<double>& DefaultLambdas() {
  static const std::vector<double> kLambdas = {0.03, 0.025, 0.01, 0.005, 0.002};
  return kLambdas;
}

}  // namespace gfix

#endif  // GFIX_RD_OPT_HPP_
