#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cte/train.hpp"
#include "grow_internal.hpp"
#include "parallel.hpp"

namespace cte {

using namespace growdetail;

SplitResult split_node(const PatchWordCache& node_cache, int node_bits,
                       std::span<const BitFunction> candidates,
                       const GradientMatrix& g, int q, int threads) {
  if (q < 1) throw std::invalid_argument("split_node: q must be >= 1");
  if (int(candidates.size()) < q)
    throw std::invalid_argument("split_node: fewer candidates than q");
  if (node_bits < 1 || node_bits > node_cache.prefix_bits)
    throw std::invalid_argument("split_node: bad node bit count");

  const int C = g.classes;
  const int L = node_cache.prefix_bits;
  const uint32_t cells = uint32_t(1) << L;
  const uint32_t zs = uint32_t(1) << node_bits;
  const int zshift = L - node_bits;
  const int nf = int(candidates.size());

  // S(z, j): R contribution of words with node-local word z when candidate
  // j is appended. Gradient sums for the 0 and 1 halves are accumulated
  // separately per full-history cell.
  std::vector<double> S(size_t(zs) * nf, 0.0);
  detail::parallel_for(nf, threads, [&](int64_t begin, int64_t end) {
    std::vector<uint8_t> bits;
    std::vector<double> acc0(size_t(cells) * C), acc1(size_t(cells) * C);
    for (int64_t j = begin; j < end; ++j) {
      candidate_bits(node_cache, candidates[size_t(j)], bits);
      std::fill(acc0.begin(), acc0.end(), 0.0);
      std::fill(acc1.begin(), acc1.end(), 0.0);
      for_each_patch(node_cache, [&](int64_t k, uint32_t i, int, int) {
        const uint16_t cell = node_cache.words[size_t(k)];
        const double* gi = &g.values[size_t(i) * C];
        double* row = bits[size_t(k)] ? &acc1[size_t(cell) * C]
                                      : &acc0[size_t(cell) * C];
        for (int c = 0; c < C; ++c) row[c] += gi[c];
      });
      for (uint32_t cell = 0; cell < cells; ++cell) {
        const uint32_t z = cell >> zshift;
        double v = 0.0;
        for (int c = 0; c < C; ++c)
          v += std::abs(acc0[size_t(cell) * C + c]) +
               std::abs(acc1[size_t(cell) * C + c]);
        S[size_t(z) * nf + j] += v;
      }
    }
  });

  auto subset_score = [&](const std::vector<int>& members) {
    double total = 0.0;
    for (uint32_t z = 0; z < zs; ++z) {
      double best = -1.0;
      for (int j : members) best = std::max(best, S[size_t(z) * nf + j]);
      total += best;
    }
    return total;
  };

  std::vector<int> chosen;
  if (q == 1) {
    int best = 0;
    double best_sum = -1.0;
    for (int j = 0; j < nf; ++j) {
      double sum = 0.0;
      for (uint32_t z = 0; z < zs; ++z) sum += S[size_t(z) * nf + j];
      if (sum > best_sum) {
        best_sum = sum;
        best = j;
      }
    }
    chosen = {best};
  } else {
    // Exhaustive over pairs, then greedy augmentation.
    double best_pair = -1.0;
    int b1 = 0, b2 = 1;
    for (int j1 = 0; j1 < nf; ++j1)
      for (int j2 = j1 + 1; j2 < nf; ++j2) {
        double total = 0.0;
        for (uint32_t z = 0; z < zs; ++z)
          total += std::max(S[size_t(z) * nf + j1], S[size_t(z) * nf + j2]);
        if (total > best_pair) {
          best_pair = total;
          b1 = j1;
          b2 = j2;
        }
      }
    chosen = {b1, b2};
    std::vector<double> zbest(zs);
    for (uint32_t z = 0; z < zs; ++z)
      zbest[z] = std::max(S[size_t(z) * nf + b1], S[size_t(z) * nf + b2]);
    while (int(chosen.size()) < q) {
      int add = -1;
      double add_total = -1.0;
      for (int j = 0; j < nf; ++j) {
        if (std::find(chosen.begin(), chosen.end(), j) != chosen.end())
          continue;
        double total = 0.0;
        for (uint32_t z = 0; z < zs; ++z)
          total += std::max(zbest[z], S[size_t(z) * nf + j]);
        if (total > add_total) {
          add_total = total;
          add = j;
        }
      }
      if (add < 0) break;
      chosen.push_back(add);
      for (uint32_t z = 0; z < zs; ++z)
        zbest[z] = std::max(zbest[z], S[size_t(z) * nf + add]);
    }
  }

  // Redirection: each z goes to the chosen member attaining its max.
  std::vector<uint32_t> table(zs, 0);
  std::vector<uint8_t> used(chosen.size(), 0);
  double score = 0.0;
  for (uint32_t z = 0; z < zs; ++z) {
    int arg = 0;
    double best = S[size_t(z) * nf + chosen[0]];
    for (size_t m = 1; m < chosen.size(); ++m) {
      const double v = S[size_t(z) * nf + chosen[m]];
      if (v > best) {
        best = v;
        arg = int(m);
      }
    }
    table[z] = uint32_t(arg);
    used[size_t(arg)] = 1;
    score += best;
  }

  // Prune members never selected by the table.
  std::vector<uint32_t> remap(chosen.size(), 0);
  SplitResult out;
  for (size_t m = 0; m < chosen.size(); ++m) {
    if (!used[m]) continue;
    remap[m] = uint32_t(out.child_bits.size());
    out.child_bits.push_back(candidates[size_t(chosen[m])]);
  }
  for (uint32_t z = 0; z < zs; ++z) table[z] = remap[table[z]];
  out.table = std::move(table);
  out.score = score;
  return out;
}

namespace {

struct NodeWork {
  std::vector<PatchRef> patches;
  std::vector<uint16_t> words;
};

}  // namespace

LongTree grow_tree(const TrainSample& sample, const GradientMatrix& g,
                   const std::vector<int>& stage_bits,
                   const std::vector<int>& split_factors,
                   const GrowthConfig& config, GrowthStats* stats) {
  config.validate();
  if (stage_bits.empty())
    throw std::invalid_argument("grow_tree: no stages");
  if (split_factors.size() + 1 != stage_bits.size())
    throw std::invalid_argument("grow_tree: need one split factor per non-final stage");
  int total_bits = 0;
  std::vector<int> offsets;
  for (size_t s = 0; s < stage_bits.size(); ++s) {
    if (stage_bits[s] < 1)
      throw std::invalid_argument("grow_tree: stage bits must be >= 1");
    offsets.push_back(total_bits);
    total_bits += stage_bits[s];
  }
  if (total_bits > 16)
    throw std::invalid_argument("grow_tree: total bits must be <= 16");
  for (size_t s = 0; s < split_factors.size(); ++s)
    if (split_factors[s] < 1 || split_factors[s] > (1 << stage_bits[s]) ||
        split_factors[s] > config.split_candidates)
      throw std::invalid_argument("grow_tree: bad split factor");
  if (g.rows != sample.image_count())
    throw std::invalid_argument("grow_tree: gradient rows != images");

  const int stages = int(stage_bits.size());
  std::mt19937_64 rng(config.seed);

  // Enforced spatial positions exclude the split-assigned first slot of
  // every stage after the first.
  std::vector<int> eligible;
  for (int pos = 0; pos < total_bits; ++pos) {
    bool stage_first = false;
    for (int s = 1; s < stages; ++s)
      if (pos == offsets[size_t(s)]) stage_first = true;
    if (!stage_first) eligible.push_back(pos);
  }
  std::vector<uint8_t> enforced(size_t(total_bits), 0);
  if (config.enforce_spatial_bits && config.spatial_bits &&
      !sample.spatial_channels.empty() && !eligible.empty()) {
    const int count =
        draw_int(rng, 1, std::min(config.enforce_max, int(eligible.size())));
    std::vector<int> pool = eligible;
    for (int i = 0; i < count; ++i) {
      const int j = i + int(draw_u64(rng, pool.size() - size_t(i)));
      std::swap(pool[size_t(i)], pool[size_t(j)]);
      enforced[size_t(pool[size_t(i)])] = 1;
    }
    if (stats) stats->enforced_spatial_bits = count;
  }

  LongTree tree;
  tree.stage_bits = stage_bits;
  tree.split_factors = split_factors;
  tree.patch_size = sample.patch_size;
  tree.stages.resize(size_t(stages));

  // Grows one node: the cache already holds the path prefix (and the
  // split-assigned first bit, when there is one).
  auto grow_node = [&](PatchWordCache& cache, std::vector<BitFunction>& bits,
                       int stage) {
    GrowEngine engine{sample, g, config, cache, bits, enforced, rng, stats};
    const int begin = offsets[size_t(stage)];
    const int target = begin + stage_bits[size_t(stage)];
    while (cache.prefix_bits < target) engine.forward_select_next();
    engine.improvement_sweeps(begin, config.replacement_sweeps, false);
    engine.improvement_sweeps(begin, config.refinement_sweeps, true);
    if (stats && stage == stages - 1)
      stats->final_score = engine.full_score();
  };

  // Stage 1: the root covers every patch.
  std::vector<NodeWork> work(1);
  {
    PatchWordCache root_cache = make_cache(sample, {});
    std::vector<BitFunction> bits;
    grow_node(root_cache, bits, 0);
    TreeNode root;
    root.bits = bits;
    tree.stages[0].push_back(std::move(root));
    // Materialize explicit patch refs for routing.
    work[0].patches.resize(size_t(root_cache.patch_count()));
    work[0].words = root_cache.words;
    for_each_patch(root_cache, [&](int64_t k, uint32_t i, int px, int py) {
      work[0].patches[size_t(k)] = PatchRef{i, uint16_t(px), uint16_t(py)};
    });
  }
  std::vector<std::vector<BitFunction>> path_bits(1);
  path_bits[0] = tree.stages[0][0].bits;

  for (int s = 0; s + 1 < stages; ++s) {
    const int q = split_factors[size_t(s)];
    const int zbits = stage_bits[size_t(s)];
    const int zshift = offsets[size_t(s)];
    std::vector<NodeWork> next_work;
    std::vector<std::vector<BitFunction>> next_paths;

    for (size_t n = 0; n < tree.stages[size_t(s)].size(); ++n) {
      NodeWork& nw = work[n];
      PatchWordCache cache;
      cache.sample = &sample;
      cache.prefix_bits = offsets[size_t(s)] + zbits;
      cache.words = std::move(nw.words);
      cache.patches = std::move(nw.patches);

      // Candidate pool for the children's first bits, thresholds set
      // against the node's full history cells.
      const uint32_t cells = uint32_t(1) << cache.prefix_bits;
      CellStats cstats;
      if (config.optimal_thresholds)
        cstats = build_cell_stats(cache, cache.words.data(), cells, g);
      std::vector<Candidate> pool(size_t(config.split_candidates), Candidate{});
      for (auto& c : pool)
        c = draw_general_candidate(rng, sample, config, cache.patch_count());
      std::vector<BitFunction> fns(pool.size());
      detail::parallel_for(
          int64_t(pool.size()), config.threads,
          [&](int64_t begin, int64_t end) {
            std::vector<float> values;
            std::vector<uint64_t> sbuf, sscratch;
            for (int64_t j = begin; j < end; ++j) {
              BitFunction fn = pool[size_t(j)].fn;
              if (fn.thresholded()) {
                candidate_values(cache, fn, values);
                if (config.optimal_thresholds) {
                  SweepResult r = threshold_sweep(cache, cache.words.data(),
                                                  cstats, values, g, sbuf,
                                                  sscratch);
                  fn.threshold = r.score < 0.0
                                     ? (values.empty() ? 0.0f : values[0])
                                     : r.threshold;
                } else if (!values.empty()) {
                  fn.threshold = values[pool[size_t(j)].threshold_patch];
                }
              }
              fns[size_t(j)] = fn;
            }
          });
      if (stats) stats->candidates_evaluated += int64_t(fns.size());

      SplitResult split = split_node(cache, zbits, fns, g, q, config.threads);
      const uint32_t base = uint32_t(next_work.size());
      TreeNode& node = tree.stages[size_t(s)][n];
      node.children.resize(size_t(1) << zbits);
      for (size_t z = 0; z < node.children.size(); ++z)
        node.children[z] = base + split.table[z];

      // Route the node's patches to the children.
      const uint32_t zmask = (uint32_t(1) << zbits) - 1;
      std::vector<NodeWork> children(split.child_bits.size());
      for (size_t k = 0; k < cache.patches.size(); ++k) {
        const uint32_t z = (cache.words[k] >> zshift) & zmask;
        NodeWork& child = children[split.table[z]];
        child.patches.push_back(cache.patches[k]);
        child.words.push_back(cache.words[k]);
      }
      for (size_t ch = 0; ch < children.size(); ++ch) {
        next_work.push_back(std::move(children[ch]));
        std::vector<BitFunction> p = path_bits[n];
        p.push_back(split.child_bits[ch]);
        next_paths.push_back(std::move(p));
      }
    }

    // Grow each child: apply its assigned first bit, then the rest.
    work = std::move(next_work);
    path_bits = std::move(next_paths);
    for (size_t n = 0; n < work.size(); ++n) {
      PatchWordCache cache;
      cache.sample = &sample;
      cache.prefix_bits = offsets[size_t(s + 1)];
      cache.words = std::move(work[n].words);
      cache.patches = std::move(work[n].patches);

      std::vector<BitFunction>& bits = path_bits[n];
      std::vector<uint8_t> first_vals;
      candidate_bits(cache, bits.back(), first_vals);
      for (size_t k = 0; k < cache.words.size(); ++k)
        cache.words[k] = uint16_t(
            cache.words[k] |
            (uint16_t(first_vals[k]) << cache.prefix_bits));
      cache.prefix_bits += 1;

      grow_node(cache, bits, s + 1);
      TreeNode node;
      node.bits.assign(bits.begin() + offsets[size_t(s + 1)], bits.end());
      tree.stages[size_t(s + 1)].push_back(std::move(node));
      work[n].words = std::move(cache.words);
      work[n].patches = std::move(cache.patches);
    }
  }

  tree.validate();
  return tree;
}

}  // namespace cte
