#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cte/train.hpp"
#include "grow_internal.hpp"
#include "parallel.hpp"

namespace cte {

using namespace growdetail;

void GrowthConfig::validate() const {
  if (candidate_count < 1)
    throw std::invalid_argument("GrowthConfig: candidate count must be >= 1");
  if (replacement_sweeps < 0 || refinement_sweeps < 0)
    throw std::invalid_argument("GrowthConfig: sweep counts must be >= 0");
  if (split_candidates < 2)
    throw std::invalid_argument("GrowthConfig: split candidates must be >= 2");
  if (enforce_max < 1)
    throw std::invalid_argument("GrowthConfig: enforce max must be >= 1");
}

TrainSample make_sample(std::vector<ExtendedImage> images, int patch_size,
                        const PixelRegion& area) {
  if (images.empty()) throw std::invalid_argument("make_sample: no images");
  const int w = images.front().width, h = images.front().height;
  const int d = images.front().depth();
  for (const auto& img : images)
    if (img.width != w || img.height != h || img.depth() != d)
      throw std::invalid_argument("make_sample: non-uniform image dims");
  PixelRegion valid = valid_area(patch_size, w, h);
  if (!valid.contains(area) || area.size() < 1)
    throw std::invalid_argument("make_sample: area outside valid region");

  TrainSample s;
  s.images = std::move(images);
  s.patch_size = patch_size;
  s.area = area;
  for (int c = 0; c < d; ++c) {
    switch (s.images.front().channel(c).kind) {
      case ChannelKind::Original:
      case ChannelKind::GradientNorm:
      case ChannelKind::GradientOriented:
        s.value_channels.push_back(uint16_t(c));
        break;
      case ChannelKind::Integral:
        s.integral_channels.push_back(uint16_t(c));
        break;
      case ChannelKind::SpatialHorizontal:
      case ChannelKind::SpatialVertical:
        s.spatial_channels.push_back(uint16_t(c));
        break;
    }
  }
  if (s.value_channels.empty())
    throw std::invalid_argument("make_sample: no value channels");
  return s;
}

PatchRef PatchWordCache::patch(int64_t k) const {
  if (!patches.empty()) return patches[size_t(k)];
  const int64_t per = sample->patches_per_image();
  const int64_t i = k / per;
  const int64_t r = k % per;
  PatchRef p;
  p.image = uint32_t(i);
  p.px = uint16_t(sample->area.x0 + int(r % sample->area.width()));
  p.py = uint16_t(sample->area.y0 + int(r / sample->area.width()));
  return p;
}

PatchWordCache make_cache(const TrainSample& sample,
                          std::span<const BitFunction> bits) {
  PatchWordCache cache;
  cache.sample = &sample;
  cache.prefix_bits = int(bits.size());
  cache.words.assign(size_t(sample.patch_count()), 0);
  if (!bits.empty()) {
    for_each_patch(cache, [&](int64_t k, uint32_t i, int px, int py) {
      uint16_t w = 0;
      for (size_t b = 0; b < bits.size(); ++b)
        w |= uint16_t(eval_bit_unchecked(bits[b], sample.images[i], px, py))
             << b;
      cache.words[size_t(k)] = w;
    });
  }
  return cache;
}

namespace growdetail {

uint32_t image_of_patch(const PatchWordCache& cache, int64_t k) {
  if (!cache.patches.empty()) return cache.patches[size_t(k)].image;
  return uint32_t(k / cache.sample->patches_per_image());
}

void radix_sort_u64(std::vector<uint64_t>& keys,
                    std::vector<uint64_t>& scratch) {
  const size_t n = keys.size();
  scratch.resize(n);
  std::vector<size_t> count(1 << 16);
  uint64_t* src = keys.data();
  uint64_t* dst = scratch.data();
  for (int pass = 0; pass < 4; ++pass) {
    const int shift = pass * 16;
    std::fill(count.begin(), count.end(), size_t(0));
    for (size_t i = 0; i < n; ++i) ++count[(src[i] >> shift) & 0xFFFF];
    if (count[(src[0] >> shift) & 0xFFFF] == n) continue;  // single bucket
    size_t run = 0;
    for (size_t b = 0; b < count.size(); ++b) {
      size_t c = count[b];
      count[b] = run;
      run += c;
    }
    for (size_t i = 0; i < n; ++i) dst[count[(src[i] >> shift) & 0xFFFF]++] = src[i];
    std::swap(src, dst);
  }
  if (src != keys.data())
    std::copy(src, src + n, keys.data());
}

CellStats build_cell_stats(const PatchWordCache& cache, const uint16_t* keys,
                           uint32_t cells, const GradientMatrix& g) {
  const int C = g.classes;
  CellStats s;
  s.cells = cells;
  s.sum.assign(size_t(cells) * C, 0.0);
  s.count.assign(cells, 0);
  for_each_patch(cache, [&](int64_t k, uint32_t i, int, int) {
    const uint16_t cell = keys[k];
    const double* gi = &g.values[size_t(i) * C];
    double* row = &s.sum[size_t(cell) * C];
    for (int c = 0; c < C; ++c) row[c] += gi[c];
    ++s.count[cell];
  });
  s.mean.assign(size_t(cells) * C, 0.0);
  for (uint32_t cell = 0; cell < cells; ++cell)
    if (s.count[cell] > 0)
      for (int c = 0; c < C; ++c)
        s.mean[size_t(cell) * C + c] =
            s.sum[size_t(cell) * C + c] / double(s.count[cell]);
  return s;
}

double score_centered(const PatchWordCache& cache, const uint16_t* keys,
                      const CellStats& stats, const uint8_t* bits,
                      const GradientMatrix& g) {
  const int C = g.classes;
  std::vector<double> active(size_t(stats.cells) * C, 0.0);
  std::vector<int64_t> m(stats.cells, 0);
  for_each_patch(cache, [&](int64_t k, uint32_t i, int, int) {
    if (!bits[k]) return;
    const uint16_t cell = keys[k];
    const double* gi = &g.values[size_t(i) * C];
    double* row = &active[size_t(cell) * C];
    for (int c = 0; c < C; ++c) row[c] += gi[c];
    ++m[cell];
  });
  double total = 0.0;
  for (uint32_t cell = 0; cell < stats.cells; ++cell)
    for (int c = 0; c < C; ++c)
      total += std::abs(active[size_t(cell) * C + c] -
                        double(m[cell]) * stats.mean[size_t(cell) * C + c]);
  return total;
}

void candidate_values(const PatchWordCache& cache, const BitFunction& fn,
                      std::vector<float>& out) {
  out.resize(size_t(cache.patch_count()));
  const auto& images = cache.sample->images;
  for_each_patch(cache, [&](int64_t k, uint32_t i, int px, int py) {
    // +0.0f canonicalizes negative zero for the sort keys.
    out[size_t(k)] = bit_underlying_value(fn, images[i], px, py) + 0.0f;
  });
}

void candidate_bits(const PatchWordCache& cache, const BitFunction& fn,
                    std::vector<uint8_t>& out) {
  out.resize(size_t(cache.patch_count()));
  const auto& images = cache.sample->images;
  for_each_patch(cache, [&](int64_t k, uint32_t i, int px, int py) {
    out[size_t(k)] = uint8_t(eval_bit_unchecked(fn, images[i], px, py));
  });
}

SweepResult threshold_sweep(const PatchWordCache& cache, const uint16_t* keys,
                            const CellStats& stats,
                            const std::vector<float>& values,
                            const GradientMatrix& g,
                            std::vector<uint64_t>& sort_buf,
                            std::vector<uint64_t>& sort_scratch) {
  const int C = g.classes;
  const int64_t P = cache.patch_count();
  sort_buf.resize(size_t(P));
  for (int64_t k = 0; k < P; ++k)
    sort_buf[size_t(k)] =
        (uint64_t(flip_float(values[size_t(k)])) << 32) | uint64_t(k);
  radix_sort_u64(sort_buf, sort_scratch);

  std::vector<double> active(size_t(stats.cells) * C, 0.0);
  std::vector<int64_t> m(stats.cells, 0);
  std::vector<double> contrib(stats.cells, 0.0);
  double total = 0.0;
  SweepResult best;

  int64_t pos = P - 1;
  while (pos >= 0) {
    const uint32_t value_key = uint32_t(sort_buf[size_t(pos)] >> 32);
    // Flip every patch sharing this underlying value.
    while (pos >= 0 && uint32_t(sort_buf[size_t(pos)] >> 32) == value_key) {
      const int64_t k = int64_t(sort_buf[size_t(pos)] & 0xFFFFFFFFu);
      const uint16_t cell = keys[k];
      const uint32_t i = image_of_patch(cache, k);
      total -= contrib[cell];
      const double* gi = &g.values[size_t(i) * C];
      double* row = &active[size_t(cell) * C];
      for (int c = 0; c < C; ++c) row[c] += gi[c];
      ++m[cell];
      double fresh = 0.0;
      const double* mean = &stats.mean[size_t(cell) * C];
      for (int c = 0; c < C; ++c)
        fresh += std::abs(row[c] - double(m[cell]) * mean[c]);
      contrib[cell] = fresh;
      total += fresh;
      --pos;
    }
    if (pos < 0) break;  // everything flipped: the all-ones split scores 0
    const int64_t k_lo = int64_t(sort_buf[size_t(pos)] & 0xFFFFFFFFu);
    const float hi = values[size_t(
        sort_buf[size_t(pos + 1)] & 0xFFFFFFFFu)];
    const float lo = values[size_t(k_lo)];
    float t = float((double(lo) + double(hi)) * 0.5);
    if (!(t > lo)) t = hi;  // adjacent representables: keep the partition
    if (total > best.score) {
      best.score = total;
      best.threshold = t;
    }
  }
  return best;
}

Candidate draw_spatial_candidate(std::mt19937_64& rng, const TrainSample& s,
                                 int64_t patch_count) {
  Candidate cand;
  cand.fn.kind = BitKind::GetBit;
  const uint16_t ch =
      s.spatial_channels[draw_u64(rng, s.spatial_channels.size())];
  cand.fn.channel = ch;
  const int width = s.images.front().channel(ch).bit_width;
  cand.fn.bit_index = uint8_t(draw_u64(rng, uint64_t(width)));
  cand.threshold_patch =
      uint32_t(draw_u64(rng, uint64_t(std::max<int64_t>(patch_count, 1))));
  return cand;
}

Candidate draw_general_candidate(std::mt19937_64& rng, const TrainSample& s,
                                 const GrowthConfig& config,
                                 int64_t patch_count) {
  std::vector<BitKind> kinds{BitKind::OnePixel, BitKind::TwoPixel};
  if (!s.integral_channels.empty()) kinds.push_back(BitKind::IntegralBit);
  if (config.spatial_bits && !config.enforce_spatial_bits &&
      !s.spatial_channels.empty())
    kinds.push_back(BitKind::GetBit);

  const BitKind kind = kinds[draw_u64(rng, kinds.size())];
  if (kind == BitKind::GetBit)
    return draw_spatial_candidate(rng, s, patch_count);

  const int r = s.patch_size / 2;
  Candidate cand;
  cand.fn.kind = kind;
  if (kind == BitKind::IntegralBit) {
    cand.fn.channel =
        s.integral_channels[draw_u64(rng, s.integral_channels.size())];
    int a = draw_int(rng, -r, r), b = a;
    while (b == a) b = draw_int(rng, -r, r);
    cand.fn.x1 = int8_t(std::min(a, b));
    cand.fn.x2 = int8_t(std::max(a, b));
    a = draw_int(rng, -r, r);
    b = a;
    while (b == a) b = draw_int(rng, -r, r);
    cand.fn.y1 = int8_t(std::min(a, b));
    cand.fn.y2 = int8_t(std::max(a, b));
  } else {
    cand.fn.channel = s.value_channels[draw_u64(rng, s.value_channels.size())];
    cand.fn.x1 = int8_t(draw_int(rng, -r, r));
    cand.fn.y1 = int8_t(draw_int(rng, -r, r));
    if (kind == BitKind::TwoPixel) {
      cand.fn.x2 = int8_t(draw_int(rng, -r, r));
      cand.fn.y2 = int8_t(draw_int(rng, -r, r));
    }
  }
  cand.threshold_patch =
      uint32_t(draw_u64(rng, uint64_t(std::max<int64_t>(patch_count, 1))));
  return cand;
}

std::vector<uint8_t> GrowEngine::extract_slot(int slot) const {
  std::vector<uint8_t> out(cache.words.size());
  for (size_t k = 0; k < cache.words.size(); ++k)
    out[k] = uint8_t((cache.words[k] >> slot) & 1u);
  return out;
}

void GrowEngine::write_slot(int slot, const std::vector<uint8_t>& values) {
  const uint16_t mask = uint16_t(~(uint16_t(1) << slot));
  for (size_t k = 0; k < cache.words.size(); ++k)
    cache.words[k] =
        uint16_t((cache.words[k] & mask) | (uint16_t(values[k]) << slot));
}

double GrowEngine::acceptance_score(int slot,
                                    const std::vector<uint8_t>& cand_bits) {
  const int nbits = int(bits.size());
  const int cen = nbits - 1;
  const uint32_t cells = uint32_t(1) << cen;
  const uint16_t key_mask = uint16_t(cells - 1);
  const int C = g.classes;

  std::vector<double> sum(size_t(cells) * C, 0.0);
  std::vector<int64_t> count(cells, 0);
  std::vector<double> active(size_t(cells) * C, 0.0);
  std::vector<int64_t> m(cells, 0);

  const uint16_t slot_mask = uint16_t(~(uint16_t(1) << slot));
  for_each_patch(cache, [&](int64_t k, uint32_t i, int, int) {
    const uint16_t w = uint16_t((cache.words[size_t(k)] & slot_mask) |
                                (uint16_t(cand_bits[size_t(k)]) << slot));
    const uint16_t key = uint16_t(w & key_mask);
    const double* gi = &g.values[size_t(i) * C];
    double* srow = &sum[size_t(key) * C];
    for (int c = 0; c < C; ++c) srow[c] += gi[c];
    ++count[key];
    if ((w >> cen) & 1u) {
      double* arow = &active[size_t(key) * C];
      for (int c = 0; c < C; ++c) arow[c] += gi[c];
      ++m[key];
    }
  });
  double total = 0.0;
  for (uint32_t cell = 0; cell < cells; ++cell) {
    if (count[cell] == 0) continue;
    const double inv = 1.0 / double(count[cell]);
    for (int c = 0; c < C; ++c)
      total += std::abs(active[size_t(cell) * C + c] -
                        double(m[cell]) * (sum[size_t(cell) * C + c] * inv));
  }
  return total;
}

double GrowEngine::full_score() {
  if (bits.empty()) return 0.0;
  return acceptance_score(0, extract_slot(0));
}

void GrowEngine::forward_select_next() {
  const int pos = cache.prefix_bits;
  const uint32_t cells = uint32_t(1) << pos;
  const int64_t P = cache.patch_count();
  const CellStats cell_stats = build_cell_stats(cache, cache.words.data(), cells, g);
  const bool spatial_slot = pos < int(enforced.size()) && enforced[size_t(pos)];

  std::vector<Candidate> cands(size_t(config.candidate_count), Candidate{});
  for (auto& c : cands)
    c = spatial_slot ? draw_spatial_candidate(rng, sample, P)
                     : draw_general_candidate(rng, sample, config, P);

  struct Scored {
    double score = -1.0;
    float threshold = 0.0f;
  };
  std::vector<Scored> scored(cands.size());

  detail::parallel_for(
      int64_t(cands.size()), config.threads, [&](int64_t begin, int64_t end) {
        std::vector<float> values;
        std::vector<uint8_t> bitbuf;
        std::vector<uint64_t> sbuf, sscratch;
        for (int64_t ci = begin; ci < end; ++ci) {
          const Candidate& cand = cands[size_t(ci)];
          Scored r;
          if (cand.fn.thresholded()) {
            candidate_values(cache, cand.fn, values);
            if (config.optimal_thresholds) {
              SweepResult s = threshold_sweep(cache, cache.words.data(),
                                              cell_stats, values, g, sbuf,
                                              sscratch);
              if (s.score < 0.0) {
                r.score = 0.0;
                r.threshold = values.empty() ? 0.0f : values[0];
              } else {
                r.score = s.score;
                r.threshold = s.threshold;
              }
            } else {
              r.threshold = values[cand.threshold_patch];
              bitbuf.resize(values.size());
              for (size_t k = 0; k < values.size(); ++k)
                bitbuf[k] = values[k] >= r.threshold;
              r.score = score_centered(cache, cache.words.data(), cell_stats,
                                       bitbuf.data(), g);
            }
          } else {
            candidate_bits(cache, cand.fn, bitbuf);
            r.score = score_centered(cache, cache.words.data(), cell_stats,
                                     bitbuf.data(), g);
          }
          scored[size_t(ci)] = r;
        }
      });
  if (stats) stats->candidates_evaluated += int64_t(cands.size());

  size_t best = 0;
  for (size_t ci = 1; ci < cands.size(); ++ci)
    if (scored[ci].score > scored[best].score) best = ci;

  BitFunction chosen = cands[best].fn;
  if (chosen.thresholded()) chosen.threshold = scored[best].threshold;
  bits.push_back(chosen);

  std::vector<uint8_t> chosen_bits;
  candidate_bits(cache, chosen, chosen_bits);
  for (size_t k = 0; k < cache.words.size(); ++k)
    cache.words[k] |= uint16_t(chosen_bits[k]) << pos;
  cache.prefix_bits = pos + 1;
}

void GrowEngine::improvement_sweeps(int slot_begin, int sweeps, bool refine) {
  const int nbits = int(bits.size());
  if (nbits == 0 || sweeps <= 0) return;
  const int r = sample.patch_size / 2;
  const int64_t P = cache.patch_count();
  const uint32_t cond_cells = uint32_t(1) << (nbits - 1);

  std::vector<uint16_t> cond_keys(size_t(P), 0);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (int slot = slot_begin; slot < nbits; ++slot) {
      const BitFunction incumbent = bits[size_t(slot)];
      if (refine && incumbent.kind == BitKind::GetBit) continue;

      const double inc_score = acceptance_score(slot, extract_slot(slot));

      // Candidate pool for this slot.
      std::vector<Candidate> cands;
      if (refine) {
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            BitFunction v = incumbent;
            v.x1 = int8_t(v.x1 + dx);
            v.y1 = int8_t(v.y1 + dy);
            if (v.kind != BitKind::OnePixel) {
              v.x2 = int8_t(v.x2 + dx);
              v.y2 = int8_t(v.y2 + dy);
            }
            if (std::abs(int(v.x1)) > r || std::abs(int(v.y1)) > r ||
                std::abs(int(v.x2)) > r || std::abs(int(v.y2)) > r)
              continue;
            cands.push_back(Candidate{v, 0});
          }
      } else {
        const bool spatial_slot =
            config.enforce_spatial_bits && incumbent.kind == BitKind::GetBit;
        cands.resize(size_t(config.candidate_count));
        for (auto& c : cands)
          c = spatial_slot ? draw_spatial_candidate(rng, sample, P)
                           : draw_general_candidate(rng, sample, config, P);
      }
      if (cands.empty()) continue;

      // Conditioning keys for threshold sweeps: all bits except this slot.
      const uint16_t low_mask = uint16_t((uint32_t(1) << slot) - 1);
      for (int64_t k = 0; k < P; ++k) {
        const uint16_t w = cache.words[size_t(k)];
        cond_keys[size_t(k)] =
            uint16_t((w & low_mask) | ((w >> (slot + 1)) << slot));
      }
      CellStats cond_stats;
      const bool need_sweep = config.optimal_thresholds;
      if (need_sweep)
        cond_stats = build_cell_stats(cache, cond_keys.data(), cond_cells, g);

      struct Scored {
        double score = -1.0;
        float threshold = 0.0f;
      };
      std::vector<Scored> scored(cands.size());

      detail::parallel_for(
          int64_t(cands.size()), config.threads,
          [&](int64_t begin, int64_t end) {
            std::vector<float> values;
            std::vector<uint8_t> bitbuf;
            std::vector<uint64_t> sbuf, sscratch;
            for (int64_t ci = begin; ci < end; ++ci) {
              const Candidate& cand = cands[size_t(ci)];
              Scored sc;
              if (cand.fn.thresholded()) {
                candidate_values(cache, cand.fn, values);
                if (config.optimal_thresholds) {
                  SweepResult s =
                      threshold_sweep(cache, cond_keys.data(), cond_stats,
                                      values, g, sbuf, sscratch);
                  sc.threshold =
                      s.score < 0.0 ? (values.empty() ? 0.0f : values[0])
                                    : s.threshold;
                } else if (refine) {
                  sc.threshold = cand.fn.threshold;
                } else {
                  sc.threshold = values[cand.threshold_patch];
                }
                bitbuf.resize(values.size());
                for (size_t k = 0; k < values.size(); ++k)
                  bitbuf[k] = values[k] >= sc.threshold;
              } else {
                candidate_bits(cache, cand.fn, bitbuf);
              }
              sc.score = acceptance_score(slot, bitbuf);
              scored[size_t(ci)] = sc;
            }
          });
      if (stats) {
        if (refine)
          stats->refine_candidates += int64_t(cands.size());
        else
          stats->candidates_evaluated += int64_t(cands.size());
      }

      size_t best = 0;
      for (size_t ci = 1; ci < cands.size(); ++ci)
        if (scored[ci].score > scored[best].score) best = ci;

      if (scored[best].score > inc_score) {
        BitFunction chosen = cands[best].fn;
        if (chosen.thresholded()) chosen.threshold = scored[best].threshold;
        bits[size_t(slot)] = chosen;
        std::vector<uint8_t> chosen_bits;
        candidate_bits(cache, chosen, chosen_bits);
        write_slot(slot, chosen_bits);
        if (stats) {
          if (refine)
            ++stats->refinements_accepted;
          else
            ++stats->replacements_accepted;
        }
      }
    }
  }
}

}  // namespace growdetail

double score_R(const WordCalculator& calc, const TrainSample& sample,
               const GradientMatrix& g) {
  const int C = g.classes;
  const uint32_t cells = calc.cell_count();
  std::vector<double> sums(size_t(cells) * C, 0.0);
  for (int64_t i = 0; i < sample.image_count(); ++i) {
    const double* gi = &g.values[size_t(i) * C];
    const ExtendedImage& img = sample.images[size_t(i)];
    for (int y = sample.area.y0; y < sample.area.y1; ++y)
      for (int x = sample.area.x0; x < sample.area.x1; ++x) {
        const uint32_t cell = calc.eval(img, x, y).cell;
        double* row = &sums[size_t(cell) * C];
        for (int c = 0; c < C; ++c) row[c] += gi[c];
      }
  }
  double total = 0.0;
  for (uint32_t cell = 0; cell < cells; ++cell)
    for (int c = 0; c < C; ++c)
      total += std::abs(sums[size_t(cell) * C + c]);
  return total;
}

double score_R_delta(const PatchWordCache& cache, const BitFunction& candidate,
                     const GradientMatrix& g) {
  const uint32_t cells = uint32_t(1) << cache.prefix_bits;
  const CellStats stats =
      build_cell_stats(cache, cache.words.data(), cells, g);
  std::vector<uint8_t> bits;
  candidate_bits(cache, candidate, bits);
  return score_centered(cache, cache.words.data(), stats, bits.data(), g);
}

ThresholdResult optimal_threshold(const PatchWordCache& cache,
                                  const BitFunction& candidate,
                                  const GradientMatrix& g) {
  if (!candidate.thresholded())
    throw std::invalid_argument("optimal_threshold: candidate has no threshold");
  const uint32_t cells = uint32_t(1) << cache.prefix_bits;
  const CellStats stats =
      build_cell_stats(cache, cache.words.data(), cells, g);
  std::vector<float> values;
  candidate_values(cache, candidate, values);
  std::vector<uint64_t> sbuf, sscratch;
  SweepResult s = threshold_sweep(cache, cache.words.data(), stats, values, g,
                                  sbuf, sscratch);
  if (s.score < 0.0) return {values.empty() ? 0.0f : values[0], 0.0};
  return {s.threshold, s.score};
}

namespace {

// Enforced spatial slot positions: a per-table count in {1..max}, placed
// uniformly over the eligible positions.
std::vector<uint8_t> draw_enforced_positions(std::mt19937_64& rng,
                                             const TrainSample& sample,
                                             const GrowthConfig& config,
                                             int total_bits,
                                             const std::vector<int>& eligible,
                                             GrowthStats* stats) {
  std::vector<uint8_t> flags(size_t(total_bits), 0);
  if (!config.enforce_spatial_bits || !config.spatial_bits ||
      sample.spatial_channels.empty() || eligible.empty())
    return flags;
  const int count = std::min(
      draw_int(rng, 1, std::min(config.enforce_max, int(eligible.size()))),
      int(eligible.size()));
  std::vector<int> pool = eligible;
  for (int i = 0; i < count; ++i) {
    const int j = i + int(draw_u64(rng, pool.size() - size_t(i)));
    std::swap(pool[size_t(i)], pool[size_t(j)]);
    flags[size_t(pool[size_t(i)])] = 1;
  }
  if (stats) stats->enforced_spatial_bits = count;
  return flags;
}

}  // namespace

Fern grow_fern(const TrainSample& sample, const GradientMatrix& g, int bits,
               const GrowthConfig& config, GrowthStats* stats) {
  config.validate();
  if (bits < 1 || bits > 16)
    throw std::invalid_argument("grow_fern: bit count must be in 1..16");
  if (g.rows != sample.image_count())
    throw std::invalid_argument("grow_fern: gradient rows != images");

  std::mt19937_64 rng(config.seed);
  PatchWordCache cache = make_cache(sample, {});
  std::vector<BitFunction> fern_bits;
  std::vector<int> eligible(size_t(bits), 0);
  for (int i = 0; i < bits; ++i) eligible[size_t(i)] = i;

  GrowEngine engine{sample, g, config, cache, fern_bits,
                    draw_enforced_positions(rng, sample, config, bits,
                                            eligible, stats),
                    rng, stats};
  for (int k = 0; k < bits; ++k) engine.forward_select_next();
  engine.improvement_sweeps(0, config.replacement_sweeps, false);
  engine.improvement_sweeps(0, config.refinement_sweeps, true);
  if (stats) stats->final_score = engine.full_score();

  Fern fern;
  fern.bits = std::move(fern_bits);
  fern.patch_size = sample.patch_size;
  fern.validate();
  return fern;
}

namespace {

Fern run_sweeps(const Fern& fern, const TrainSample& sample,
                const GradientMatrix& g, int sweeps,
                const GrowthConfig& config, GrowthStats* stats, bool refine) {
  config.validate();
  fern.validate();
  if (fern.patch_size != sample.patch_size)
    throw std::invalid_argument("sweeps: fern patch size != sample patch size");
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  PatchWordCache cache = make_cache(sample, fern.bits);
  std::vector<BitFunction> bits = fern.bits;
  GrowEngine engine{sample, g, config, cache, bits,
                    std::vector<uint8_t>(bits.size(), 0), rng, stats};
  engine.improvement_sweeps(0, sweeps, refine);
  if (stats) stats->final_score = engine.full_score();
  Fern out = fern;
  out.bits = std::move(bits);
  return out;
}

}  // namespace

Fern replace_bits(const Fern& fern, const TrainSample& sample,
                  const GradientMatrix& g, int sweeps,
                  const GrowthConfig& config, GrowthStats* stats) {
  return run_sweeps(fern, sample, g, sweeps, config, stats, false);
}

Fern refine_bits(const Fern& fern, const TrainSample& sample,
                 const GradientMatrix& g, int sweeps,
                 const GrowthConfig& config, GrowthStats* stats) {
  return run_sweeps(fern, sample, g, sweeps, config, stats, true);
}

}  // namespace cte
