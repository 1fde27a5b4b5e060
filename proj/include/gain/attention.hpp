#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gain/nn.hpp"
#include "gain/rng.hpp"
#include "gain/tensor.hpp"

namespace gain {

enum class AttentionKind { full, criss_cross };
enum class QueryMode { concat, high_only, low_only };
enum class KeySource { low_res, high_res };

std::string to_string(AttentionKind kind);
std::string to_string(QueryMode mode);
std::string to_string(KeySource source);
AttentionKind parse_attention_kind(const std::string& s);
QueryMode parse_query_mode(const std::string& s);
KeySource parse_key_source(const std::string& s);

struct GaiConfig {
  std::int64_t channels = 128;  // C: width of query / key / value sources
  std::int64_t d_k = 8;
  std::int64_t d_v = 64;
  AttentionKind attention = AttentionKind::criss_cross;
  int recurrence = 2;
  QueryMode query_mode = QueryMode::concat;
  KeySource key_source = KeySource::low_res;
  std::int64_t out_channels = 128;

  void validate() const;
};

// Learnable pieces of one guided attentive interpolation module. All
// convolutions are 1x1; the q/k/v projections carry no bias and no
// activation.
struct GaiParams {
  ConvParams reduce_low;    // C_low -> C, applied at low resolution
  ConvParams reduce_query;  // (C_high + C | C_high | C) -> C, by query mode
  ConvParams w_q;           // C -> d_k
  ConvParams w_k;           // C -> d_k
  ConvParams w_v;           // C -> d_v
  ConvParams feedback;      // d_v -> C, feeds each pass back into the query
  ConvParams out_proj;      // (C + d_v) -> out_channels

  static GaiParams make(const GaiConfig& cfg, std::int64_t high_channels,
                        std::int64_t low_channels, Rng& rng);
  std::vector<std::pair<std::string, Tensor>> named_parameters(const std::string& prefix) const;
};

struct QueryFeatures {
  Tensor q;      // [N, C, H, W] fused query
  Tensor f_l;    // [N, C, H, W] channel-reduced low-res map resized to (H, W)
  Tensor k_src;  // [N, C, Hk, Wk] key/value source
};

QueryFeatures build_query(const Tensor& f_high, const Tensor& f_low,
                          const GaiParams& params, const GaiConfig& cfg);

// Per-query softmax weights over that query's key set.
//
// Full kind: weights [N, H*W, Hk*Wk], key slot i is pixel (i / Wk, i % Wk).
// Criss-cross kind: weights [N, H, W, Hk+Wk-1]. A query (h, w) is anchored at
// key pixel (row_anchor[h], col_anchor[w]); slots 0..Wk-1 walk the anchor row
// left to right and the remaining Hk-1 slots walk the anchor column top to
// bottom, skipping the anchor pixel itself.
struct AffinityMap {
  AttentionKind kind = AttentionKind::full;
  Tensor weights;
  std::int64_t batch = 0, h = 0, w = 0, key_h = 0, key_w = 0;
  std::vector<std::int64_t> row_anchor;
  std::vector<std::int64_t> col_anchor;

  std::int64_t keys_per_query() const;
  std::pair<std::int64_t, std::int64_t> key_coord(std::int64_t qh, std::int64_t qw,
                                                  std::int64_t slot) const;
  double weight(std::int64_t n, std::int64_t qh, std::int64_t qw, std::int64_t slot) const;
};

// floor(i * key_extent / query_extent) for i in [0, query_extent).
std::vector<std::int64_t> anchor_map(std::int64_t query_extent, std::int64_t key_extent);

// Differentiable criss-cross primitives on projected maps.
// q_proj [N, D, H, W], k_proj [N, D, Hk, Wk] -> logits [N, H, W, Hk+Wk-1]
Tensor criss_cross_logits(const Tensor& q_proj, const Tensor& k_proj,
                          const std::vector<std::int64_t>& row_anchor,
                          const std::vector<std::int64_t>& col_anchor);
// weights [N, H, W, Hk+Wk-1], v_proj [N, Dv, Hk, Wk] -> [N, Dv, H, W]
Tensor criss_cross_aggregate(const Tensor& weights, const Tensor& v_proj,
                             const std::vector<std::int64_t>& row_anchor,
                             const std::vector<std::int64_t>& col_anchor);

AffinityMap affinity_from_projections(const Tensor& q_proj, const Tensor& k_proj,
                                      AttentionKind kind);
AffinityMap full_affinity(const Tensor& q, const Tensor& k_src, const GaiParams& params);
AffinityMap cc_affinity(const Tensor& q, const Tensor& k_src, const GaiParams& params);

// Weighted sum of already projected values over each query's key set.
Tensor aggregate(const AffinityMap& a, const Tensor& v_proj);
// aggregate(a, w_v(v_src))
Tensor attend(const AffinityMap& a, const Tensor& v_src, const GaiParams& params);

struct GaiTrace {
  QueryFeatures query;
  std::vector<AffinityMap> affinities;  // one per recurrence step
  std::vector<Tensor> outputs;          // attention output per step
};

// Guided attentive interpolation of f_low ([N, C_low, H', W']) onto the grid
// of f_high ([N, C_high, H, W]). Returns [N, out_channels, H, W].
Tensor gai_forward(const Tensor& f_high, const Tensor& f_low, const GaiParams& params,
                   const GaiConfig& cfg, GaiTrace* trace = nullptr);

struct QueryPoint {
  std::int64_t h = 0;
  std::int64_t w = 0;
};

// CSV with header qh,qw,kh,kw,weight: one row per (query, key) pair of the
// requested query pixels, for sample `batch_index`.
void write_attention_csv(std::ostream& os, const AffinityMap& a,
                         std::span<const QueryPoint> points, std::int64_t batch_index = 0);
void dump_attention(const AffinityMap& a, std::span<const QueryPoint> points,
                    const std::filesystem::path& path, std::int64_t batch_index = 0);

}  // namespace gain
