#include "gain/attention.hpp"
#include "gain/error.hpp"

namespace gain {

std::string to_string(AttentionKind kind) {
  return kind == AttentionKind::full ? "full" : "criss_cross";
}

std::string to_string(QueryMode mode) {
  switch (mode) {
    case QueryMode::concat: return "concat";
    case QueryMode::high_only: return "high_only";
    case QueryMode::low_only: return "low_only";
  }
  return "?";
}

std::string to_string(KeySource source) {
  return source == KeySource::low_res ? "low_res" : "high_res";
}

AttentionKind parse_attention_kind(const std::string& s) {
  if (s == "full") return AttentionKind::full;
  if (s == "criss_cross") return AttentionKind::criss_cross;
  throw ValidationError("unknown attention kind '" + s + "' (expected full | criss_cross)");
}

QueryMode parse_query_mode(const std::string& s) {
  if (s == "concat") return QueryMode::concat;
  if (s == "high_only") return QueryMode::high_only;
  if (s == "low_only") return QueryMode::low_only;
  throw ValidationError("unknown query mode '" + s + "' (expected concat | high_only | low_only)");
}

KeySource parse_key_source(const std::string& s) {
  if (s == "low_res") return KeySource::low_res;
  if (s == "high_res") return KeySource::high_res;
  throw ValidationError("unknown key source '" + s + "' (expected low_res | high_res)");
}

void GaiConfig::validate() const {
  if (channels < 1 || d_k < 1 || d_v < 1 || out_channels < 1) {
    throw ValidationError("GAI channel counts must be positive");
  }
  if (d_k > channels) throw ValidationError("gai.d_k must not exceed gai.channels");
  if (d_v > channels) throw ValidationError("gai.d_v must not exceed gai.channels");
  if (recurrence < 1) throw ValidationError("gai.recurrence must be >= 1");
}

GaiParams GaiParams::make(const GaiConfig& cfg, std::int64_t high_channels,
                          std::int64_t low_channels, Rng& rng) {
  cfg.validate();
  const auto c = cfg.channels;
  std::int64_t query_in = c;
  if (cfg.query_mode == QueryMode::concat) query_in = high_channels + c;
  if (cfg.query_mode == QueryMode::high_only) query_in = high_channels;

  GaiParams p;
  p.reduce_low = make_conv(low_channels, c, 1, 1, true, rng);
  p.reduce_query = make_conv(query_in, c, 1, 1, true, rng);
  p.w_q = make_conv(c, cfg.d_k, 1, 1, false, rng);
  p.w_k = make_conv(c, cfg.d_k, 1, 1, false, rng);
  p.w_v = make_conv(c, cfg.d_v, 1, 1, false, rng);
  p.feedback = make_conv(cfg.d_v, c, 1, 1, false, rng);
  p.out_proj = make_conv(c + cfg.d_v, cfg.out_channels, 1, 1, true, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> GaiParams::named_parameters(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto add = [&](const std::string& name, const ConvParams& conv) {
    out.emplace_back(prefix + name + ".weight", conv.weight);
    if (conv.bias.defined()) out.emplace_back(prefix + name + ".bias", conv.bias);
  };
  add("reduce_low", reduce_low);
  add("reduce_query", reduce_query);
  add("w_q", w_q);
  add("w_k", w_k);
  add("w_v", w_v);
  add("feedback", feedback);
  add("out_proj", out_proj);
  return out;
}

}  // namespace gain
