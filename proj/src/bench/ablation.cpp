#include "gain/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "gain/error.hpp"
#include "gain/flops.hpp"

namespace gain {

namespace {

const std::vector<std::string> kToggles{"use_gai", "use_aux", "use_spatial_c2", "use_gap"};
const std::vector<std::string> kEnums{"query_mode", "attention_kind", "key_source"};

bool& toggle(GainConfig& cfg, const std::string& axis) {
  if (axis == "use_gai") return cfg.use_gai;
  if (axis == "use_aux") return cfg.use_aux;
  if (axis == "use_spatial_c2") return cfg.use_spatial_c2;
  return cfg.use_gap;
}

// (label, setter) per value, in table order.
std::vector<std::pair<std::string, std::function<void(GainConfig&)>>> enum_values(const std::string& axis) {
  std::vector<std::pair<std::string, std::function<void(GainConfig&)>>> out;
  if (axis == "query_mode") {
    for (auto m : {QueryMode::low_only, QueryMode::high_only, QueryMode::concat})
      out.emplace_back(to_string(m), [m](GainConfig& c) { c.gai.query_mode = m; });
  } else if (axis == "attention_kind") {
    for (auto k : {AttentionKind::full, AttentionKind::criss_cross})
      out.emplace_back(to_string(k), [k](GainConfig& c) { c.gai.attention = k; });
  } else {
    for (auto s : {KeySource::low_res, KeySource::high_res})
      out.emplace_back(to_string(s), [s](GainConfig& c) { c.gai.key_source = s; });
  }
  return out;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::string csv_field(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace

std::vector<std::string> parse_axes(const std::string& csv) {
  std::vector<std::string> axes;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) axes.push_back(item);
  }
  validate_axes(axes);
  return axes;
}

void validate_axes(std::span<const std::string> axes) {
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (!contains(kToggles, axes[i]) && !contains(kEnums, axes[i])) {
      throw ValidationError("unknown ablation axis '" + axes[i] +
                            "' (expected use_gai, use_aux, use_spatial_c2, use_gap, query_mode, "
                            "attention_kind or key_source)");
    }
    for (std::size_t j = 0; j < i; ++j)
      if (axes[j] == axes[i]) throw ValidationError("ablation axis '" + axes[i] + "' given twice");
  }
}

std::vector<std::string> default_ablation_axes() { return kToggles; }

std::string describe(const GainConfig& cfg) {
  std::ostringstream os;
  os << "use_gai=" << cfg.use_gai << " use_aux=" << cfg.use_aux
     << " use_spatial_c2=" << cfg.use_spatial_c2 << " use_gap=" << cfg.use_gap
     << " query_mode=" << to_string(cfg.gai.query_mode)
     << " attention_kind=" << to_string(cfg.gai.attention)
     << " key_source=" << to_string(cfg.gai.key_source);
  return os.str();
}

std::vector<AblationRow> ablation_rows(const GainConfig& base, std::span<const std::string> axes) {
  validate_axes(axes);
  std::vector<std::string> toggles, enums;
  for (const auto& a : axes) (contains(kToggles, a) ? toggles : enums).push_back(a);

  std::vector<AblationRow> rows;
  for (std::size_t on = 0; on <= toggles.size(); ++on) {
    AblationRow row;
    row.config = base;
    row.id = toggles.empty() ? "base" : "baseline";
    for (std::size_t i = 0; i < toggles.size(); ++i) {
      toggle(row.config, toggles[i]) = i < on;
      if (i < on) row.id += "+" + toggles[i];
    }
    rows.push_back(row);
  }
  for (const auto& axis : enums) {
    std::vector<AblationRow> next;
    for (const auto& row : rows) {
      for (const auto& [label, set] : enum_values(axis)) {
        AblationRow r = row;
        set(r.config);
        r.id = (row.id == "base" ? std::string() : row.id + "/") + axis + "=" + label;
        next.push_back(r);
      }
    }
    rows = std::move(next);
  }
  return rows;
}

std::vector<AblationRow> run_ablation(const GainConfig& base, std::span<const std::string> axes,
                                      const TrainConfig& tc,
                                      const std::vector<SegSample>& train_set,
                                      const std::vector<SegSample>& val_set,
                                      const AblationProgress& progress) {
  auto rows = ablation_rows(base, axes);
  const auto h = train_set.empty() ? 0 : train_set.front().height;
  const auto w = train_set.empty() ? 0 : train_set.front().width;
  for (auto& row : rows) {
    try {
      row.flops = count_gain_flops(row.config, h, w).total();
      auto result = train(row.config, train_set, val_set, tc);
      row.miou = result.final_eval.miou.mean;
      row.ok = std::isfinite(row.miou);
      if (!row.ok) row.error = "non-finite mIoU";
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    if (progress) progress(row);
  }
  return rows;
}

void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows) {
  os << "row,config,flops,miou,status,error\n";
  char buf[64];
  for (const auto& r : rows) {
    os << csv_field(r.id) << ',' << csv_field(describe(r.config)) << ',' << r.flops << ',';
    if (r.ok) {
      std::snprintf(buf, sizeof buf, "%.17g", r.miou);
      os << buf;
    }
    os << ',' << (r.ok ? "ok" : "failed") << ',' << csv_field(r.error) << '\n';
  }
}

}  // namespace gain
