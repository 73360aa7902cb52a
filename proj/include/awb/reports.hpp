#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "awb/attack.hpp"
#include "awb/data.hpp"
#include "awb/error.hpp"
#include "awb/gan.hpp"
#include "awb/metrics.hpp"
#include "awb/train.hpp"
#include "awb/video.hpp"

namespace awb::io {

using json = nlohmann::ordered_json;

/// Shortest round-trip decimal form; the one representation used in every
/// CSV so reruns are byte-identical.
inline std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::IoError, "short write to " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::DecodeError, path.string() + ": " + e.what());
  }
}

// JSON null for non-finite doubles (metrics may carry NaN placeholders).
inline json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

// ---------------------------------------------------------------------------
// norm stats

inline json norm_stats_to_json(const data::NormStats& stats) {
  return {{"mean", stats.mean}, {"std", stats.std}};
}

inline data::NormStats norm_stats_from_json(const json& j) {
  data::NormStats stats;
  stats.mean = j.at("mean").get<std::vector<double>>();
  stats.std = j.at("std").get<std::vector<double>>();
  if (stats.mean.size() != stats.std.size() || stats.mean.empty())
    throw Error(ErrorKind::DecodeError, "malformed norm stats");
  return stats;
}

// ---------------------------------------------------------------------------
// training history

inline json history_to_json(const train::History& h) {
  json entries = json::array();
  for (const auto& e : h.entries)
    entries.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"val_loss", e.val_loss},
                       {"val_accuracy", e.val_accuracy}});
  return {{"entries", std::move(entries)}};
}

inline std::string history_to_csv(const train::History& h) {
  std::string csv = "epoch,train_loss,val_loss,val_accuracy\n";
  for (const auto& e : h.entries)
    csv += std::to_string(e.epoch) + "," + fmt_double(e.train_loss) + "," +
           fmt_double(e.val_loss) + "," + fmt_double(e.val_accuracy) + "\n";
  return csv;
}

// ---------------------------------------------------------------------------
// metrics / ROC

inline json metrics_to_json(const train::Metrics& m) {
  return {{"tp", m.tp},
          {"tn", m.tn},
          {"fp", m.fp},
          {"fn", m.fn},
          {"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"log_loss", json_number(m.log_loss)},
          {"auc", json_number(m.auc)}};
}

inline std::string roc_to_csv(const train::RocResult& roc) {
  std::string csv = "threshold,fpr,tpr\n";
  for (const auto& p : roc.curve)
    csv += fmt_double(p.threshold) + "," + fmt_double(p.fpr) + "," +
           fmt_double(p.tpr) + "\n";
  return csv;
}

// ---------------------------------------------------------------------------
// attack reports

inline json robustness_to_json(const attack::RobustnessReport& r) {
  json attack_block = {{"kind", attack::kind_name(r.config.kind)},
                       {"epsilon", r.config.epsilon},
                       {"steps", r.config.steps},
                       {"step_size", r.config.step_size}};
  if (r.config.target_class) attack_block["target_class"] = *r.config.target_class;
  json samples = json::array();
  for (const auto& s : r.samples)
    samples.push_back({{"path", s.path},
                       {"label", s.label},
                       {"clean_logit_true", s.clean_logit_true},
                       {"adv_logit_true", s.adv_logit_true},
                       {"clean_prob_true", s.clean_prob_true},
                       {"adv_prob_true", s.adv_prob_true},
                       {"clean_pred", s.clean_pred},
                       {"adv_pred", s.adv_pred},
                       {"linf", s.linf},
                       {"l2", s.l2},
                       {"flipped", s.flipped}});
  return {{"attack", std::move(attack_block)},
          {"count", r.count},
          {"clean_accuracy", r.clean_accuracy},
          {"adversarial_accuracy", r.adversarial_accuracy},
          {"mean_clean_true_logit", r.mean_clean_true_logit},
          {"mean_adv_true_logit", r.mean_adv_true_logit},
          {"mean_clean_true_prob", r.mean_clean_true_prob},
          {"mean_adv_true_prob", r.mean_adv_true_prob},
          {"flip_rate", r.flip_rate},
          {"samples", std::move(samples)}};
}

inline std::string sweep_to_csv(const attack::SweepReport& r) {
  std::string csv = "delta,mean_true_logit,mean_true_prob,flip_rate\n";
  for (const auto& row : r.rows)
    csv += fmt_double(row.delta) + "," + fmt_double(row.mean_true_logit) +
           "," + fmt_double(row.mean_true_prob) + "," +
           fmt_double(row.flip_rate) + "\n";
  return csv;
}

// ---------------------------------------------------------------------------
// video verdict

inline json verdict_to_json(const video::VideoVerdict& v) {
  return {{"rule", video::rule_name(v.rule)},
          {"threshold", v.threshold},
          {"fraction_threshold", v.fraction_threshold},
          {"verdict", v.verdict()},
          {"fake_frame_count", v.fake_frame_count},
          {"frame_scores", v.frame_scores},
          {"frames", v.frames}};
}

// ---------------------------------------------------------------------------
// gan history

inline std::string gan_history_to_csv(const gan::GanHistory& h) {
  std::string csv = "step,d_loss,g_loss,d_accuracy\n";
  for (const auto& e : h.entries)
    csv += std::to_string(e.step) + "," + fmt_double(e.d_loss) + "," +
           fmt_double(e.g_loss) + "," + fmt_double(e.d_accuracy) + "\n";
  return csv;
}

}  // namespace awb::io
