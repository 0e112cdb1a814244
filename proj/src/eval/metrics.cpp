/* Copyright 2026 The LaneSentinel Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "lanesentinel/eval/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "lanesentinel/common/error.hpp"

namespace lanesentinel::eval {

double iou(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw Error(Errc::kShapeMismatch, "iou: maps differ in shape");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool x = a.data[i] != 0, y = b.data[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double calibrate_threshold(const std::vector<double>& real_scores, double target_fpr) {
  if (real_scores.empty()) throw Error(Errc::kEmptyInput, "calibrate_threshold: no scores");
  std::vector<double> s = real_scores;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const double allowed = std::floor(target_fpr * static_cast<double>(n) + 1e-9);
  if (allowed >= static_cast<double>(n)) return s.front() - 1.0;
  const std::size_t m = allowed <= 0.0 ? 0 : static_cast<std::size_t>(allowed);
  return s[n - m - 1];
}

double false_positive_rate(const std::vector<double>& real_scores, double tau) {
  if (real_scores.empty()) throw Error(Errc::kEmptyInput, "false_positive_rate: no scores");
  std::size_t flagged = 0;
  for (double v : real_scores) flagged += v > tau;
  return static_cast<double>(flagged) / static_cast<double>(real_scores.size());
}

RocResult roc_curve(const std::vector<double>& real_scores, const std::vector<double>& fake_scores) {
  if (real_scores.empty() || fake_scores.empty()) throw Error(Errc::kEmptyInput, "roc_curve: a class has no scores");
  std::vector<double> r = real_scores, f = fake_scores;
  std::sort(r.begin(), r.end(), std::greater<>());
  std::sort(f.begin(), f.end(), std::greater<>());
  std::vector<double> thresholds;
  thresholds.insert(thresholds.end(), r.begin(), r.end());
  thresholds.insert(thresholds.end(), f.begin(), f.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  RocResult out;
  out.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t ir = 0, jf = 0;
  const double nr = static_cast<double>(r.size()), nf = static_cast<double>(f.size());
  for (double t : thresholds) {
    while (ir < r.size() && r[ir] >= t) ++ir;
    while (jf < f.size() && f[jf] >= t) ++jf;
    out.points.push_back({t, ir / nr, jf / nf});
  }
  for (std::size_t k = 1; k < out.points.size(); ++k) {
    const RocPoint& a = out.points[k - 1];
    const RocPoint& b = out.points[k];
    out.auc += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
  }
  for (double x : tabulated_fprs()) out.fnr_at_fpr.emplace_back(x, fnr_at(out, x));
  return out;
}

double fnr_at(const RocResult& roc, double fpr) {
  double best_tpr = 0.0;
  for (std::size_t k = 0; k < roc.points.size(); ++k) {
    const RocPoint& a = roc.points[k];
    if (a.fpr <= fpr) best_tpr = std::max(best_tpr, a.tpr);
    if (k + 1 == roc.points.size()) break;
    const RocPoint& b = roc.points[k + 1];
    if (a.fpr < fpr && fpr < b.fpr) {
      const double w = (fpr - a.fpr) / (b.fpr - a.fpr);
      best_tpr = std::max(best_tpr, a.tpr + w * (b.tpr - a.tpr));
    }
  }
  return 1.0 - best_tpr;
}

LaneLabel match_lane(const Lane& lane, const std::vector<PolyLane>& real_curves,
                     const std::vector<PolyLane>& fake_curves, const MatchConfig& cfg) {
  double best = std::numeric_limits<double>::infinity();
  LaneLabel label = LaneLabel::kUnknown;
  for (const auto& c : real_curves) {
    const double d = pipeline::mean_abs_dx(lane, c);
    if (d < best) best = d, label = LaneLabel::kReal;
  }
  for (const auto& c : fake_curves) {
    const double d = pipeline::mean_abs_dx(lane, c);
    if (d < best) best = d, label = LaneLabel::kFake;
  }
  return best < cfg.max_mean_dx ? label : LaneLabel::kUnknown;
}

EvalReport evaluate_defense(const std::vector<SceneOutcome>& scenes, double tau, const synth::SceneConfig& render,
                            const std::string& condition) {
  EvalReport rep;
  rep.condition = condition;
  rep.tau = tau;
  rep.n_scenes = static_cast<int>(scenes.size());
  std::vector<double> real_scores, fake_scores;
  int flagged_real = 0, passed_fake = 0;
  double iou_sum = 0.0, iou_sum_open = 0.0;
  for (const auto& s : scenes) {
    std::vector<Lane> surviving, all;
    for (const auto& l : s.lanes) {
      all.push_back(l.lane);
      const bool pass = l.score <= tau;
      if (pass) surviving.push_back(l.lane);
      switch (l.truth) {
        case LaneLabel::kReal:
          real_scores.push_back(l.score);
          flagged_real += !pass;
          break;
        case LaneLabel::kFake:
          fake_scores.push_back(l.score);
          passed_fake += pass;
          break;
        case LaneLabel::kUnknown: ++rep.n_mismatch; break;
      }
    }
    iou_sum += iou(synth::render_lanes(surviving, render), s.target_seg);
    iou_sum_open += iou(synth::render_lanes(all, render), s.target_seg);
  }
  rep.n_real = static_cast<int>(real_scores.size());
  rep.n_fake = static_cast<int>(fake_scores.size());
  rep.fpr = rep.n_real ? static_cast<double>(flagged_real) / rep.n_real : 0.0;
  rep.fnr = rep.n_fake ? static_cast<double>(passed_fake) / rep.n_fake : 0.0;
  rep.unprotected_fpr = 0.0;
  rep.unprotected_fnr = rep.n_fake ? 1.0 : 0.0;
  if (!scenes.empty()) {
    rep.fn_avg_iou = iou_sum / scenes.size();
    rep.unprotected_fn_avg_iou = iou_sum_open / scenes.size();
  }
  if (!real_scores.empty() && !fake_scores.empty()) rep.roc = roc_curve(real_scores, fake_scores);
  return rep;
}

nlohmann::json to_json(const RocResult& roc) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : roc.points) {
    nlohmann::json t = std::isfinite(p.threshold) ? nlohmann::json(p.threshold) : nlohmann::json("inf");
    pts.push_back({{"threshold", t}, {"fpr", p.fpr}, {"fnr", p.fnr()}, {"tpr", p.tpr}});
  }
  nlohmann::json tab = nlohmann::json::array();
  for (const auto& [x, y] : roc.fnr_at_fpr) tab.push_back({{"fpr", x}, {"fnr", y}});
  return {{"auc", roc.auc}, {"fnr_at_fpr", tab}, {"points", pts}};
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j = {{"condition", r.condition},
                      {"tau", r.tau},
                      {"fpr", r.fpr},
                      {"fnr", r.fnr},
                      {"fn_avg_iou", r.fn_avg_iou},
                      {"unprotected", {{"fpr", r.unprotected_fpr}, {"fnr", r.unprotected_fnr},
                                       {"fn_avg_iou", r.unprotected_fn_avg_iou}}},
                      {"n_scenes", r.n_scenes},
                      {"n_real", r.n_real},
                      {"n_fake", r.n_fake},
                      {"n_mismatch", r.n_mismatch}};
  if (!r.roc.points.empty()) {
    j["roc"] = to_json(r.roc);
    j["auc"] = r.roc.auc;
  }
  return j;
}

std::string roc_csv(const RocResult& roc) {
  std::ostringstream os;
  os << std::setprecision(10) << "fpr,fnr,tpr\n";
  for (const auto& p : roc.points) os << p.fpr << ',' << p.fnr() << ',' << p.tpr << '\n';
  return os.str();
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string roc_svg(const std::vector<std::pair<std::string, RocResult>>& curves) {
  const double L = 60, T = 20, S = 360;
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << L + S + 220 << "\" height=\"" << T + S + 50
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << S << "\" height=\"" << S
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T + S << "\" x2=\"" << L + S << "\" y2=\"" << T
     << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 4\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = k / 4.0;
    os << "<text x=\"" << L + v * S << "\" y=\"" << T + S + 16 << "\" text-anchor=\"middle\">" << v << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << T + S - v * S + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  os << "<text x=\"" << L + S / 2 << "\" y=\"" << T + S + 36 << "\" text-anchor=\"middle\">false positive rate</text>\n";
  os << "<text x=\"14\" y=\"" << T + S / 2 << "\" transform=\"rotate(-90 14 " << T + S / 2
     << ")\" text-anchor=\"middle\">true positive rate</text>\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kPalette[c % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : curves[c].second.points) os << L + p.fpr * S << ',' << T + S - p.tpr * S << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << L + S + 14 << "\" y=\"" << T + 14 + 18 * c << "\" fill=\"" << color << "\">"
       << escape_xml(curves[c].first) << " (AUC " << std::setprecision(3) << curves[c].second.auc
       << std::setprecision(2) << ")</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string iou_bar_svg(const std::vector<EvalReport>& reports) {
  const double L = 60, T = 20, H = 260, group = 90, bar = 30;
  const double W = std::max(1.0, static_cast<double>(reports.size())) * group;
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << L + W + 40 << "\" height=\"" << T + H + 110
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T + H << "\" x2=\"" << L + W << "\" y2=\"" << T + H
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + H << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = k / 4.0;
    os << "<text x=\"" << L - 6 << "\" y=\"" << T + H - v * H + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const double x = L + i * group + 12;
    const double a = std::clamp(reports[i].unprotected_fn_avg_iou, 0.0, 1.0);
    const double b = std::clamp(reports[i].fn_avg_iou, 0.0, 1.0);
    os << "<rect x=\"" << x << "\" y=\"" << T + H - a * H << "\" width=\"" << bar << "\" height=\"" << a * H
       << "\" fill=\"" << kPalette[1] << "\"/>\n";
    os << "<rect x=\"" << x + bar << "\" y=\"" << T + H - b * H << "\" width=\"" << bar << "\" height=\"" << b * H
       << "\" fill=\"" << kPalette[0] << "\"/>\n";
    const double tx = x + bar, ty = T + H + 12;
    os << "<text x=\"" << tx << "\" y=\"" << ty << "\" transform=\"rotate(40 " << tx << ' ' << ty << ")\">"
       << escape_xml(reports[i].condition) << "</text>\n";
  }
  os << "<rect x=\"" << L + 10 << "\" y=\"" << T << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[1] << "\"/>"
     << "<text x=\"" << L + 24 << "\" y=\"" << T + 9 << "\">without defense</text>\n";
  os << "<rect x=\"" << L + 10 << "\" y=\"" << T + 16 << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[0]
     << "\"/><text x=\"" << L + 24 << "\" y=\"" << T + 25 << "\">with defense</text>\n";
  os << "</svg>\n";
  return os.str();
}

nlohmann::json to_json(const TimingRecord& t) {
  return {{"scenes", t.scenes},
          {"repetitions", t.repetitions},
          {"lanes", t.lanes},
          {"detect_ms", t.detect_ms},
          {"detect_verify_ms", t.detect_verify_ms},
          {"detect_stabilize_ms", t.detect_stabilize_ms},
          {"verify_ms_per_lane", t.verify_ms_per_lane},
          {"overhead", t.overhead},
          {"stabilize_overhead", t.stabilize_overhead},
          {"fps_without", t.fps_without},
          {"fps_with", t.fps_with}};
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class Fn>
double time_ms(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TimingRecord bench_overhead(const pipeline::LaneDetector& detector, const pipeline::LaneVerifier& verifier,
                            const std::vector<Image>& scenes, int repetitions, double tau,
                            const pipeline::VerifyConfig& cfg) {
  if (scenes.empty()) throw Error(Errc::kEmptyInput, "bench_overhead: no scenes");
  if (repetitions < 1) throw Error(Errc::kInvalidConfig, "bench_overhead: repetitions must be positive");
  const pipeline::ConstantVerifier constant(0.0);
  std::vector<double> without, with, stab_only, per_lane;
  TimingRecord t;
  t.scenes = static_cast<int>(scenes.size());
  t.repetitions = repetitions;
  std::vector<std::vector<Lane>> lanes(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    lanes[s] = detector.detect(scenes[s]).lanes;
    t.lanes += static_cast<int>(lanes[s].size());
  }
  // Interleaved so slow drift of the machine affects all variants alike.
  volatile std::size_t sink = 0;
  for (int r = 0; r < repetitions; ++r) {
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      without.push_back(time_ms([&] { sink = sink + detector.detect(scenes[s]).lanes.size(); }));
      with.push_back(time_ms([&] { sink = sink + verify_scene(detector, verifier, tau, scenes[s], cfg).accepted.size(); }));
      stab_only.push_back(time_ms([&] { sink = sink + verify_scene(detector, constant, tau, scenes[s], cfg).accepted.size(); }));
      if (!lanes[s].empty()) {
        const double ms = time_ms([&] { sink = sink + score_lanes(lanes[s], verifier, scenes[s], cfg).size(); });
        per_lane.push_back(ms / static_cast<double>(lanes[s].size()));
      }
    }
  }
  t.detect_ms = median(without);
  t.detect_verify_ms = median(with);
  t.detect_stabilize_ms = median(stab_only);
  t.verify_ms_per_lane = median(per_lane);
  t.overhead = (t.detect_verify_ms - t.detect_ms) / t.detect_ms;
  t.stabilize_overhead = (t.detect_stabilize_ms - t.detect_ms) / t.detect_ms;
  t.fps_without = 1000.0 / t.detect_ms;
  t.fps_with = 1000.0 / t.detect_verify_ms;
  return t;
}

}  // namespace lanesentinel::eval
