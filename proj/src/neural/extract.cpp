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

#include "lanesentinel/neural/extract.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lanesentinel::nn {

namespace {

struct Run {
  int x0, x1;
  double centroid() const { return 0.5 * (x0 + x1); }
};

struct Chain {
  Lane lane;  // built bottom-up, reversed at the end
  Run last{0, 0};
  int last_row = 0;
  bool open = true;
};

}  // namespace

std::vector<Lane> extract_lanes(const Mask& mask, const ExtractConfig& cfg) {
  std::vector<Chain> chains;
  std::vector<std::size_t> open;
  for (int y = mask.height - 1; y >= 0; --y) {
    std::vector<Run> runs;
    for (int x = 0; x < mask.width;) {
      if (!mask.at(y, x)) {
        ++x;
        continue;
      }
      const int x0 = x;
      while (x < mask.width && mask.at(y, x)) ++x;
      runs.push_back({x0, x - 1});
    }
    // Candidate links: 8-connected overlap with the chain's run one row below.
    struct Link {
      double dist;
      std::size_t chain, run;
    };
    std::vector<Link> links;
    for (std::size_t ci : open) {
      const Chain& c = chains[ci];
      for (std::size_t r = 0; r < runs.size(); ++r)
        if (runs[r].x0 <= c.last.x1 + 1 && runs[r].x1 >= c.last.x0 - 1)
          links.push_back({std::abs(runs[r].centroid() - c.last.centroid()), ci, r});
    }
    std::stable_sort(links.begin(), links.end(), [](const Link& a, const Link& b) { return a.dist < b.dist; });
    std::vector<bool> run_used(runs.size(), false), chain_used(chains.size(), false);
    for (const auto& l : links) {
      if (run_used[l.run] || chain_used[l.chain]) continue;
      run_used[l.run] = chain_used[l.chain] = true;
      Chain& c = chains[l.chain];
      c.lane.samples.push_back({y, runs[l.run].centroid()});
      c.last = runs[l.run];
      c.last_row = y;
    }
    std::vector<std::size_t> next_open;
    for (std::size_t ci : open) {
      if (chain_used[ci]) next_open.push_back(ci);
      else chains[ci].open = false;
    }
    for (std::size_t r = 0; r < runs.size(); ++r) {
      if (run_used[r]) continue;
      Chain c;
      c.lane.samples.push_back({y, runs[r].centroid()});
      c.last = runs[r];
      c.last_row = y;
      chains.push_back(std::move(c));
      next_open.push_back(chains.size() - 1);
    }
    std::sort(next_open.begin(), next_open.end());
    open = std::move(next_open);
  }

  std::vector<Lane> lanes;
  for (auto& c : chains) {
    std::reverse(c.lane.samples.begin(), c.lane.samples.end());
    if (c.lane.samples.empty() || c.lane.row_max() - c.lane.row_min() + 1 < cfg.min_rows) continue;
    c.lane.label = LaneLabel::kUnknown;
    lanes.push_back(std::move(c.lane));
  }
  std::stable_sort(lanes.begin(), lanes.end(), [](const Lane& a, const Lane& b) { return a.bottom_x() < b.bottom_x(); });
  return lanes;
}

std::vector<Lane> extract_lanes(const Image& prob, const ExtractConfig& cfg) {
  return extract_lanes(threshold(prob, cfg.threshold), cfg);
}

}  // namespace lanesentinel::nn
