#pragma once

#include <vector>

namespace teformer::testing {

// Scores pixel by pixel without a confusion matrix.
struct BruteForce {
  double miou = 0, mf1 = 0, pa = 0;
};

inline BruteForce brute_force(const std::vector<int>& pred, const std::vector<int>& gt, int k, int ignore) {
  BruteForce out;
  int scored = 0, correct = 0, present = 0;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt[i] != ignore) ++scored, correct += pred[i] == gt[i];
  for (int c = 0; c < k; ++c) {
    int inter = 0, uni = 0, p = 0, g = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == ignore) continue;
      const bool in_p = pred[i] == c, in_g = gt[i] == c;
      inter += in_p && in_g;
      uni += in_p || in_g;
      p += in_p;
      g += in_g;
    }
    if (uni == 0) continue;
    ++present;
    out.miou += double(inter) / uni;
    out.mf1 += 2.0 * inter / (p + g);
  }
  out.miou /= present;
  out.mf1 /= present;
  out.pa = double(correct) / scored;
  return out;
}

}  // namespace teformer::testing
