#include <cmath>
#include <map>

#include "relprop/error.hpp"
#include "relprop/occlusion.hpp"
#include "relprop/parallel.hpp"

namespace relprop::occlusion {

std::size_t rank2_choice(std::span<const float> logits, std::size_t excluded) {
  if (logits.size() < 2) throw InvalidInput("rank-2 choice needs at least 2 logits");
  std::size_t best = excluded == 0 ? 1 : 0;
  for (std::size_t k = best + 1; k < logits.size(); ++k) {
    if (k != excluded && logits[k] > logits[best]) best = k;
  }
  return best;
}

std::vector<Rank2Disagreement> rank2_disagreement(const NetworkModel& a, const NetworkModel& b,
                                                  const std::vector<Tensor>& images,
                                                  std::size_t threads) {
  if (a.class_labels() != b.class_labels()) {
    throw InvalidInput("models '" + a.id() + "' and '" + b.id() +
                       "' do not share a class vocabulary");
  }
  std::vector<std::pair<std::size_t, std::size_t>> choices(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) {
    const auto ta = forward(a, images[i]);
    const auto tb = forward(b, images[i]);
    choices[i] = {rank2_choice(ta.logits.values(), ta.predicted_class),
                  rank2_choice(tb.logits.values(), tb.predicted_class)};
  });
  std::vector<Rank2Disagreement> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (choices[i].first != choices[i].second) {
      out.push_back({i, choices[i].first, choices[i].second});
    }
  }
  return out;
}

PreferenceSummary preference_for_a(const std::vector<HumanChoice>& choices) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // chose A, total
  for (const auto& c : choices) {
    auto& t = tally[c.subject];
    t.first += c.chose_a ? 1 : 0;
    ++t.second;
  }
  if (tally.size() < 2) throw InvalidInput("preference test needs at least 2 subjects");

  PreferenceSummary out;
  for (const auto& [subject, t] : tally) {
    out.subjects.push_back(subject);
    out.rates.push_back(static_cast<double>(t.first) / static_cast<double>(t.second));
  }
  const double n = static_cast<double>(out.rates.size());
  double total = 0.0;
  for (double r : out.rates) total += r;
  out.mean_rate = total / n;
  double ss = 0.0;
  for (double r : out.rates) ss += (r - out.mean_rate) * (r - out.mean_rate);
  out.sem = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  if (out.sem > 0.0) {
    out.test = stats::t_test_from_summary(out.mean_rate, out.sem, out.rates.size(), 0.5);
  } else {
    out.test = {"one-sample t", 0.0, n - 1.0, 0.0, 1.0, true};
  }
  return out;
}

}  // namespace relprop::occlusion
