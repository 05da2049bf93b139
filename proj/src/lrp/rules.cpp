#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "relprop/error.hpp"
#include "relprop/lrp.hpp"

namespace relprop::lrp {

Rule Rule::epsilon_rule(double epsilon) {
  if (!(epsilon >= 0.0)) throw InvalidInput("epsilon must be >= 0");
  return {Kind::Epsilon, epsilon};
}

Rule Rule::gamma_rule(double gamma) {
  if (!(gamma >= 0.0)) throw InvalidInput("gamma must be >= 0");
  return {Kind::Gamma, 0.0, gamma};
}

Rule Rule::zbox(double low, double high) {
  if (!(low < high)) throw InvalidInput("zbox bounds need low < high");
  return {Kind::ZBox, 0.0, 0.0, low, high};
}

std::string Rule::describe() const {
  auto num = [](double v) { return nlohmann::json(v).dump(); };
  switch (kind) {
    case Kind::Zero: return "Zero";
    case Kind::Epsilon: return "Epsilon(" + num(epsilon) + ")";
    case Kind::Gamma: return "Gamma(" + num(gamma) + ")";
    case Kind::ZBox: return "ZBox(" + num(low) + "," + num(high) + ")";
    case Kind::WinnerTakeAll: return "WinnerTakeAll";
    case Kind::PassThrough: return "PassThrough";
  }
  return "?";
}

CompositeConfig CompositeConfig::for_channel_means(std::span<const float> means) {
  CompositeConfig c;
  if (!means.empty()) {
    const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
    c.zbox_low = 0.0 - static_cast<double>(*hi);
    c.zbox_high = 255.0 - static_cast<double>(*lo);
  }
  return c;
}

CompositeConfig CompositeConfig::uniform(Rule rule) {
  CompositeConfig c;
  c.uniform_rule = rule;
  return c;
}

std::string CompositeConfig::canonical() const {
  nlohmann::json j = {
      {"input_rule", input_rule ? input_rule->describe() : "default"},
      {"zbox_low", zbox_low},
      {"zbox_high", zbox_high},
      {"lower_fraction", lower_fraction},
      {"conv_gamma", conv_gamma},
      {"conv_epsilon", conv_epsilon},
      {"dense_epsilon", dense_epsilon},
      {"uniform_rule", uniform_rule ? uniform_rule->describe() : "none"},
  };
  return j.dump();
}

std::vector<Rule> assign_rules(const NetworkModel& model, const CompositeConfig& config) {
  if (config.lower_fraction < 0.0 || config.lower_fraction > 1.0) {
    throw InvalidInput("lower_fraction must lie in [0, 1]");
  }
  const auto& layers = model.layers();

  std::optional<std::size_t> input_layer;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].has_params()) {
      input_layer = i;
      break;
    }
    if (layers[i].kind != LayerKind::Flatten) break;
  }

  std::vector<std::size_t> convs;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::Conv2D && i != input_layer) convs.push_back(i);
  }
  const auto n_gamma = static_cast<std::size_t>(
      std::floor(config.lower_fraction * static_cast<double>(convs.size()) + 0.5));

  const Rule input_rule =
      config.input_rule ? *config.input_rule : Rule::zbox(config.zbox_low, config.zbox_high);
  const Rule lower = Rule::gamma_rule(config.conv_gamma);
  const Rule upper = Rule::epsilon_rule(config.conv_epsilon);
  const Rule dense = Rule::epsilon_rule(config.dense_epsilon);

  std::vector<Rule> rules(layers.size(), Rule::pass_through());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    switch (layers[i].kind) {
      case LayerKind::MaxPool2x2: rules[i] = Rule::winner_take_all(); break;
      case LayerKind::Conv2D: {
        const auto pos = std::find(convs.begin(), convs.end(), i);
        rules[i] = pos == convs.end() ? input_rule
                   : static_cast<std::size_t>(pos - convs.begin()) < n_gamma ? lower
                                                                               : upper;
        break;
      }
      case LayerKind::Dense: rules[i] = (i == input_layer) ? input_rule : dense; break;
      default: break;
    }
    if (config.uniform_rule && layers[i].has_params()) rules[i] = *config.uniform_rule;
  }
  return rules;
}

}  // namespace relprop::lrp
