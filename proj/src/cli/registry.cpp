#include <charconv>
#include <cmath>
#include <set>

#include "cli_internal.hpp"
#include "relprop/error.hpp"
#include "relprop/nnwb.hpp"
#include "relprop/pgm.hpp"

namespace relprop::cli {
namespace {

double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw InvalidInput("bad " + std::string(what) + " '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.emplace_back(text.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::vector<RegistryEntry> load_registry(const fs::path& path) {
  const auto bytes = nnwb::read_file(path);
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw FormatError("registry '" + path.string() + "' is not valid JSON", e.byte);
  }
  if (!doc.is_array() || doc.empty()) {
    throw InvalidInput("registry '" + path.string() + "' must be a non-empty JSON list");
  }
  std::vector<RegistryEntry> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& e = doc[i];
    try {
      RegistryEntry entry;
      entry.model_id = e.at("model_id").get<std::string>();
      entry.descriptor.pretrain = e.at("pretrain").get<std::string>();
      entry.descriptor.task = e.at("task").get<std::string>();
      entry.descriptor.init_seed = e.at("init_seed").get<std::uint64_t>();
      fs::path weights = e.at("weights_path").get<std::string>();
      entry.weights_path = weights.is_relative() ? path.parent_path() / weights : weights;
      if (!seen.insert(entry.model_id).second) {
        throw InvalidInput("duplicate model_id '" + entry.model_id + "'");
      }
      out.push_back(std::move(entry));
    } catch (const json::exception& ex) {
      throw InvalidInput("registry entry " + std::to_string(i) + ": " + ex.what());
    }
  }
  return out;
}

Tensor channel_means(const std::vector<float>& explicit_means, std::size_t channels) {
  if (!explicit_means.empty()) {
    if (explicit_means.size() != channels) {
      throw InvalidInput("--means has " + std::to_string(explicit_means.size()) +
                         " values, model input has " + std::to_string(channels) + " channels");
    }
    return Tensor({channels}, explicit_means);
  }
  if (channels == 3) return Tensor({3}, {123.68f, 116.779f, 103.939f});
  return Tensor::zeros({channels});
}

Tensor load_input_image(const fs::path& path, const Shape& input_shape, const Tensor& means) {
  const auto gray = pgm::load(path);
  if (gray.dim(0) != input_shape[0] || gray.dim(1) != input_shape[1]) {
    throw InvalidInput("image '" + path.string() + "' is " + std::to_string(gray.dim(0)) + "x" +
                       std::to_string(gray.dim(1)) + ", model expects " +
                       std::to_string(input_shape[0]) + "x" + std::to_string(input_shape[1]));
  }
  return preprocess(replicate_channels(gray, input_shape[2]), means);
}

std::vector<std::string> expand_image_args(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (const auto& a : args) {
    if (fs::path(a).extension() == ".csv") {
      for (const auto& item : finetune::load_manifest(a).items) out.push_back(item.path);
    } else {
      out.push_back(a);
    }
  }
  if (out.empty()) throw InvalidInput("no images given");
  return out;
}

std::map<std::string, fs::path> parse_dataset_args(const std::vector<std::string>& args) {
  std::map<std::string, fs::path> out;
  for (const auto& a : args) {
    const auto eq = a.find('=');
    const std::string task = eq == std::string::npos ? "" : a.substr(0, eq);
    const std::string path = eq == std::string::npos ? a : a.substr(eq + 1);
    if (!out.emplace(task, path).second) {
      throw InvalidInput(task.empty() ? "more than one task-agnostic --dataset"
                                      : "task '" + task + "' given more than one --dataset");
    }
  }
  if (out.empty()) throw InvalidInput("no --dataset given");
  return out;
}

occlusion::MaskSchedule parse_schedule(const std::string& text) {
  if (text == "log") return {};
  if (text.rfind("linear:", 0) == 0) {
    const double steps = parse_double(std::string_view(text).substr(7), "schedule step count");
    if (!(steps >= 1.0) || steps != std::floor(steps)) {
      throw InvalidInput("linear schedule needs a positive integer step count");
    }
    return occlusion::MaskSchedule::linear(static_cast<std::size_t>(steps));
  }
  std::vector<double> levels;
  for (const auto& part : split(text, ',')) levels.push_back(parse_double(part, "percentile"));
  return occlusion::MaskSchedule(std::move(levels));
}

lrp::Rule parse_rule(const std::string& text) {
  const auto parts = split(text, ':');
  const auto& name = parts[0];
  if (name == "zero" && parts.size() == 1) return lrp::Rule::zero();
  if (name == "epsilon" && parts.size() == 2) {
    return lrp::Rule::epsilon_rule(parse_double(parts[1], "epsilon"));
  }
  if (name == "gamma" && parts.size() == 2) {
    return lrp::Rule::gamma_rule(parse_double(parts[1], "gamma"));
  }
  if (name == "zbox" && parts.size() == 3) {
    return lrp::Rule::zbox(parse_double(parts[1], "zbox bound"), parse_double(parts[2], "zbox bound"));
  }
  throw InvalidInput("unknown rule '" + text +
                     "' (expected zero, epsilon:E, gamma:G or zbox:LOW:HIGH)");
}

lrp::CompositeConfig LrpOptions::resolve(const Tensor& means) const {
  auto config = lrp::CompositeConfig::for_channel_means(means.values());
  config.conv_epsilon = conv_epsilon;
  config.conv_gamma = conv_gamma;
  config.dense_epsilon = dense_epsilon;
  config.lower_fraction = lower_fraction;
  if (zbox_low) config.zbox_low = *zbox_low;
  if (zbox_high) config.zbox_high = *zbox_high;
  if (!uniform_rule.empty()) config.uniform_rule = parse_rule(uniform_rule);
  return config;
}

void LrpOptions::record(RunManifest& manifest, const lrp::CompositeConfig& resolved) const {
  const auto canonical = resolved.canonical();
  manifest.option("lrp", json::parse(canonical));
  manifest.option("lrp_config_digest", sha256_hex(canonical));
}

}  // namespace relprop::cli
