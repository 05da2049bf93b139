#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <iostream>
#include <set>

#include "cli_internal.hpp"
#include "relprop/csv.hpp"
#include "relprop/error.hpp"
#include "relprop/nnwb.hpp"
#include "relprop/parallel.hpp"
#include "relprop/pgm.hpp"
#include "relprop/stats.hpp"

namespace relprop::cli {
namespace {

fs::path prepare_out_dir(const CommonOptions& common) {
  if (common.out_dir.empty()) throw InvalidInput("--out-dir is required");
  fs::create_directories(common.out_dir);
  return common.out_dir;
}

void record_common(RunManifest& m, const CommonOptions& common) {
  m.seed("seed", common.seed);
  m.option("threads", common.threads);
}

std::vector<double> to_doubles(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

void report_warnings(RunManifest& manifest, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) {
    std::cerr << "relprop: warning: " << w << '\n';
    manifest.warning(w);
  }
}

std::string file_safe(std::string_view id) {
  std::string out;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out;
}

std::size_t resolve_class(const NetworkModel& model, const std::string& target) {
  const auto& labels = model.class_labels();
  const auto it = std::find(labels.begin(), labels.end(), target);
  if (it != labels.end()) return static_cast<std::size_t>(it - labels.begin());
  std::size_t index = 0;
  const auto* end = target.data() + target.size();
  const auto [ptr, ec] = std::from_chars(target.data(), end, index);
  if (ec == std::errc() && ptr == end && index < labels.size()) return index;
  throw InvalidInput("class '" + target + "' is neither a label nor an index of model '" +
                     model.id() + "'");
}

std::vector<Tensor> load_images(const std::vector<std::string>& paths, const Shape& input_shape,
                                const Tensor& means, RunManifest& manifest) {
  std::vector<Tensor> out;
  for (const auto& p : paths) {
    manifest.input(p);
    out.push_back(load_input_image(p, input_shape, means));
  }
  return out;
}

// Registry models plus a shared image list with per-task label indices.
struct Corpus {
  std::vector<occlusion::RegistryModel> models;
  std::vector<std::string> image_paths;
  std::vector<Tensor> images;
  std::map<std::string, std::vector<std::size_t>> labels;  // by task
  Tensor means;
};

Corpus load_corpus(const std::string& registry_path, const std::vector<std::string>& dataset_args,
                   const std::vector<float>& means_arg, RunManifest& manifest) {
  Corpus c;
  manifest.input(registry_path);
  for (auto& entry : load_registry(registry_path)) {
    manifest.input(entry.weights_path);
    auto model = nnwb::load_model(entry.weights_path).with_id(entry.model_id);
    if (!c.models.empty() && model.input_shape() != c.models.front().model.input_shape()) {
      throw InvalidInput("model '" + entry.model_id + "' input " +
                         shape_string(model.input_shape()) + " differs from '" +
                         c.models.front().model_id + "' input " +
                         shape_string(c.models.front().model.input_shape()));
    }
    c.models.push_back({entry.model_id, entry.descriptor, std::move(model)});
  }
  const Shape input_shape = c.models.front().model.input_shape();
  c.means = channel_means(means_arg, input_shape[2]);

  const auto dataset_paths = parse_dataset_args(dataset_args);
  std::map<std::string, finetune::Dataset> datasets;
  for (const auto& [task, path] : dataset_paths) {
    manifest.input(path);
    datasets.emplace(task, finetune::load_manifest(path));
  }
  auto dataset_for = [&](const std::string& task) -> const finetune::Dataset& {
    if (auto it = datasets.find(task); it != datasets.end()) return it->second;
    if (auto it = datasets.find(""); it != datasets.end()) return it->second;
    throw InvalidInput("no --dataset covers task '" + task + "'");
  };

  std::map<std::string, const NetworkModel*> task_vocab;
  for (const auto& m : c.models) {
    const auto& task = m.descriptor.task;
    auto [it, fresh] = task_vocab.emplace(task, &m.model);
    if (!fresh && it->second->class_labels() != m.model.class_labels()) {
      throw InvalidInput("models '" + it->second->id() + "' and '" + m.model_id +
                         "' share task '" + task + "' but not its class labels");
    }
  }

  for (const auto& [task, model] : task_vocab) {
    const auto& ds = dataset_for(task);
    std::vector<std::string> paths;
    std::vector<std::size_t> labels;
    for (const auto& item : ds.items) {
      paths.push_back(item.path);
      const auto& name = ds.class_labels[item.label];
      const auto& vocab = model->class_labels();
      const auto pos = std::find(vocab.begin(), vocab.end(), name);
      if (pos == vocab.end()) {
        throw InvalidInput("label '" + name + "' is not a class of task '" + task + "'");
      }
      labels.push_back(static_cast<std::size_t>(pos - vocab.begin()));
    }
    if (c.image_paths.empty()) {
      c.image_paths = std::move(paths);
    } else if (paths != c.image_paths) {
      throw InvalidInput("datasets must list the same images in the same order (task '" + task +
                         "' differs)");
    }
    c.labels.emplace(task, std::move(labels));
  }
  c.images = load_images(c.image_paths, input_shape, c.means, manifest);
  return c;
}

json test_record(const stats::TestResult& r) {
  json out;
  out["effect"] = r.effect;
  out["statistic"] = r.statistic;
  if (r.df2 > 0.0) {
    out["df"] = {r.df1, r.df2};
  } else {
    out["df"] = r.df1;
  }
  out["p_value"] = r.p_value;
  out["degenerate_flag"] = r.degenerate;
  return out;
}

}  // namespace

void run_forward(const ForwardOptions& o) {
  RunManifest manifest("forward");
  record_common(manifest, o.common);
  manifest.input(o.model);
  const auto model = nnwb::load_model(o.model);
  const auto means = channel_means(o.means, model.input_shape()[2]);
  manifest.option("model", o.model);
  manifest.option("means", to_doubles(means));
  const auto paths = expand_image_args(o.images);
  manifest.option("images", paths);
  const auto images = load_images(paths, model.input_shape(), means, manifest);

  std::vector<ActivationTrace> traces(images.size());
  parallel_for(images.size(), o.common.threads,
               [&](std::size_t i) { traces[i] = forward(model, images[i]); });

  json predictions = json::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& t = traces[i];
    predictions.push_back({{"image", paths[i]},
                           {"logits", to_doubles(t.logits)},
                           {"probabilities", to_doubles(t.probabilities)},
                           {"predicted_class", t.predicted_class},
                           {"predicted_label", model.class_labels()[t.predicted_class]}});
  }
  const json out = {{"model_id", model.id()}, {"predictions", predictions}};
  if (!o.common.out_dir.empty()) {
    const auto dir = prepare_out_dir(o.common);
    write_json(dir / "prediction.json", out);
    manifest.write(dir);
  }
  std::cout << out.dump(2) << '\n';
}

void run_relevance(const RelevanceOptions& o) {
  RunManifest manifest("relevance");
  record_common(manifest, o.common);
  const auto dir = prepare_out_dir(o.common);
  manifest.input(o.model);
  const auto model = nnwb::load_model(o.model);
  const auto means = channel_means(o.means, model.input_shape()[2]);
  const auto config = o.lrp.resolve(means);
  const auto digest = sha256_hex(config.canonical());
  manifest.option("model", o.model);
  manifest.option("means", to_doubles(means));
  manifest.option("class", o.target.empty() ? json("predicted") : json(o.target));
  manifest.option("render", o.render);
  manifest.option("normalized", !o.raw);
  o.lrp.record(manifest, config);

  const auto paths = expand_image_args(o.images);
  manifest.option("images", paths);
  std::set<std::string> stems;
  for (const auto& p : paths) {
    if (!stems.insert(fs::path(p).stem().string()).second) {
      throw InvalidInput("two images share the file name stem '" + fs::path(p).stem().string() +
                         "'");
    }
  }
  const auto images = load_images(paths, model.input_shape(), means, manifest);

  std::vector<lrp::RelevanceMap> maps(images.size());
  parallel_for(images.size(), o.common.threads, [&](std::size_t i) {
    const std::size_t target = o.target.empty() ? forward(model, images[i]).predicted_class
                                                : resolve_class(model, o.target);
    maps[i] = o.raw ? lrp::compute_relevance(model, images[i], target, config)
                    : lrp::relevance_map(model, images[i], target, config);
  });

  const auto rules = lrp::assign_rules(model, config);
  json rule_list = json::array();
  for (std::size_t l = 0; l < rules.size(); ++l) {
    rule_list.push_back({{"layer", model.layers()[l].name}, {"rule", rules[l].describe()}});
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto stem = fs::path(paths[i]).stem().string();
    nnwb::save_tensor(maps[i].values, dir / (stem + ".relevance.bin"));
    write_json(dir / (stem + ".relevance.json"),
               {{"model_id", maps[i].model_id},
                {"image", paths[i]},
                {"target_class", maps[i].target_class},
                {"target_label", model.class_labels()[maps[i].target_class]},
                {"config_digest", digest},
                {"normalized", maps[i].normalized},
                {"rules", rule_list}});
    if (o.render) {
      pgm::save(lrp::render_map(lrp::normalize_map(maps[i])), dir / (stem + ".relevance.pgm"));
    }
  }
  manifest.write(dir);
}

void run_finetune(const FinetuneOptions& o) {
  RunManifest manifest("finetune");
  record_common(manifest, o.common);
  const auto dir = prepare_out_dir(o.common);
  manifest.input(o.model);
  manifest.input(o.manifest);
  const auto base = nnwb::load_model(o.model);
  const auto means = channel_means(o.means, base.input_shape()[2]);
  const std::uint64_t init_seed = o.init_seed.value_or(o.common.seed);
  const std::uint64_t split_seed = o.split_seed.value_or(o.common.seed);

  finetune::TrainConfig config;
  config.epochs = o.epochs;
  config.learning_rate = o.learning_rate;
  config.batch_size = o.batch_size;
  config.shuffle_seed = o.common.seed;
  config.cache_features = !o.no_cache;
  config.validate();

  const auto model_id = o.model_id.empty() ? base.id() + "-finetuned" : o.model_id;
  manifest.option("model", o.model);
  manifest.option("manifest", o.manifest);
  manifest.option("model_id", model_id);
  manifest.option("epochs", config.epochs);
  manifest.option("learning_rate", config.learning_rate);
  manifest.option("batch_size", config.batch_size);
  manifest.option("cache_features", config.cache_features);
  manifest.option("means", to_doubles(means));
  manifest.option("topology_json", o.topology_json);
  manifest.seed("init_seed", init_seed);
  manifest.seed("split_seed", split_seed);
  manifest.seed("shuffle_seed", config.shuffle_seed);

  const auto dataset = finetune::load_manifest(o.manifest, split_seed);
  const auto split = finetune::split_dataset(dataset);
  auto load = [&](const finetune::Dataset& part) {
    finetune::LabeledImages out;
    for (const auto& item : part.items) {
      manifest.input(item.path);
      out.images.push_back(load_input_image(item.path, base.input_shape(), means));
      out.labels.push_back(item.label);
    }
    return out;
  };
  const auto train = load(split.train);
  const auto val = load(split.val);

  const auto fresh =
      finetune::replace_readout(base, dataset.class_labels, init_seed).with_id(model_id);
  const auto result = finetune::finetune_readout(fresh, train, val, config, o.common.threads);
  report_warnings(manifest, result.history.warnings);

  CsvWriter history({"epoch", "train_loss", "train_acc", "val_loss", "val_acc"});
  for (const auto& e : result.history.epochs) {
    history.row({std::to_string(e.epoch), format_number(e.train_loss), format_number(e.train_acc),
                 format_number(e.val_loss), format_number(e.val_acc)});
  }
  // The loader takes the model id from the file stem, so name files after it.
  const auto stem = file_safe(model_id);
  nnwb::save_weights(result.model, dir / (stem + ".nnwb"));
  if (o.topology_json) {
    nnwb::save_topology_json(result.model, dir / (stem + ".json"), stem + ".nnwb");
  }
  write_text(dir / "history.csv", history.text());
  manifest.write(dir);
}

void run_sweep(const SweepOptions& o) {
  RunManifest manifest("sweep");
  record_common(manifest, o.common);
  const auto dir = prepare_out_dir(o.common);
  const auto corpus = load_corpus(o.registry, o.datasets, o.means, manifest);

  occlusion::SweepConfig config;
  config.schedule = parse_schedule(o.schedule);
  config.samples_per_bin = o.samples_per_bin;
  config.seed = o.common.seed;
  config.lrp = o.lrp.resolve(corpus.means);
  config.fill_value = o.fill_value;
  config.threads = o.common.threads;
  manifest.option("registry", o.registry);
  manifest.option("datasets", o.datasets);
  manifest.option("schedule", config.schedule.percentiles());
  manifest.option("samples_per_bin", config.samples_per_bin);
  manifest.option("fill_value", config.fill_value);
  manifest.option("means", to_doubles(corpus.means));
  o.lrp.record(manifest, config.lrp);

  const auto result = occlusion::cross_model_sweep(
      corpus.models, corpus.images,
      [&](const std::string& task) -> const std::vector<std::size_t>& {
        return corpus.labels.at(task);
      },
      config);
  report_warnings(manifest, result.warnings);

  CsvWriter rows({"destination", "source", "bin", "percentile", "accuracy"});
  CsvWriter aucs({"destination", "source", "bin", "auc"});
  for (const auto& r : result.records) {
    const std::string bin(occlusion::bin_name(r.bin));
    for (const auto& p : r.curve.points) {
      rows.row({r.destination_id, r.source_id, bin, format_number(p.percentile),
                format_number(p.accuracy)});
    }
    aucs.row({r.destination_id, r.source_id, bin, format_number(r.curve.auc)});
  }
  write_text(dir / "sweep.csv", rows.text());
  write_text(dir / "auc_summary.csv", aucs.text());

  // One chart per destination: mean curve of each bin.
  const auto& levels = config.schedule.percentiles();
  for (const auto& dest : corpus.models) {
    std::vector<Series> series;
    for (auto bin : occlusion::kAllBins) {
      std::vector<double> sum(levels.size(), 0.0);
      std::size_t count = 0;
      for (const auto& r : result.records) {
        if (r.destination_id != dest.model_id || r.bin != bin) continue;
        for (std::size_t l = 0; l < levels.size(); ++l) sum[l] += r.curve.points[l].accuracy;
        ++count;
      }
      if (count == 0) continue;
      Series s{std::string(occlusion::bin_name(bin)), {}};
      for (std::size_t l = 0; l < levels.size(); ++l) {
        s.points.emplace_back(levels[l], sum[l] / static_cast<double>(count));
      }
      series.push_back(std::move(s));
    }
    write_text(dir / ("curves_" + file_safe(dest.model_id) + ".svg"),
               line_chart_svg("Masking curves, destination " + dest.model_id, series, {0, 100},
                              {0, 1}, "pixels masked (%)", "accuracy"));
  }
  manifest.write(dir);
}

void run_similarity(const SimilarityOptions& o) {
  RunManifest manifest("similarity");
  record_common(manifest, o.common);
  const auto dir = prepare_out_dir(o.common);
  const auto corpus = load_corpus(o.registry, o.datasets, o.means, manifest);
  const auto config = o.lrp.resolve(corpus.means);
  manifest.option("registry", o.registry);
  manifest.option("datasets", o.datasets);
  manifest.option("means", to_doubles(corpus.means));
  o.lrp.record(manifest, config);

  const std::size_t n_models = corpus.models.size(), n_images = corpus.images.size();
  std::vector<std::vector<Tensor>> maps(n_models, std::vector<Tensor>(n_images, Tensor({1}, {0})));
  parallel_for(n_models * n_images, o.common.threads, [&](std::size_t job) {
    const auto& m = corpus.models[job / n_images];
    const std::size_t i = job % n_images;
    const auto target = corpus.labels.at(m.descriptor.task)[i];
    maps[job / n_images][i] = lrp::relevance_map(m.model, corpus.images[i], target, config).values;
  });

  std::vector<std::string> ids;
  for (const auto& m : corpus.models) ids.push_back(m.model_id);
  const auto matrix = stats::similarity_matrix(ids, maps);

  std::vector<std::string> header{"model_id"};
  header.insert(header.end(), ids.begin(), ids.end());
  CsvWriter table(header);
  for (std::size_t a = 0; a < n_models; ++a) {
    std::vector<std::string> row{ids[a]};
    for (std::size_t b = 0; b < n_models; ++b) row.push_back(format_number(matrix.at(a, b)));
    table.row(row);
  }
  write_text(dir / "similarity.csv", table.text());
  write_text(dir / "similarity.svg",
             heatmap_svg("Relevance map similarity (mean Pearson r)", ids, matrix.values));
  manifest.write(dir);
}

void run_rank2(const Rank2Options& o) {
  RunManifest manifest("rank2");
  record_common(manifest, o.common);
  const auto dir = prepare_out_dir(o.common);
  manifest.input(o.model_a);
  manifest.input(o.model_b);
  const auto a = nnwb::load_model(o.model_a);
  const auto b = nnwb::load_model(o.model_b);
  if (a.input_shape() != b.input_shape()) {
    throw InvalidInput("models take different input shapes " + shape_string(a.input_shape()) +
                       " and " + shape_string(b.input_shape()));
  }
  const auto means = channel_means(o.means, a.input_shape()[2]);
  const auto paths = expand_image_args(o.images);
  manifest.option("model_a", o.model_a);
  manifest.option("model_b", o.model_b);
  manifest.option("images", paths);
  manifest.option("means", to_doubles(means));
  manifest.option("human", o.human);
  const auto images = load_images(paths, a.input_shape(), means, manifest);

  const auto disagreements = occlusion::rank2_disagreement(a, b, images, o.common.threads);
  CsvWriter table({"image", "rank2_a", "rank2_b", "label_a", "label_b"});
  for (const auto& d : disagreements) {
    table.row({paths[d.image], std::to_string(d.rank2_a), std::to_string(d.rank2_b),
               a.class_labels()[d.rank2_a], b.class_labels()[d.rank2_b]});
  }
  write_text(dir / "rank2_disagreement.csv", table.text());

  json summary = {{"model_a", a.id()},
                  {"model_b", b.id()},
                  {"images", images.size()},
                  {"disagreements", disagreements.size()}};
  if (disagreements.empty()) {
    const std::string note = "the two models make the same rank-2 choice on every image";
    summary["note"] = note;
    std::cerr << "relprop: note: " << note << '\n';
  }
  write_json(dir / "rank2_summary.json", summary);

  if (!o.human.empty()) {
    manifest.input(o.human);
    const auto csv = csv::read(o.human);
    const auto subject_col = csv.column("subject");
    const auto image_col = csv.column("image");
    const auto choice_col = csv.column("choice");
    std::vector<occlusion::HumanChoice> choices;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
      const auto& row = csv.rows[r];
      const auto& choice = row[choice_col];
      if (choice != "A" && choice != "B") {
        throw InvalidInput("human CSV row " + std::to_string(r + 1) + ": choice '" + choice +
                           "' is neither A nor B");
      }
      choices.push_back({row[subject_col], row[image_col], choice == "A"});
    }
    const auto pref = occlusion::preference_for_a(choices);
    json rates = json::array();
    for (std::size_t s = 0; s < pref.subjects.size(); ++s) {
      rates.push_back({{"subject", pref.subjects[s]}, {"rate", pref.rates[s]}});
    }
    json out = {{"subjects", pref.subjects.size()},
                {"choices", choices.size()},
                {"preference_for_a", pref.mean_rate},
                {"sem", pref.sem},
                {"mu0", 0.5},
                {"test", test_record(pref.test)},
                {"rates", rates}};
    write_json(dir / "preference.json", out);
  }
  manifest.write(dir);
}

void run_stats(const StatsOptions& o) {
  RunManifest manifest("stats");
  record_common(manifest, o.common);
  const auto dir = prepare_out_dir(o.common);
  manifest.input(o.input);
  manifest.option("input", o.input);
  manifest.option("design", o.design);

  const auto table = csv::read(o.input);
  const auto a_col = table.column("factorA");
  const auto b_col = table.column("factorB");
  const auto rep_col = table.column("replicate");
  const auto v_col = table.column("value");

  std::set<std::string> a_levels, b_levels;
  std::map<std::pair<std::string, std::string>, std::map<std::string, double>> cells;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    double value = 0.0;
    const auto& text = row[v_col];
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw InvalidInput("row " + std::to_string(r + 1) + ": value '" + text +
                         "' is not a number");
    }
    a_levels.insert(row[a_col]);
    b_levels.insert(row[b_col]);
    if (!cells[{row[a_col], row[b_col]}].emplace(row[rep_col], value).second) {
      throw InvalidInput("row " + std::to_string(r + 1) + ": duplicate replicate '" +
                         row[rep_col] + "'");
    }
  }

  json records = json::array();
  if (o.design == "two-way") {
    stats::Table3 values;
    for (const auto& la : a_levels) {
      auto& row = values.emplace_back();
      for (const auto& lb : b_levels) {
        auto& cell = row.emplace_back();
        if (auto it = cells.find({la, lb}); it != cells.end()) {
          for (const auto& [rep, v] : it->second) cell.push_back(v);
        }
        if (cell.empty()) {
          throw InvalidInput("unbalanced design: no values for (" + la + ", " + lb + ")");
        }
      }
    }
    const auto result = stats::anova_two_way(values);
    records.push_back(test_record(result.factor_a));
    records.push_back(test_record(result.factor_b));
    records.push_back(test_record(result.interaction));
  } else if (o.design == "one-way") {
    std::vector<std::vector<double>> groups;
    for (const auto& la : a_levels) {
      auto& g = groups.emplace_back();
      for (const auto& [key, reps] : cells) {
        if (key.first != la) continue;
        for (const auto& [rep, v] : reps) g.push_back(v);
      }
    }
    records.push_back(test_record(stats::anova_one_way(groups)));
  } else {
    throw InvalidInput("unknown design '" + o.design + "' (expected two-way or one-way)");
  }
  write_json(dir / "anova.json", records);
  manifest.write(dir);
}

}  // namespace relprop::cli
