// Command-line front end: convert events to LNES volumes, generate synthetic
// corpora, train/evaluate/ablate the gesture model, and compute corpus stats.

#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "evg/common.hpp"
#include "evg/event_io.hpp"
#include "evg/lnes.hpp"
#include "evg/manifest.hpp"
#include "evg/model.hpp"
#include "evg/pipeline.hpp"
#include "evg/stats.hpp"
#include "evg/synth.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw evg::data_error("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw evg::data_error(path + ": " + e.what());
  }
  return j;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw evg::data_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw evg::data_error("cannot open " + path + " for writing");
  out << text;
}

std::filesystem::path sibling_with_suffix(const std::string& report, const std::string& tag) {
  std::filesystem::path p(report);
  std::filesystem::path out = p.parent_path() / p.stem();
  out += tag;
  return out;
}

int run_convert(const std::string& in_path, const std::string& out_path,
                std::uint64_t bin_ms, std::size_t frames_per_bin, unsigned width,
                unsigned height) {
  evg::Geometry geom{static_cast<std::uint16_t>(width), static_cast<std::uint16_t>(height)};
  evg::EventStream stream = evg::load_events(in_path, geom);
  evg::GridParams params{bin_ms * 1000, frames_per_bin};
  evg::FrameSlices slices = evg::slice_windows(stream, params);
  evg::TensorN volume = evg::stack_lnes(stream, slices);
  evg::write_lnes_volume(out_path, volume, slices.grid);
  std::cout << "wrote " << out_path << " shape (" << slices.grid.bins << ","
            << slices.grid.frames_per_bin << ",2," << stream.geometry.height << ","
            << stream.geometry.width << ") from " << stream.events.size() << " events\n";
  return 0;
}

int run_synth(const std::string& config_path, const std::string& out_dir) {
  nlohmann::json j = load_json(config_path);
  evg::SynthConfig cfg = j.get<evg::SynthConfig>();
  const auto per_class = j.value("per_class", std::size_t{12});
  std::vector<evg::SynthSample> samples = evg::gen_dataset(cfg, per_class);
  evg::Manifest manifest = evg::write_corpus(out_dir, cfg, samples);
  std::size_t events = 0;
  for (const evg::SynthSample& s : samples) events += s.stream.events.size();
  std::cout << "wrote " << manifest.entries.size() << " sequences (" << events
            << " events) to " << out_dir << "\n";
  return 0;
}

struct LoadedConfigs {
  evg::ModelConfig model;
  evg::TrainConfig train;
  std::vector<std::uint64_t> seeds;
};

LoadedConfigs parse_run_config(const std::string& path) {
  nlohmann::json j = load_json(path);
  LoadedConfigs c;
  if (j.contains("model")) c.model = j.at("model").get<evg::ModelConfig>();
  if (j.contains("train")) c.train = j.at("train").get<evg::TrainConfig>();
  c.seeds = j.value("seeds", std::vector<std::uint64_t>{1, 2, 3});
  return c;
}

int run_train(const std::string& data_path, const std::string& config_path,
              const std::string& out_path, std::string log_path) {
  LoadedConfigs cfg = parse_run_config(config_path);
  const std::filesystem::path dir = std::filesystem::path(data_path).parent_path();
  evg::Manifest manifest = evg::read_manifest(data_path);
  evg::Dataset data = evg::load_dataset(manifest, dir, cfg.model);

  evg::GestureModel model = evg::build_model(cfg.model);
  evg::TrainResult result = evg::train(model, data, cfg.train);
  evg::save_checkpoint(out_path, model);

  if (log_path.empty()) log_path = out_path + ".log.jsonl";
  std::ofstream log(log_path);
  if (!log) throw evg::data_error("cannot open " + log_path + " for writing");
  for (const evg::EpochLog& e : result.log) log << evg::epoch_log_line(e) << '\n';

  const evg::EpochLog& last = result.log.back();
  std::cout << "trained " << result.log.size() << " epochs (best epoch "
            << result.best_epoch << "), final val_loss " << last.val_loss << ", val_acc "
            << last.val_acc << "\n"
            << "checkpoint: " << out_path << "\nlog: " << log_path << "\n";
  return 0;
}

int run_eval(const std::string& data_path, const std::string& ckpt_path,
             const std::string& report_path, const std::string& split) {
  evg::GestureModel model = evg::load_checkpoint(ckpt_path);
  const std::filesystem::path dir = std::filesystem::path(data_path).parent_path();
  evg::Manifest manifest = evg::read_manifest(data_path);
  evg::Dataset data = evg::load_dataset(manifest, dir, model.cfg);

  const std::vector<evg::Sample>* pool = &data.test;
  if (split == "train")
    pool = &data.train;
  else if (split == "val")
    pool = &data.val;
  else if (split != "test")
    throw evg::data_error("unknown split '" + split + "'");

  evg::EvalResult r = evg::evaluate(model, *pool);
  const std::size_t c = model.cfg.num_classes;
  std::vector<double> normalized = evg::normalize_confusion(r.confusion, c);

  nlohmann::json conf = nlohmann::json::array();
  nlohmann::json conf_norm = nlohmann::json::array();
  for (std::size_t i = 0; i < c; ++i) {
    nlohmann::json row = nlohmann::json::array();
    nlohmann::json row_n = nlohmann::json::array();
    for (std::size_t k = 0; k < c; ++k) {
      row.push_back(r.confusion[i * c + k]);
      row_n.push_back(normalized[i * c + k]);
    }
    conf.push_back(row);
    conf_norm.push_back(row_n);
  }
  write_json(report_path, {{"split", split},
                           {"num_samples", pool->size()},
                           {"accuracy", r.accuracy},
                           {"mean_loss", r.mean_loss},
                           {"confusion", conf},
                           {"confusion_normalized", conf_norm}});
  std::cout << "accuracy " << r.accuracy << " on " << pool->size() << " " << split
            << " samples; report: " << report_path << "\n";
  return 0;
}

int run_ablate(const std::string& data_path, const std::string& config_path,
               const std::string& report_path) {
  LoadedConfigs cfg = parse_run_config(config_path);
  const std::filesystem::path dir = std::filesystem::path(data_path).parent_path();
  evg::Manifest manifest = evg::read_manifest(data_path);
  evg::Dataset data = evg::load_dataset(manifest, dir, cfg.model);

  std::vector<evg::AblationRow> rows = evg::ablate(cfg.model, data, cfg.train, cfg.seeds);
  nlohmann::json jrows = nlohmann::json::array();
  for (const evg::AblationRow& r : rows) {
    jrows.push_back({{"name", r.name},
                     {"use_ssm", r.use_ssm},
                     {"use_btsm", r.use_btsm},
                     {"param_count", r.param_count},
                     {"per_seed_accuracy", r.per_seed_accuracy},
                     {"mean_accuracy", r.mean_accuracy}});
    std::cout << r.name << ": mean accuracy " << r.mean_accuracy << " (" << r.param_count
              << " params)\n";
  }
  write_json(report_path, {{"seeds", cfg.seeds}, {"variants", jrows}});
  std::cout << "report: " << report_path << "\n";
  return 0;
}

int run_stats(const std::string& data_path, const std::string& group_by,
              const std::string& report_path) {
  const std::filesystem::path dir = std::filesystem::path(data_path).parent_path();
  evg::Manifest manifest = evg::read_manifest(data_path);
  const evg::GroupKey key = evg::group_key_from_name(group_by);

  evg::RateReport rates = evg::normalized_rates(manifest, dir, key);
  std::vector<evg::DurationRow> durations = evg::duration_histogram(manifest, dir);

  write_json(report_path, {{"rates", evg::rate_report_json(rates)},
                           {"durations", evg::duration_rows_json(durations)}});
  const auto rates_csv = sibling_with_suffix(report_path, ".rates.csv");
  const auto durations_csv = sibling_with_suffix(report_path, ".durations.csv");
  write_text(rates_csv.string(), evg::rate_report_csv(rates));
  write_text(durations_csv.string(), evg::duration_rows_csv(durations));

  std::cout << "grouped by " << group_by << ": " << rates.rows.size()
            << " sequences; bimanual mean " << rates.bimanual_mean_normalized
            << ", unimanual mean " << rates.unimanual_mean_normalized << "\n"
            << "report: " << report_path << " (+ .rates.csv, .durations.csv)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-based egocentric gesture recognition pipeline"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "Bound internal parallelism (0 = default)");

  auto* convert = app.add_subcommand("convert", "Event file -> LNES volume");
  std::string in_path, out_path;
  std::uint64_t bin_ms = 200;
  std::size_t frames_per_bin = 6;
  unsigned width = 1280, height = 720;
  convert->add_option("--in", in_path, "Input events (.csv or EVG1)")->required();
  convert->add_option("--out", out_path, "Output volume file")->required();
  convert->add_option("--bin-ms", bin_ms, "Coarse bin length, ms");
  convert->add_option("--frames-per-bin", frames_per_bin, "Fine frames per bin");
  convert->add_option("--width", width, "Sensor width (CSV input only)");
  convert->add_option("--height", height, "Sensor height (CSV input only)");

  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic corpus");
  std::string synth_config, synth_out;
  synth->add_option("--config", synth_config, "Synth config JSON")->required();
  synth->add_option("--out-dir", synth_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model on a corpus");
  std::string train_data, train_config, train_out, train_log;
  train->add_option("--data", train_data, "Corpus manifest JSON")->required();
  train->add_option("--config", train_config, "Run config JSON {model, train}")->required();
  train->add_option("--out", train_out, "Output checkpoint path")->required();
  train->add_option("--log", train_log, "JSON-lines training log (default <out>.log.jsonl)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_data, eval_ckpt, eval_report, eval_split = "test";
  eval->add_option("--data", eval_data, "Corpus manifest JSON")->required();
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
  eval->add_option("--report", eval_report, "Output report JSON")->required();
  eval->add_option("--split", eval_split, "Split to evaluate (train|val|test)");

  auto* ablate = app.add_subcommand("ablate", "Four-variant module ablation");
  std::string ab_data, ab_config, ab_report;
  ablate->add_option("--data", ab_data, "Corpus manifest JSON")->required();
  ablate->add_option("--config", ab_config, "Run config JSON {model, train, seeds}")
      ->required();
  ablate->add_option("--report", ab_report, "Output report JSON")->required();

  auto* stats = app.add_subcommand("stats", "Event-rate and duration analytics");
  std::string st_data, st_group = "subject", st_report;
  stats->add_option("--data", st_data, "Corpus manifest JSON")->required();
  stats->add_option("--group-by", st_group, "subject|class|handedness");
  stats->add_option("--report", st_report, "Output report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the usage message to stderr
    return 1;
  }

  evg::set_thread_limit(threads);

  try {
    if (convert->parsed())
      return run_convert(in_path, out_path, bin_ms, frames_per_bin, width, height);
    if (synth->parsed()) return run_synth(synth_config, synth_out);
    if (train->parsed()) return run_train(train_data, train_config, train_out, train_log);
    if (eval->parsed()) return run_eval(eval_data, eval_ckpt, eval_report, eval_split);
    if (ablate->parsed()) return run_ablate(ab_data, ab_config, ab_report);
    if (stats->parsed()) return run_stats(st_data, st_group, st_report);
  } catch (const evg::numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const evg::data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
