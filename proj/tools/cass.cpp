// Command-line entry point: dataset generation, three-stage training,
// evaluation reports, and ablation tables, all reproducible from manifests.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cass/core.hpp"
#include "cass/dataset.hpp"
#include "cass/evalkit.hpp"
#include "cass/manifest.hpp"
#include "cass/nets.hpp"
#include "cass/shapegen.hpp"
#include "cass/train.hpp"

namespace {

namespace fs = std::filesystem;
using namespace cass;

// Relative output paths land under CASS_OUT_DIR when it is set.
std::string resolve_out(const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  const char* base = std::getenv("CASS_OUT_DIR");
  if (!base || !*base) return path;
  return (fs::path(base) / path).string();
}

void ensure_parent_dir(const std::string& path) {
  fs::path parent = fs::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw io_error("cannot create directory " + parent.string());
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Adds one manifest entry per config key, prefixed "config.".
void add_config_entries(RunManifest& m, const TrainConfig& c) {
  std::istringstream is(serialize_train_config(c));
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    m.add("config." + line.substr(0, eq), line.substr(eq + 1));
  }
}

std::vector<int> split_records(const Dataset& data, const std::string& split) {
  check_arg(split == "test" || split == "train" || split == "all",
            "split must be test, train, or all");
  std::vector<int> out;
  for (std::size_t r = 0; r < data.records.size(); ++r) {
    bool test = is_test_instance(data.records[r].instance);
    if (split == "all" || (split == "test") == test)
      out.push_back(static_cast<int>(r));
  }
  check(!out.empty(), "selected split is empty");
  return out;
}

std::string derived_path(const std::string& csv_path, const char* tag) {
  std::string out = csv_path;
  const std::string suffix = ".csv";
  if (out.size() > suffix.size() &&
      out.compare(out.size() - suffix.size(), suffix.size(), suffix) == 0)
    out.resize(out.size() - suffix.size());
  return out + "." + tag + ".csv";
}

struct GenArgs {
  std::string categories = "bottle,laptop,camera";
  int instances = 200;
  int views = 4;
  int points = 128;
  int obs_points = 96;
  double visibility = 0.8;
  double noise = 0.002;
  std::uint64_t seed = 1;
  std::string out = "dataset.cass";
};

int cmd_gen_data(const GenArgs& args) {
  GenOptions opt;
  opt.categories = split_commas(args.categories);
  opt.instances_per_category = args.instances;
  opt.views_per_instance = args.views;
  opt.points_m = args.points;
  opt.obs_points_p = args.obs_points;
  opt.visibility = args.visibility;
  opt.noise_sigma = args.noise;
  opt.seed = args.seed;

  std::string out = resolve_out(args.out);
  ensure_parent_dir(out);
  Dataset data = generate_dataset(opt);
  write_dataset(data, out);

  RunManifest m;
  m.add("tool_version", std::string(kVersion));
  m.add("command", std::string("gen-data"));
  m.add("categories", args.categories);
  m.add("instances_per_category", args.instances);
  m.add("views_per_instance", args.views);
  m.add("points_m", args.points);
  m.add("obs_points_p", args.obs_points);
  m.add("visibility", args.visibility);
  m.add("noise_sigma", args.noise);
  m.add("seed", args.seed);
  m.add_file("dataset", out);
  m.write(out + ".manifest");

  std::cout << "wrote " << out << "\n"
            << "  categories " << data.categories.size() << ", instances "
            << data.instances.size() << ", records " << data.records.size()
            << ", M " << data.points_m << ", P " << data.obs_points_p << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string stage = "all";
  std::string ablation;
  std::string resume;
  std::string out_dir = "run";
};

int cmd_train(const TrainArgs& args) {
  check_arg(args.stage == "1" || args.stage == "2" || args.stage == "3" ||
                args.stage == "all",
            "--stage must be 1, 2, 3, or all");
  TrainConfig config =
      args.config.empty() ? TrainConfig{} : load_train_config(args.config);
  if (!args.ablation.empty()) config.ablation = args.ablation;
  validate_train_config(config);
  if (args.stage != "1" && args.stage != "all")
    check_arg(!args.resume.empty(),
              "--stage " + args.stage +
                  " needs --resume with the previous stage's checkpoint");

  std::string out_dir = resolve_out(args.out_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create directory " + out_dir);

  Dataset data = read_dataset(args.data);

  RunManifest m;
  m.add("tool_version", std::string(kVersion));
  m.add("command", std::string("train"));
  m.add("stage", args.stage);
  add_config_entries(m, config);
  m.add_file("data", args.data);

  std::vector<int> stages;
  if (args.stage == "all")
    stages = {1, 2, 3};
  else
    stages = {args.stage[0] - '0'};

  TrainSession session =
      args.resume.empty()
          ? TrainSession(config, data)
          : TrainSession(config, data, load_model(args.resume));
  if (!args.resume.empty()) m.add_file("resume", args.resume);

  for (int stage : stages) {
    session.run_stage(stage);
    std::string ckpt =
        (fs::path(out_dir) / ("stage" + std::to_string(stage) + ".ckpt"))
            .string();
    save_model(session.model(), ckpt, {{"stage", std::to_string(stage)}});
    m.add_file("stage" + std::to_string(stage) + "_checkpoint", ckpt);
    std::cout << "stage " << stage << " done, checkpoint " << ckpt << "\n";
  }

  std::string loss_csv = (fs::path(out_dir) / "loss.csv").string();
  write_loss_csv(session.curve(), loss_csv);
  m.add_file("loss_csv", loss_csv);
  m.write((fs::path(out_dir) / "manifest.txt").string());
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string out_csv = "metrics.csv";
  std::string svg;
  int iou_samples = 200000;
};

int cmd_eval(const EvalArgs& args) {
  Dataset data = read_dataset(args.data);
  std::map<std::string, std::string> header;
  Model model = load_model(args.checkpoint, &header);
  check_arg(model.config().points_m == static_cast<int>(data.points_m),
            "checkpoint points_m does not match dataset");

  std::vector<int> records = split_records(data, args.split);
  std::vector<PredictionRecord> preds = predict_records(model, data, records);
  EvalOptions opt;
  opt.iou_samples = args.iou_samples;
  std::vector<RecordStats> stats = record_stats(preds, data.categories, opt);
  MetricReport report = report_from_stats(stats, data.categories);

  std::string out_csv = resolve_out(args.out_csv);
  ensure_parent_dir(out_csv);
  write_metric_csv(report, out_csv);

  RunManifest m;
  m.add("tool_version", std::string(kVersion));
  m.add("command", std::string("eval"));
  m.add("split", args.split);
  m.add("iou_samples", args.iou_samples);
  m.add_file("checkpoint", args.checkpoint);
  m.add_file("data", args.data);
  m.add_file("metrics_csv", out_csv);

  std::string ap_csv = derived_path(out_csv, "ap");
  ApCurves curves = ap_curves(stats, data.categories);
  write_ap_csv(curves, ap_csv);
  m.add_file("ap_csv", ap_csv);
  if (!args.svg.empty()) {
    std::string svg = resolve_out(args.svg);
    ensure_parent_dir(svg);
    write_ap_svg(curves, svg);
    m.add_file("svg", svg);
  }

  if (records.size() >= 50) {
    Model untrained(model.config(), model.init_seed());
    ProbeReport probe =
        factorization_probe(model, untrained, data, records, data.gen_seed);
    std::string probe_csv = derived_path(out_csv, "probe");
    write_probe_csv(probe, probe_csv);
    m.add_file("probe_csv", probe_csv);
  } else {
    std::cerr << "note: fewer than 50 records, skipping factorization probe\n";
  }

  m.write(out_csv + ".manifest");

  const MetricRow& o = report.overall();
  std::cout << "split " << args.split << ", records " << o.count << "\n";
  std::printf(
      "overall IoU25 %.3f IoU50 %.3f 5d5cm %.3f 10d5cm %.3f 10d10cm %.3f CD "
      "%.3f EMD %.4f\n",
      o.iou25, o.iou50, o.d5cm5, o.d10cm5, o.d10cm10, o.cd_x1e3, o.emd);
  return 0;
}

struct AblateArgs {
  std::string config;
  std::string data;
  std::string ablations = "none,no_cass,no_bm,no_dm,no_vae";
  std::string out = "ablations.csv";
  int iou_samples = 200000;
};

void write_ablation_csv(const std::string& path,
                        const std::vector<std::pair<std::string, MetricRow>>& rows) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open ablation csv for writing: " + path);
  os << "ablation,count,IoU25,IoU50,5d5cm,10d5cm,10d10cm,CD,EMD\n";
  char buf[256];
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof buf,
                  "%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  name.c_str(), r.count, r.iou25, r.iou50, r.d5cm5, r.d10cm5,
                  r.d10cm10, r.cd_x1e3, r.emd);
    os << buf;
  }
  if (!os) throw io_error("write failure on ablation csv: " + path);
}

int cmd_ablate(const AblateArgs& args) {
  std::vector<std::string> ablations = split_commas(args.ablations);
  check_arg(!ablations.empty(), "no ablations requested");
  TrainConfig base =
      args.config.empty() ? TrainConfig{} : load_train_config(args.config);

  Dataset data = read_dataset(args.data);
  std::string out = resolve_out(args.out);
  ensure_parent_dir(out);

  std::vector<std::pair<std::string, MetricRow>> rows;
  for (const std::string& ablation : ablations) {
    TrainConfig config = base;
    config.ablation = ablation;
    validate_train_config(config);

    try {
      TrainSession session(config, data);
      session.run_stage(1);
      session.run_stage(2);
      session.run_stage(3);

      std::vector<int> records = split_records(data, "test");
      std::vector<PredictionRecord> preds =
          predict_records(session.model(), data, records);
      EvalOptions opt;
      opt.iou_samples = args.iou_samples;
      MetricReport report = evaluate(preds, data.categories, opt);
      rows.emplace_back(ablation, report.overall());
    } catch (...) {
      write_ablation_csv(out, rows);  // keep what finished
      std::cerr << "ablation '" << ablation << "' failed; partial table at "
                << out << "\n";
      throw;
    }
    write_ablation_csv(out, rows);
    const MetricRow& r = rows.back().second;
    std::printf("%-8s 5d5cm %.3f 10d5cm %.3f CD %.3f EMD %.4f\n",
                ablation.c_str(), r.d5cm5, r.d10cm5, r.cd_x1e3, r.emd);
  }

  RunManifest m;
  m.add("tool_version", std::string(kVersion));
  m.add("command", std::string("ablate"));
  m.add("ablations", args.ablations);
  add_config_entries(m, base);
  m.add_file("data", args.data);
  m.add_file("table", out);
  m.write(out + ".manifest");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "canonical shape space: category-level 6D pose and size estimation"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "generate a procedural dataset");
  g->add_option("--categories", gen.categories, "comma-separated category names");
  g->add_option("--instances-per-category", gen.instances, "instances per category");
  g->add_option("--views-per-instance", gen.views, "observation views per instance");
  g->add_option("--points", gen.points, "canonical points per instance (M)");
  g->add_option("--obs-points", gen.obs_points, "observed points cap (P)");
  g->add_option("--visibility", gen.visibility, "visible fraction in [0.3,1]");
  g->add_option("--noise", gen.noise, "observation noise sigma (meters)");
  g->add_option("--seed", gen.seed, "generation seed");
  g->add_option("--out", gen.out, "output dataset path");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "run the three-stage schedule");
  t->add_option("--config", tr.config, "key=value training config file");
  t->add_option("--data", tr.data, "dataset path")->required();
  t->add_option("--stage", tr.stage, "1, 2, 3, or all");
  t->add_option("--ablation", tr.ablation,
                "none, no_cass, no_bm, no_dm, or no_vae (overrides config)");
  t->add_option("--resume", tr.resume, "checkpoint to start from");
  t->add_option("--out-dir", tr.out_dir, "output directory");

  EvalArgs ev;
  auto* e = app.add_subcommand(
      "eval",
      "evaluate a checkpoint; metrics CSV columns: "
      "category,count,IoU25,IoU50,5d5cm,10d5cm,10d10cm,CD,EMD (CD in 1e-3); "
      "also writes <out>.ap.csv (metric,category,threshold,ap) and "
      "<out>.probe.csv (feature,median_error_deg,chance_error_deg)");
  e->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
  e->add_option("--data", ev.data, "dataset path")->required();
  e->add_option("--split", ev.split, "test, train, or all");
  e->add_option("--out-csv", ev.out_csv, "metrics CSV path");
  e->add_option("--svg", ev.svg, "AP-curve SVG path");
  e->add_option("--iou-samples", ev.iou_samples,
                "Monte-Carlo samples for box IoU (>= 100000)");

  AblateArgs ab;
  auto* a = app.add_subcommand(
      "ablate",
      "train + evaluate each ablation; CSV columns: "
      "ablation,count,IoU25,IoU50,5d5cm,10d5cm,10d10cm,CD,EMD");
  a->add_option("--config", ab.config, "key=value training config file");
  a->add_option("--data", ab.data, "dataset path")->required();
  a->add_option("--ablations", ab.ablations, "comma-separated ablation list");
  a->add_option("--out", ab.out, "output table path");
  a->add_option("--iou-samples", ab.iou_samples,
                "Monte-Carlo samples for box IoU (>= 100000)");

  try {
    app.parse(argc, argv);
    if (g->parsed()) return cmd_gen_data(gen);
    if (t->parsed()) return cmd_train(tr);
    if (e->parsed()) return cmd_eval(ev);
    if (a->parsed()) return cmd_ablate(ab);
    return 2;
  } catch (const CLI::ParseError& ex) {
    int code = app.exit(ex);
    return code == 0 ? 0 : 2;
  } catch (const io_error& ex) {
    std::cerr << "io error: " << ex.what() << "\n";
    return 4;
  } catch (const numeric_error& ex) {
    std::cerr << "numeric error: " << ex.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& ex) {
    std::cerr << "usage error: " << ex.what() << "\n";
    return 2;
  } catch (const error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "unexpected error: " << ex.what() << "\n";
    return 1;
  }
}
