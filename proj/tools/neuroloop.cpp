// neuroloop: command-line entry point for the offline pipeline and the
// live session server.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "neuroloop/neuroloop.hpp"
#include "neuroloop/sessiond/server.hpp"

namespace fs = std::filesystem;
using namespace neuroloop;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

struct FeatureFlags {
  std::string filter = "lowpass:0.5";
  double window = 6.0, stride = 1.0;
  std::string stats = "all";
  std::string labels = "binary";
  double min_baseline = kDefaultBaselineSeconds;
  bool skip_short = false;

  FeatureOptions options() const {
    FeatureOptions o;
    o.filter = parse_filter(filter);
    o.window.duration_s = window;
    o.window.stride_s = stride;
    o.window.statistics = parse_statistics(stats);
    o.labels = parse_label_kind(labels);
    o.min_baseline_s = min_baseline;
    return o;
  }
};

struct ModelFlags {
  std::string model = "rforest";
  std::vector<std::string> params;
  std::string class_weights;

  ml::ModelSpec spec(ml::Task task, const Common& c) const {
    ml::ModelSpec s;
    s.kind = ml::parse_kind(model);
    s.task = task;
    s.seed = c.seed;
    s.jobs = c.jobs;
    for (const auto& p : params) {
      const auto eq = p.find('=');
      if (eq == std::string::npos) throw UsageError("--param expects key=value, got '" + p + "'");
      ml::set_param(s, p.substr(0, eq), p.substr(eq + 1));
    }
    if (!class_weights.empty()) ml::set_param(s, "class_weights", class_weights);
    ml::validate(s);
    return s;
  }
};

PipelineConfig load(const Common& c) { return c.config.empty() ? PipelineConfig{} : load_config(c.config); }

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "TOML-style constants file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
}

void add_features(CLI::App* app, FeatureFlags& f) {
  app->add_option("--filter", f.filter, "none | lowpass:F | bandpass:LO:HI");
  app->add_option("--window", f.window, "window length in seconds");
  app->add_option("--stride", f.stride, "window stride in seconds");
  app->add_option("--stats", f.stats, "comma-separated statistics or 'all'");
  app->add_option("--labels", f.labels, "binary | discrete | continuous");
  app->add_option("--min-baseline", f.min_baseline, "minimum baseline seconds");
  app->add_flag("--skip-short", f.skip_short, "skip demonstrations shorter than one window");
}

void add_model(CLI::App* app, ModelFlags& m) {
  app->add_option("--model", m.model, "svm | knn | dtree | rforest | mlp");
  app->add_option("--param", m.params, "hyperparameter key=value (repeatable)");
  app->add_option("--class-weights", m.class_weights, "balanced | none");
}

std::vector<std::string> expand_inputs(const std::vector<std::string>& in) {
  std::vector<std::string> files;
  for (const auto& p : in) {
    if (fs::is_directory(p)) {
      auto f = demo_files(p);
      files.insert(files.end(), f.begin(), f.end());
    } else if (fs::is_regular_file(p)) {
      files.push_back(p);
    } else {
      throw IoError("no such file or directory: " + p);
    }
  }
  if (files.empty()) throw IoError("no demonstration files found");
  return files;
}

std::vector<DemoFeatures> load_features(const std::vector<std::string>& in, const FeatureFlags& ff, unsigned jobs) {
  const auto files = expand_inputs(in);
  std::vector<Demonstration> demos(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) { demos[i] = read_demonstration(files[i]); });
  std::vector<std::string> ids;
  for (const auto& f : files) ids.push_back(fs::path(f).stem().string());
  std::vector<std::string> skipped;
  auto out = demo_feature_set(demos, ff.options(), jobs, ids, ff.skip_short ? &skipped : nullptr);
  for (const auto& s : skipped) std::cerr << "skipped " << s << ": shorter than one window\n";
  if (out.empty()) throw ValidationError("dataset", "no demonstration long enough for one window");
  return out;
}

ml::Task task_for(LabelKind k) { return k == LabelKind::continuous ? ml::Task::regress : ml::Task::classify; }

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  return out;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& r) {
  if (r.task == ml::Task::classify) {
    out << "class,precision,recall,f1,support\n";
    for (const auto& c : r.per_class)
      out << c.label << ',' << c.precision << ',' << c.recall << ',' << c.f1 << ',' << c.support << '\n';
  } else {
    out << "mse,mae,r2\n" << r.mse << ',' << r.mae << ',' << r.r2 << '\n';
  }
}

std::vector<std::uint64_t> seed_list(std::uint64_t base, std::size_t n) {
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(derive_seed(base, 0x5417ULL, i));
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neuroloop: synthetic implicit-feedback pipeline"};
  app.require_subcommand(1);
  Common common;

  // gen
  auto* gen = app.add_subcommand("gen", "generate synthetic demonstrations");
  add_common(gen, common);
  std::string domain = "reach", condition = "passive", gen_out, mode = "mixed", source;
  std::size_t episodes = 10;
  std::optional<std::size_t> bank_size;
  double p = 0.3;
  std::optional<double> white_sigma;
  gen->add_option("--domain", domain, "flappy | lander | reach");
  gen->add_option("--condition", condition, "passive | active");
  gen->add_option("--episodes", episodes, "number of demonstrations");
  gen->add_option("--p", p, "probability an episode switches to an injected policy");
  gen->add_option("--mode", mode, "suboptimal | worst_case | mixed");
  gen->add_option("--bank-size", bank_size, "policies in the bank");
  gen->add_option("--white-sigma", white_sigma, "white-noise standard deviation");
  gen->add_option("--source", source, "regressor source: binary | continuous");
  gen->add_option("--out", gen_out, "output directory")->required();

  // bank
  auto* bankcmd = app.add_subcommand("bank", "build and calibrate a policy bank");
  add_common(bankcmd, common);
  std::string bank_out;
  bankcmd->add_option("--domain", domain, "flappy | lander | reach");
  bankcmd->add_option("--bank-size", bank_size, "policies in the bank");
  bankcmd->add_option("--out", bank_out, "bank JSON path")->required();

  // label
  auto* label = app.add_subcommand("label", "relabel demonstrations in place");
  add_common(label, common);
  std::string bank_path;
  std::vector<std::string> inputs;
  label->add_option("--bank", bank_path, "calibrated bank JSON")->required()->check(CLI::ExistingFile);
  label->add_option("--in", inputs, "demonstration files or directories")->required();

  // features
  auto* feat = app.add_subcommand("features", "extract windowed features to CSV");
  add_common(feat, common);
  FeatureFlags ff;
  std::string feat_out;
  add_features(feat, ff);
  feat->add_option("--in", inputs, "demonstration files or directories")->required();
  feat->add_option("--out", feat_out, "feature CSV path")->required();

  // train
  auto* train = app.add_subcommand("train", "fit a model on a feature CSV");
  add_common(train, common);
  ModelFlags mf;
  std::string task = "classify", train_in, train_out;
  add_model(train, mf);
  train->add_option("--task", task, "classify | regress");
  train->add_option("--in", train_in, "feature CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "model JSON path")->required();

  // eval / transfer / ablate share dataset and model flags
  std::string split = "demo:0.8", report, emit_csv, eval_condition = "both";
  std::size_t shuffle_seeds = 0;
  bool pooled = false;
  std::vector<std::string> subsets;
  auto* eval = app.add_subcommand("eval", "train/test evaluation on a demonstration split");
  auto* transfer = app.add_subcommand("transfer", "cross-condition transfer grid");
  auto* ablate = app.add_subcommand("ablate", "compare statistic subsets on one split");
  for (auto* c : {eval, transfer, ablate}) {
    add_common(c, common);
    add_features(c, ff);
    add_model(c, mf);
    c->add_option("--task", ff.labels, "label kind: binary | discrete | continuous");
    c->add_option("--in", inputs, "demonstration files or directories")->required();
    c->add_option("--split", split, "demo:F or participant:F");
    c->add_option("--report", report, "report JSON path (default stdout)");
    c->add_option("--emit-csv", emit_csv, "also write plotting data as CSV");
  }
  eval->add_option("--condition", eval_condition, "passive | active | both");
  eval->add_option("--shuffle-control", shuffle_seeds, "label-shuffle control runs");
  transfer->add_flag("--pooled", pooled, "also train on both conditions");
  ablate->add_option("--subset", subsets, "statistic subset, e.g. mean,std,skewness (repeatable)")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "run the live session server");
  add_common(serve, common);
  sessiond::ServerOptions so;
  std::vector<std::string> bank_files;
  serve->add_option("--port", so.port, "TCP port");
  serve->add_option("--address", so.address, "bind address");
  serve->add_option("--tick-ms", so.tick_ms, "tick interval in milliseconds")->check(CLI::PositiveNumber);
  serve->add_option("--out", so.out_dir, "directory for finished demonstrations");
  serve->add_option("--bank", bank_files, "calibrated bank JSON (repeatable)")->check(CLI::ExistingFile);
  serve->add_option("--bank-size", bank_size, "policies per lazily built bank");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const PipelineConfig cfg = load(common);

    if (*gen) {
      if (!(p >= 0.0 && p <= 1.0)) throw UsageError("--p must lie in [0, 1]");
      GenOptions g;
      g.domain = parse_domain(domain);
      g.condition = parse_condition(condition);
      g.demonstrations = episodes;
      g.bank_size = bank_size.value_or(cfg.bank_size);
      g.seed = common.seed;
      g.injection = cfg.injection;
      g.injection.p_switch = p;
      g.injection.mode = parse_injection_mode(mode);
      g.synth = cfg.synth;
      if (white_sigma) g.synth.noise.white_sigma = *white_sigma;
      if (!source.empty()) {
        if (source == "binary") g.synth.source = RegressorSource::binary;
        else if (source == "continuous") g.synth.source = RegressorSource::continuous;
        else throw UsageError("--source must be binary or continuous");
      }
      g.env = cfg.env;
      g.bank = cfg.bank;
      g.calibration = cfg.calibration;
      g.regressor_theta2_multiple = cfg.regressor_theta2_multiple;
      g.jobs = common.jobs;
      validate(g.synth);
      const auto bank = make_calibrated_bank(g);
      const auto demos = generate_dataset(bank, g);
      fs::create_directories(gen_out);
      for (std::size_t i = 0; i < demos.size(); ++i)
        write_demonstration(demos[i].demo, (fs::path(gen_out) / demo_file_name(i)).string());
      write_json(to_json(bank), (fs::path(gen_out) / "bank.json").string());
      std::cerr << "wrote " << demos.size() << " demonstrations to " << gen_out << '\n';
      return 0;
    }

    if (*bankcmd) {
      GenOptions g;
      g.domain = parse_domain(domain);
      g.bank_size = bank_size.value_or(cfg.bank_size);
      g.seed = common.seed;
      g.env = cfg.env;
      g.bank = cfg.bank;
      g.calibration = cfg.calibration;
      g.injection = cfg.injection;
      write_json(to_json(make_calibrated_bank(g)), bank_out);
      return 0;
    }

    if (*label) {
      std::ifstream in(bank_path);
      const auto bank = bank_from_json(json::parse(in));
      for (const auto& f : expand_inputs(inputs)) {
        auto d = read_demonstration(f);
        relabel(d, bank, cfg.env);
        write_demonstration(d, f);
      }
      return 0;
    }

    if (*feat) {
      const auto files = expand_inputs(inputs);
      std::vector<Demonstration> demos(files.size());
      parallel_for(files.size(), common.jobs, [&](std::size_t i) { demos[i] = read_demonstration(files[i]); });
      std::vector<std::string> skipped;
      const auto m = dataset_features(demos, ff.options(), common.jobs, ff.skip_short ? &skipped : nullptr);
      for (const auto& s : skipped) std::cerr << "skipped " << s << ": shorter than one window\n";
      write_features_csv(m, feat_out);
      return 0;
    }

    if (*train) {
      const auto spec = mf.spec(ml::parse_task(task), common);
      const auto m = read_features_csv(train_in);
      ml::save_model(ml::fit(spec, m), train_out);
      return 0;
    }

    if (*eval || *transfer || *ablate) {
      const auto opt = ff.options();
      const auto spec = mf.spec(task_for(opt.labels), common);
      auto plan = parse_split(split, common.seed);
      auto data = load_features(inputs, ff, common.jobs);
      const json feature_meta = {{"filter", to_string(opt.filter)},
                                 {"window_s", opt.window.duration_s},
                                 {"stride_s", opt.window.stride_s},
                                 {"statistics", join_statistics(opt.window.statistics)},
                                 {"labels", to_string(opt.labels)}};
      if (*eval) {
        if (eval_condition != "both") plan.condition = parse_condition(eval_condition);
        plan = make_split(data, plan);
        auto r = evaluate(spec, data, plan);
        r.metadata["features"] = feature_meta;
        json j = to_json(r);
        if (shuffle_seeds > 0) {
          const auto f1 = shuffle_control(spec, data, plan, seed_list(common.seed, shuffle_seeds));
          double mean = 0.0;
          for (double v : f1) mean += v;
          j["shuffle_control"] = {{"macro_f1", f1}, {"mean", mean / static_cast<double>(f1.size())}};
        }
        write_json(j, report);
        std::cerr << text_table(r);
        if (!emit_csv.empty()) {
          auto out = open_csv(emit_csv);
          write_metrics_csv(out, r);
        }
        return 0;
      }
      if (*transfer) {
        auto t = transfer_matrix(spec, data, plan, pooled);
        json j = to_json(t);
        j["features"] = feature_meta;
        write_json(j, report);
        const char* names[2] = {"passive", "active"};
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            std::cerr << names[a] << " -> " << names[b] << "  macro-F1 " << t.cells[a][b].macro_f1 << '\n';
        if (!emit_csv.empty()) {
          auto out = open_csv(emit_csv);
          out << "train,test,macro_f1,accuracy,mse,mae,r2\n";
          auto row = [&](const std::string& tr, const std::string& te, const MetricsReport& r) {
            out << tr << ',' << te << ',' << r.macro_f1 << ',' << r.accuracy << ',' << r.mse << ',' << r.mae << ','
                << r.r2 << '\n';
          };
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) row(names[a], names[b], t.cells[a][b]);
          if (t.pooled[0]) {
            row("pooled", "passive", *t.pooled[0]);
            row("pooled", "active", *t.pooled[1]);
            row("pooled", "both", *t.pooled[2]);
          }
        }
        return 0;
      }
      // ablate
      std::vector<std::vector<Statistic>> sets;
      for (const auto& s : subsets) {
        std::vector<std::string> names;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ','))
          if (!item.empty()) names.push_back(item);
        if (names.size() == 1 && names[0] == "all")
          sets.emplace_back(kAllStatistics.begin(), kAllStatistics.end());
        else
          sets.push_back(statistics_from_names(names));
      }
      plan = make_split(data, plan);
      const auto rows = ablate_features(spec, data, plan, sets);
      json j = {{"split", to_json(plan)}, {"features", feature_meta}, {"rows", json::array()}};
      for (const auto& r : rows)
        j["rows"].push_back({{"statistics", join_statistics(r.statistics)}, {"report", to_json(r.report)}});
      write_json(j, report);
      for (const auto& r : rows)
        std::cerr << join_statistics(r.statistics) << "  macro-F1 " << r.report.macro_f1 << '\n';
      if (!emit_csv.empty()) {
        auto out = open_csv(emit_csv);
        out << "statistics,macro_f1,accuracy,mse,mae,r2\n";
        for (const auto& r : rows)
          out << '"' << join_statistics(r.statistics) << "\"," << r.report.macro_f1 << ',' << r.report.accuracy
              << ',' << r.report.mse << ',' << r.report.mae << ',' << r.report.r2 << '\n';
      }
      return 0;
    }

    if (*serve) {
      so.seed = common.seed;
      so.threads = std::max(2u, common.jobs);
      so.bank_size = bank_size.value_or(cfg.bank_size);
      so.defaults.env = cfg.env;
      so.defaults.synth = cfg.synth;
      so.defaults.injection = cfg.injection;
      so.defaults.regressor_theta2_multiple = cfg.regressor_theta2_multiple;
      so.calibration = cfg.calibration;
      sessiond::Server server(so);
      for (const auto& f : bank_files) {
        std::ifstream in(f);
        server.set_bank(std::make_shared<const PolicyBank>(bank_from_json(json::parse(in))));
      }
      server.stop_on_signals();
      server.start();
      std::cerr << "listening on " << so.address << ':' << server.port() << '\n';
      server.wait();
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "ValidationError: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "ParseError: " << e.what() << '\n';
    return 1;
  } catch (const VersionError& e) {
    std::cerr << "VersionError: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    std::cerr << "IoError: " << e.what() << '\n';
    return 1;
  } catch (const AlignmentError& e) {
    std::cerr << "AlignmentError: " << e.what() << '\n';
    return 1;
  } catch (const ProtocolError& e) {
    std::cerr << "ProtocolError: " << e.what() << '\n';
    return 1;
  } catch (const BankError& e) {
    std::cerr << "BankError: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
