#include "ecgdx/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>

#include "ecgdx/core.hpp"
#include "ecgdx/dsp.hpp"
#include "ecgdx/features.hpp"
#include "ecgdx/metrics.hpp"
#include "ecgdx/nn/checkpoint.hpp"
#include "ecgdx/nn/train.hpp"
#include "ecgdx/qrs.hpp"
#include "ecgdx/synth.hpp"

namespace ecgdx::cli {

namespace fs = std::filesystem;

namespace {

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto log = std::make_shared<spdlog::logger>("ecgdx", sink);
  log->set_pattern("[%l] %v");
  const char* env = std::getenv("ECGDX_LOG");
  log->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
  return log;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_text(path, text);
  }
}

using Json = nlohmann::ordered_json;

Json opt(const std::optional<std::size_t>& v) { return v ? Json(*v) : Json(nullptr); }

Json detection_json(const nn::PreparedRecord& rec) {
  Json j;
  j["id"] = rec.signal.id();
  j["sample_rate_hz"] = rec.signal.sample_rate_hz();
  std::vector<std::size_t> peaks;
  Json beats = Json::array();
  for (const auto& b : rec.fiducials.beats) {
    peaks.push_back(b.r_peak);
    beats.push_back(Json{{"p_onset", opt(b.p_onset)},
                     {"qrs_onset", b.qrs_onset},
                     {"r_peak", b.r_peak},
                     {"qrs_offset", b.qrs_offset},
                     {"t_offset", opt(b.t_offset)}});
  }
  j["r_peaks"] = peaks;
  j["beats"] = beats;
  Json regions = Json::array();
  for (const auto& [s, e] : rec.regions) regions.push_back(Json::array({s, e}));
  j["regions"] = regions;
  return j;
}

std::string features_csv(std::span<const nn::PreparedRecord> records) {
  std::ostringstream os;
  os << "record_id";
  for (auto name : features::kFeatureNames) os << ',' << name;
  os << '\n';
  char buf[32];
  for (const auto& r : records) {
    const auto f = nn::window_features(r, {0, r.signal.n_samples()});
    os << r.signal.id();
    for (double v : f) {
      std::snprintf(buf, sizeof buf, ",%.6g", v);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::array<std::size_t, 4> parse_widths(const std::string& text) {
  std::array<std::size_t, 4> w{};
  std::stringstream ss(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i == 4) break;
    w[i++] = std::stoul(item);
  }
  if (i != 4 || std::getline(ss, item, ',')) throw CLI::ValidationError("--widths", "expected four comma-separated channel counts");
  return w;
}

struct TrainArgs {
  std::string data, valid, out = "model.eckp", log = "train_log.csv", pool = "both", widths = "32,64,128,256";
  nn::TrainConfig config;
  bool no_features = false, no_heuristic_crop = false;
};

struct Args {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  // synth
  std::string out, mix;
  double min_duration = 10.0, max_duration = 20.0, noise = 0.02;
  // single-record commands
  std::string in, data, ckpt, format = "csv";
  std::vector<std::string> inputs;
  bool raw = false;
  double threshold = 0.5;
  std::size_t crop_len = augment::kDefaultCropLength;
  TrainArgs train;
};

void run_synth(const Args& a, std::ostream& out, spdlog::logger& log) {
  synth::DatasetOptions o;
  o.min_duration_s = a.min_duration;
  o.max_duration_s = std::max(a.min_duration, a.max_duration);
  o.noise.white_sigma_mv = a.noise;
  const auto data = synth::generate_dataset(synth::parse_mix(a.mix), a.seed, o);
  fs::create_directories(a.out);
  synth::write_dataset(data, a.out);
  log.info("wrote {} records", data.dataset.size());
  out << "wrote " << data.dataset.size() << " records to " << a.out << '\n';
}

void run_denoise(const Args& a, std::ostream& out) {
  save_record(dsp::denoise(load_record(a.in)), a.out);
  out << "wrote " << a.out << '\n';
}

nn::PreparedRecord prepare_for_detection(const EcgRecord& rec, bool raw) {
  if (!raw) return nn::prepare_record(rec);
  nn::PreparedRecord p{rec, qrs::Fiducials{rec.sample_rate_hz(), rec.n_samples(), {}}, {}, {}};
  p.fiducials = qrs::delineate(rec, qrs::detect_r_peaks(rec));
  p.regions = qrs::mark_irregular(rec, p.fiducials);
  return p;
}

void run_detect(const Args& a, std::ostream& out) {
  const auto rec = prepare_for_detection(load_record(a.in), a.raw);
  emit(detection_json(rec).dump(2) + "\n", a.out, out);
}

void run_features(const Args& a, std::ostream& out) {
  std::vector<nn::PreparedRecord> recs;
  if (!a.in.empty()) {
    recs.push_back(nn::prepare_record(load_record(a.in)));
  } else {
    recs = nn::prepare_dataset(load_dataset(a.data), a.threads);
  }
  emit(features_csv(recs), a.out, out);
}

void run_train(const Args& a, std::ostream& out, spdlog::logger& log) {
  TrainArgs t = a.train;
  nn::TrainConfig& c = t.config;
  c.seed = a.seed;
  c.threads = a.threads;
  c.heuristic_crop = !t.no_heuristic_crop;
  c.model.use_features = !t.no_features;
  c.model.pool = t.pool == "avg" ? nn::PoolMode::Avg : t.pool == "max" ? nn::PoolMode::Max : nn::PoolMode::Both;
  c.model.widths = parse_widths(t.widths);
  c.validate();

  Dataset all = load_dataset(t.data, Split::Train);
  Dataset train(Split::Train), valid(Split::Validation);
  if (!t.valid.empty()) {
    train = std::move(all);
    valid = load_dataset(t.valid, Split::Validation);
  } else {
    // Every tenth record is held out for model selection.
    for (std::size_t i = 0; i < all.size(); ++i) {
      (i % 10 == 9 ? valid : train).add(all[i].record, all[i].labels);
    }
    if (valid.empty()) valid = train;
  }
  log.info("training on {} records, validating on {}", train.size(), valid.size());
  const auto result = nn::fit(train, valid, c, [&](const nn::EpochLog& e) {
    log.info("epoch {} loss {:.5f} val_f1 {:.4f} lr {:.3g}", e.epoch, e.train_loss, e.val_macro_f1, e.lr);
  });
  write_text(t.log, nn::format_log(result.log));
  nn::save_checkpoint(result.model, &result.adam, t.out);
  out << "best epoch " << result.best_epoch << ", checkpoint " << t.out << ", log " << t.log << '\n';
}

void run_eval(const Args& a, std::ostream& out) {
  auto ck = nn::load_checkpoint(a.ckpt);
  const Dataset data = load_dataset(a.data, Split::Test);
  const auto recs = nn::prepare_dataset(data, a.threads);
  const auto preds = nn::predict_all(ck.model, recs, a.crop_len, a.threshold);
  std::vector<LabelVector> truths;
  for (const auto& r : data) truths.push_back(r.labels);
  const auto counts = metrics::confusion(preds, truths);
  emit(a.format == "text" ? metrics::report_text(counts) : metrics::report_csv(counts), a.out, out);
}

void run_predict(const Args& a, std::ostream& out) {
  auto ck = nn::load_checkpoint(a.ckpt);
  std::string text = "record_id,labels\n";
  for (const auto& path : a.inputs) {
    const EcgRecord rec = load_record(path);
    text += rec.id() + "," + nn::predict(rec, ck.model, a.threshold, a.crop_len).to_string() + "\n";
  }
  emit(text, a.out, out);
}

void add_seed(CLI::App* app, Args& a) {
  app->add_option("--seed", a.seed, "Seed for every random draw")->capture_default_str();
}

void add_threads(CLI::App* app, Args& a) {
  app->add_option("--threads", a.threads, "Worker threads for per-record preprocessing")
      ->check(CLI::Range(1u, 256u))
      ->capture_default_str();
}

// CLI11 reports missing required options before extras; check extras first.
std::vector<std::string> unknown_flags(CLI::App& app, const std::vector<std::string>& args) {
  std::vector<std::string> bad;
  CLI::App* sub = args.empty() ? nullptr : app.get_subcommand_no_throw(args.front());
  if (!sub) return bad;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const auto& arg = args[i];
    if (arg.size() < 2 || arg[0] != '-' || arg == "--" || std::isdigit(static_cast<unsigned char>(arg[1]))) continue;
    const std::string name = arg.substr(0, arg.find('='));
    if (!sub->get_option_no_throw(name)) bad.push_back(arg);
  }
  return bad;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Args a;
  CLI::App app{"12-lead ECG abnormality detection toolkit", "ecgdx"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled dataset");
  synth->add_option("--out", a.out, "Output directory")->required();
  synth->add_option("--mix", a.mix, "Records per label set, e.g. normal=50,pvc=50 or af+pvc=5")->required();
  synth->add_option("--min-duration", a.min_duration, "Shortest record in seconds")->check(CLI::Range(9.0, 60.0))->capture_default_str();
  synth->add_option("--max-duration", a.max_duration, "Longest record in seconds")->check(CLI::Range(9.0, 60.0))->capture_default_str();
  synth->add_option("--noise", a.noise, "White noise sigma in mV")->check(CLI::NonNegativeNumber)->capture_default_str();
  add_seed(synth, a);

  auto* denoise = app.add_subcommand("denoise", "Wavelet-denoise one record");
  denoise->add_option("--in", a.in, "Input ECG1 file")->required()->check(CLI::ExistingFile);
  denoise->add_option("--out", a.out, "Output ECG1 file")->required();

  auto* detect = app.add_subcommand("detect", "Detect beats, delineate waves and mark irregular regions");
  detect->add_option("--in", a.in, "Input ECG1 file")->required()->check(CLI::ExistingFile);
  detect->add_option("--out", a.out, "Output JSON file (default: stdout)");
  detect->add_flag("--raw", a.raw, "Skip denoising");

  auto* feats = app.add_subcommand("features", "Extract the 20 heuristic features");
  auto* f_in = feats->add_option("--in", a.in, "Input ECG1 file")->check(CLI::ExistingFile);
  auto* f_data = feats->add_option("--data", a.data, "Dataset directory")->check(CLI::ExistingDirectory);
  f_in->excludes(f_data);
  feats->add_option("--out", a.out, "Output CSV file (default: stdout)");
  add_threads(feats, a);

  auto* train = app.add_subcommand("train", "Train a model");
  TrainArgs& t = a.train;
  train->add_option("--data", t.data, "Training dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--valid", t.valid, "Validation dataset directory (default: every tenth training record)")
      ->check(CLI::ExistingDirectory);
  train->add_option("--out", t.out, "Checkpoint path")->capture_default_str();
  train->add_option("--log", t.log, "Training log CSV path")->capture_default_str();
  train->add_option("--epochs", t.config.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--batch-size", t.config.batch_size, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--lr", t.config.lr, "Initial learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--weight-decay", t.config.weight_decay, "L2 weight decay")->check(CLI::NonNegativeNumber)->capture_default_str();
  train->add_option("--patience", t.config.plateau_patience, "Epochs without improvement before the lr is divided")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--factor", t.config.plateau_factor, "Learning-rate divisor on a plateau")->capture_default_str();
  train->add_option("--crop-len", t.config.crop_len, "Crop length in samples")->check(CLI::Range(64, 30000))->capture_default_str();
  train->add_option("--widths", t.widths, "Channels of the four stages")->capture_default_str();
  train->add_option("--pool", t.pool, "Global pooling")->check(CLI::IsMember({"avg", "max", "both"}))->capture_default_str();
  train->add_flag("--no-features", t.no_features, "Do not feed heuristic features to the head");
  train->add_flag("--no-heuristic-crop", t.no_heuristic_crop, "Use uniform random crops");
  add_seed(train, a);
  add_threads(train, a);

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a labelled dataset");
  eval->add_option("--data", a.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--ckpt", a.ckpt, "Checkpoint path")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", a.out, "Output file (default: stdout)");
  eval->add_option("--format", a.format, "Report format")->check(CLI::IsMember({"csv", "text"}))->capture_default_str();
  eval->add_option("--threshold", a.threshold, "Decision threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  eval->add_option("--crop-len", a.crop_len, "Evaluation window in samples")->check(CLI::Range(64, 30000))->capture_default_str();
  add_threads(eval, a);

  auto* pred = app.add_subcommand("predict", "Predict labels for records");
  pred->add_option("--in", a.inputs, "Input ECG1 files")->required()->check(CLI::ExistingFile);
  pred->add_option("--ckpt", a.ckpt, "Checkpoint path")->required()->check(CLI::ExistingFile);
  pred->add_option("--out", a.out, "Output CSV file (default: stdout)");
  pred->add_option("--threshold", a.threshold, "Decision threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  pred->add_option("--crop-len", a.crop_len, "Evaluation window in samples")->check(CLI::Range(64, 30000))->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    if (auto bad = unknown_flags(app, args); !bad.empty()) throw CLI::ExtrasError(bad);
    app.parse(reversed);
    if (feats->parsed() && a.in.empty() && a.data.empty()) {
      throw CLI::RequiredError("features needs --in or --data");
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    CLI::App* context = &app;
    for (CLI::App* sub : app.get_subcommands()) context = sub;
    if (context == &app && !args.empty()) {
      if (CLI::App* named = app.get_subcommand_no_throw(args.front())) context = named;
    }
    err << context->help();
    return kExitUsage;
  }

  auto log = make_logger(err);
  try {
    if (synth->parsed()) run_synth(a, out, *log);
    if (denoise->parsed()) run_denoise(a, out);
    if (detect->parsed()) run_detect(a, out);
    if (feats->parsed()) run_features(a, out);
    if (train->parsed()) run_train(a, out, *log);
    if (eval->parsed()) run_eval(a, out);
    if (pred->parsed()) run_predict(a, out);
  } catch (const CLI::ValidationError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace ecgdx::cli
