// Command-line entry point: gen-data, train, distill, eval, gradcheck.
//
// Exit codes: 0 success, 1 runtime failure (non-finite loss, corrupted or
// unreadable file, failed check), 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "avd/checkpoint.hpp"
#include "avd/classifier.hpp"
#include "avd/data.hpp"
#include "avd/errors.hpp"
#include "avd/gradcheck_suite.hpp"
#include "avd/image_io.hpp"
#include "avd/run_config.hpp"
#include "avd/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Carries a process exit code out of a subcommand.
struct ExitStatus {
  int code;
};

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw avd::ConfigError(std::string(what) + " not found: " + path.string());
}

avd::VideoDataset load_dataset_checked(const fs::path& path) {
  require_file(path, "dataset");
  return avd::load_dataset(path);
}

void run_gen_data(const avd::SyntheticDatasetSpec& spec, const fs::path& out) {
  auto dataset = avd::generate_dataset(spec);
  avd::save_dataset(dataset, out);
  std::printf("wrote %s: %zu clips, %u classes, [3,%zu,%zu,%zu], variant %u, seed %llu\n", out.string().c_str(),
              dataset.videos.size(), dataset.num_classes, dataset.frames, dataset.height, dataset.width,
              dataset.variant_id, static_cast<unsigned long long>(dataset.seed));
}

void run_train(const fs::path& config_path) {
  require_file(config_path, "config");
  auto cfg = avd::load_run_config(config_path);
  if (cfg.train_data.empty()) throw avd::ConfigError("config has no train_data");
  auto dataset = load_dataset_checked(cfg.train_data);
  fs::create_directories(cfg.output_dir);

  auto on_epoch = [&](std::size_t epoch, const avd::TrainLog& log) {
    double recon = 0, teacher = 0, gen = 0, total = 0, real = 0, fake = 0;
    std::size_t n = 0;
    for (const auto& r : log.records) {
      if (r.epoch != epoch) continue;
      recon += r.recon_loss;
      teacher += r.teacher_loss;
      gen += r.gen_loss;
      total += r.avd_loss;
      real += r.real_score;
      fake += r.fake_score;
      ++n;
    }
    const double k = n ? 1.0 / static_cast<double>(n) : 0.0;
    std::printf("epoch %zu/%zu recon=%.5f teacher=%.4f gen=%.4f avd=%.5f real=%.3f fake=%.3f\n", epoch + 1,
                cfg.train.epochs, recon * k, teacher * k, gen * k, total * k, real * k, fake * k);
    std::fflush(stdout);
  };

  avd::TrainResult result;
  try {
    result = avd::train(dataset, cfg.train, on_epoch);
  } catch (const avd::TrainingAborted& e) {
    std::fprintf(stderr, "training aborted: %s (last good step: %lld)\n", e.what(), e.last_good_step());
    throw ExitStatus{kExitRuntime};
  }
  const auto model_path = cfg.output_dir / "model.avdc";
  const auto log_path = cfg.output_dir / "train_log.csv";
  avd::save_model(result.model, model_path);
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw avd::FormatError(avd::FormatErrorCode::io, "cannot write " + log_path.string());
  result.log.write_csv(log);
  std::printf("wrote %s and %s\n", model_path.string().c_str(), log_path.string().c_str());
}

void run_distill(const fs::path& checkpoint, const fs::path& data, const fs::path& out_dir) {
  require_file(checkpoint, "checkpoint");
  auto model = avd::load_model(checkpoint);
  auto dataset = load_dataset_checked(data);
  if (dataset.height != model.arch.height || dataset.width != model.arch.width) {
    throw avd::DimensionError("checkpoint expects " + std::to_string(model.arch.height) + "x" +
                              std::to_string(model.arch.width) + " frames but the dataset has " +
                              std::to_string(dataset.height) + "x" + std::to_string(dataset.width));
  }
  fs::create_directories(out_dir);
  auto clips = avd::sample_clips(dataset);
  auto images = avd::represent_all(avd::RepresentationKind::distilled, clips, &model.encoder);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto name = "clip_" + std::to_string(i) + "_class_" + std::to_string(images.labels[i]) + ".ppm";
    avd::write_ppm(avd::unstack(images.images, i), out_dir / name);
  }
  std::printf("wrote %zu images to %s\n", images.size(), out_dir.string().c_str());
}

struct EvalArgs {
  fs::path checkpoint, train, test, in_train, in_test, out = "eval_report.csv", confusion;
  bool cross = false;
  avd::ClassifierConfig classifier;
};

void run_eval(const EvalArgs& a) {
  require_file(a.checkpoint, "checkpoint");
  auto model = avd::load_model(a.checkpoint);
  auto train = load_dataset_checked(a.train);
  auto test = load_dataset_checked(a.test);
  if (train.num_classes != test.num_classes) throw avd::ConfigError("train and test datasets have different class counts");
  avd::EvalReport report;
  if (a.cross) {
    if (a.in_train.empty() || a.in_test.empty()) {
      throw avd::ConfigError("--cross needs --in-train and --in-test (the encoder's own domain)");
    }
    auto in_train = load_dataset_checked(a.in_train);
    auto in_test = load_dataset_checked(a.in_test);
    if (in_train.num_classes != train.num_classes || in_test.num_classes != train.num_classes) {
      throw avd::ConfigError("cross-dataset evaluation: label sets differ between domains");
    }
    report = avd::cross_dataset_eval(model.encoder, avd::sample_clips(in_train), avd::sample_clips(in_test),
                                     avd::sample_clips(train), avd::sample_clips(test), train.num_classes,
                                     a.classifier);
  } else {
    report = avd::compare_representations(avd::sample_clips(train), avd::sample_clips(test), model.encoder,
                                          train.num_classes, a.classifier);
  }
  std::ofstream csv(a.out, std::ios::trunc);
  if (!csv) throw avd::FormatError(avd::FormatErrorCode::io, "cannot write " + a.out.string());
  report.write_csv(csv);
  fs::path confusion = a.confusion;
  if (confusion.empty()) confusion = fs::path(a.out).replace_extension(".confusion.txt");
  std::ofstream conf(confusion, std::ios::trunc);
  if (!conf) throw avd::FormatError(avd::FormatErrorCode::io, "cannot write " + confusion.string());
  report.write_confusion(conf);
  report.write_csv(std::cout);
}

int run_gradcheck(const avd::GradCheckSuiteOptions& options) {
  bool ok = true;
  for (const auto& r : avd::run_gradcheck_suite(options)) {
    std::printf("%-26s instances=%-3zu elements=%-6zu max_rel_err=%.3e %s\n", r.op.c_str(), r.instances, r.elements,
                r.max_error, r.passed ? "PASS" : "FAIL");
    ok = ok && r.passed;
  }
  std::printf("%s\n", ok ? "all ops passed" : "gradient check FAILED");
  return ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial video distillation toolkit"};
  app.require_subcommand(1);

  avd::SyntheticDatasetSpec spec;
  fs::path gen_out;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic moving-shape dataset");
  gen->add_option("--classes", spec.num_classes, "Number of motion classes (2-4)")->capture_default_str();
  gen->add_option("--per-class", spec.clips_per_class, "Clips per class")->capture_default_str();
  gen->add_option("--frames", spec.frames_per_source, "Frames per source video")->capture_default_str();
  gen->add_option("--height", spec.height)->capture_default_str();
  gen->add_option("--width", spec.width)->capture_default_str();
  gen->add_option("--size-min", spec.shape_size_min)->capture_default_str();
  gen->add_option("--size-max", spec.shape_size_max)->capture_default_str();
  gen->add_option("--speed-min", spec.speed_min, "Pixels per frame")->capture_default_str();
  gen->add_option("--speed-max", spec.speed_max)->capture_default_str();
  gen->add_option("--noise", spec.noise_sigma)->capture_default_str();
  gen->add_option("--seed", spec.seed)->capture_default_str();
  gen->add_option("--variant", spec.variant_id, "Background family: 0 gradient, 1 checkerboard, 2 stripes")
      ->capture_default_str();
  gen->add_option("--out", gen_out)->required();

  fs::path train_config;
  auto* train = app.add_subcommand("train", "Train encoder, decoder and teacher from a run config");
  train->add_option("config", train_config, "Run config file")->required();

  fs::path distill_ckpt, distill_data, distill_out;
  auto* distill = app.add_subcommand("distill", "Export one distilled PPM image per clip");
  distill->add_option("--checkpoint", distill_ckpt)->required();
  distill->add_option("--data", distill_data)->required();
  distill->add_option("--out-dir", distill_out)->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Compare representations with a downstream classifier");
  eval->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval->add_option("--train", eval_args.train, "Classifier training dataset")->required();
  eval->add_option("--test", eval_args.test, "Classifier test dataset")->required();
  eval->add_flag("--cross", eval_args.cross, "Report in-domain vs cross-domain distilled accuracy");
  eval->add_option("--in-train", eval_args.in_train, "With --cross: training split of the encoder's own domain");
  eval->add_option("--in-test", eval_args.in_test, "With --cross: test split of the encoder's own domain");
  eval->add_option("--out", eval_args.out, "CSV report path")->capture_default_str();
  eval->add_option("--confusion", eval_args.confusion, "Confusion matrix path (default: <out>.confusion.txt)");
  eval->add_option("--epochs", eval_args.classifier.epochs)->capture_default_str();
  eval->add_option("--batch-size", eval_args.classifier.batch_size)->capture_default_str();
  eval->add_option("--lr", eval_args.classifier.lr)->capture_default_str();
  eval->add_option("--seed", eval_args.classifier.seed)->capture_default_str();

  avd::GradCheckSuiteOptions gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  gradcheck->add_option("--instances", gc.instances, "Random instances per op")->capture_default_str();
  gradcheck->add_option("--tol", gc.tolerance, "Maximum relative error")->capture_default_str();
  gradcheck->add_option("--seed", gc.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      if (gen_out.empty()) throw avd::ConfigError("--out must not be empty");
      run_gen_data(spec, gen_out);
    } else if (*train) {
      run_train(train_config);
    } else if (*distill) {
      run_distill(distill_ckpt, distill_data, distill_out);
    } else if (*eval) {
      run_eval(eval_args);
    } else if (*gradcheck) {
      return run_gradcheck(gc);
    }
  } catch (const ExitStatus& s) {
    return s.code;
  } catch (const std::invalid_argument& e) {  // ConfigError, DimensionError, SplitLeakageError
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
