// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 5-8 train real models and take tens of minutes
// on one core; --only restricts the run to a subset.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <string>

#include "avd/checkpoint.hpp"
#include "avd/classifier.hpp"
#include "avd/data.hpp"
#include "avd/errors.hpp"
#include "avd/gradcheck_suite.hpp"
#include "avd/image_io.hpp"
#include "avd/losses.hpp"
#include "avd/trainer.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace avd;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Motion-only benchmark at 16x16: smaller shapes and slower motion keep the
// geometry of the 32x32 defaults.
SyntheticDatasetSpec motion_spec_16(std::size_t per_class, std::uint64_t seed, std::uint32_t variant) {
  SyntheticDatasetSpec s;
  s.height = s.width = 16;
  s.shape_size_min = 3.0f;
  s.shape_size_max = 5.0f;
  s.speed_min = 0.15f;
  s.speed_max = 0.25f;
  s.clips_per_class = per_class;
  s.seed = seed;
  s.variant_id = variant;
  return s;
}

// Criterion 7 training run; criterion 8 reuses its encoder.
TrainConfig distillation_config() {
  TrainConfig c;
  c.lambda = 1.0f;
  c.lr = 0.5f;
  c.lr_decay = 1.0f;
  c.momentum = 0.9f;
  c.epochs = 40;
  c.batch_size = 4;
  c.seed = 3;
  return c;
}

// Clips per class. The encoder and the downstream classifier train on
// separate splits; the classifier split is larger because 256 images leave
// the classifier, not the representation, as the bottleneck.
constexpr std::size_t kEncoderTrainPerClass = 64;
constexpr std::size_t kClassifierTrainPerClass = 256;
constexpr std::size_t kTestPerClass = 64;

Outcome criterion_1(const fs::path& avd_exe) {
  Outcome o;
  const auto t0 = Clock::now();
  GradCheckSuiteOptions opt;
  opt.instances = 20;
  opt.tolerance = 1e-3;
  opt.seed = 2024;
  const auto results = run_gradcheck_suite(opt);
  double worst = 0.0;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_error);
    o.require(r.passed && r.instances >= 20, r.op + " max_rel_err " + fmt("%.3e", r.max_error));
  }
  const auto ops = gradcheck_ops();
  for (const char* needed : {"add", "mul", "sum", "mean", "relu", "leaky_relu", "sigmoid", "tanh", "matmul", "conv3d",
                             "conv3d_transpose", "batchnorm", "reconstruction_loss", "teacher_loss",
                             "generator_loss"}) {
    bool found = false;
    for (const auto& op : ops) found = found || op.starts_with(needed);
    o.require(found, std::string("suite covers ") + needed);
  }
  if (!avd_exe.empty()) {
    const std::string cmd = "\"" + avd_exe.string() + "\" gradcheck > \"" +
                            (fs::temp_directory_path() / "avd_acceptance_gradcheck.txt").string() + "\"";
    const int rc = std::system(cmd.c_str());
    o.require(rc == 0, "avd gradcheck exit status");
    o.note("avd gradcheck exit " + std::to_string(rc));
  }
  const double dt = seconds_since(t0);
  o.require(dt < 120.0, "runtime under 2 min");
  o.note(std::to_string(results.size()) + " ops x 20 instances, worst rel err " + fmt("%.2e", worst) + ", " +
         fmt("%.1f s", dt));
  return o;
}

Outcome criterion_2() {
  Outcome o;
  const auto r = testkit::conv_oracle_sweep(64, 99);
  o.require(r.shapes >= 50, "at least 50 shapes");
  o.require(r.max_forward_rel < 1e-6, "forward rel err < 1e-6");
  o.require(r.max_adjoint_rel < 1e-4, "adjoint rel err < 1e-4");
  o.note(std::to_string(r.shapes) + " shapes, forward rel err " + fmt("%.2e", r.max_forward_rel) +
         ", adjoint rel err " + fmt("%.2e", r.max_adjoint_rel));
  return o;
}

Outcome criterion_3() {
  Outcome o;
  ArchConfig arch;
  arch.height = arch.width = 16;
  auto model = init_params(5, arch);
  auto ds = generate_dataset(motion_spec_16(1, 5, 0));
  auto clips = sample_clips(ds);
  std::vector<Tensor> volumes;
  for (const auto& c : clips) volumes.push_back(c.frames);
  Tensor batch = stack(volumes);
  Tensor images = encode(model.encoder, batch, Mode::train);
  Tensor recon = reconstruction_loss(batch, decode(model.decoder, images, Mode::train));
  Tensor gen = generator_loss(discriminate(model.teacher, images));
  const float l1 = avd_loss(recon, gen, 1.0f).item();
  const float l0 = avd_loss(recon, gen, 0.0f).item();
  o.require(std::memcmp(&l1, &recon.data()[0], sizeof(float)) == 0, "lambda=1 equals reconstruction loss bitwise");
  o.require(std::memcmp(&l0, &gen.data()[0], sizeof(float)) == 0, "lambda=0 equals generator loss bitwise");
  const double t = teacher_loss(Tensor({8}, 0.5f), Tensor({8}, 0.5f)).item();
  const double err = std::abs(t - 2.0 * std::numbers::ln2);
  o.require(err < 1e-6, "teacher_loss(0.5,0.5) = 2 ln 2");
  o.note("recon " + fmt("%.6g", recon.item()) + ", gen " + fmt("%.6g", gen.item()) + ", |teacher - 2ln2| " +
         fmt("%.1e", err));
  return o;
}

Outcome criterion_4() {
  Outcome o;
  for (std::size_t side : {16u, 32u}) {
    ArchConfig arch;
    arch.height = arch.width = side;
    auto model = init_params(side, arch);
    std::mt19937_64 rng(side);
    Tensor v = testkit::random_tensor({2, 3, 32, side, side}, rng, 0.0f, 1.0f);
    for (Mode mode : {Mode::train, Mode::eval}) {
      Tensor image = encode(model.encoder, v, mode);
      Tensor r = decode(model.decoder, image, mode);
      o.require(image.shape() == Shape({2, 3, side, side}), "encode shape at " + std::to_string(side));
      o.require(r.shape() == v.shape(), "decode(encode(V)) shape at " + std::to_string(side));
    }
    o.note(std::to_string(side) + "x" + std::to_string(side) + " " + shape_to_string(v.shape()) + " round trip");
  }
  return o;
}

struct EpochMeans {
  double recon = 0, real = 0, fake = 0;
  double min_score = 1.0, max_score = 0.0;
};

EpochMeans epoch_means(const TrainLog& log, std::size_t epoch) {
  EpochMeans m;
  std::size_t n = 0;
  for (const auto& r : log.records) {
    if (r.epoch != epoch) continue;
    m.recon += r.recon_loss;
    m.real += r.real_score;
    m.fake += r.fake_score;
    m.min_score = std::min({m.min_score, r.real_score, r.fake_score});
    m.max_score = std::max({m.max_score, r.real_score, r.fake_score});
    ++n;
  }
  if (n) {
    m.recon /= static_cast<double>(n);
    m.real /= static_cast<double>(n);
    m.fake /= static_cast<double>(n);
  }
  return m;
}

Outcome criterion_5(const fs::path& work) {
  Outcome o;
  SyntheticDatasetSpec spec;  // 32x32, 16 clips per class x 4 classes
  spec.seed = 1;
  auto ds = generate_dataset(spec);
  TrainConfig c;
  c.lambda = 1.0f;
  c.lr = 0.05f;
  c.lr_decay = 1.0f;
  c.epochs = 30;
  c.batch_size = 8;
  c.seed = 5;
  const auto t0 = Clock::now();
  auto result = train(ds, c);
  const double dt = seconds_since(t0);
  const auto log_path = work / "c5" / "train_log.csv";
  fs::create_directories(log_path.parent_path());
  {
    std::ofstream f(log_path);
    result.log.write_csv(f);
  }
  const auto& recs = result.log.records;
  const double first = recs.front().recon_loss;
  const double last = epoch_means(result.log, c.epochs - 1).recon;
  o.require(ds.videos.size() == 64, "64 clips");
  o.require(recs.size() >= 200, "at least 200 steps");
  o.require(last < 0.5 * first, "last-epoch recon < 50% of step 1");
  o.require(fs::file_size(log_path) > 0 && recs.size() + 1 == [&] {
    std::ifstream f(log_path);
    std::size_t lines = 0;
    for (std::string s; std::getline(f, s);) ++lines;
    return lines;
  }(), "train_log.csv has one row per step");
  o.require(dt < 1800.0, "runtime under 30 min");
  o.note(std::to_string(recs.size()) + " steps, recon " + fmt("%.5f", first) + " -> " + fmt("%.5f", last) + " (" +
         fmt("%.1f%%", 100.0 * last / first) + "), " + fmt("%.0f s", dt) + ", log " + log_path.string());
  return o;
}

Outcome criterion_6() {
  Outcome o;
  auto ds = generate_dataset(motion_spec_16(16, 6, 0));
  TrainConfig c;
  c.lambda = 0.5f;
  c.lr = 3e-3f;
  c.lr_decay = 1.0f;
  c.epochs = 30;
  c.batch_size = 8;
  c.seed = 6;
  const auto t0 = Clock::now();
  TrainResult result;
  try {
    result = train(ds, c);
  } catch (const TrainingAborted& e) {
    o.require(false, std::string("no NaN abort (") + e.what() + ")");
    return o;
  }
  bool inside = true;
  for (const auto& r : result.log.records) {
    inside = inside && r.real_score > 0.0 && r.real_score < 1.0 && r.fake_score > 0.0 && r.fake_score < 1.0;
  }
  const auto last = epoch_means(result.log, c.epochs - 1);
  o.require(result.log.records.size() == c.epochs * 8, "30 complete epochs");
  o.require(inside, "scores in (0,1) at every step");
  o.require(last.real > last.fake, "last-epoch mean real score > mean fake score");
  o.note("last epoch real " + fmt("%.4f", last.real) + " fake " + fmt("%.4f", last.fake) + ", score range [" +
         fmt("%.2e", last.min_score) + ", " + fmt("%.6f", last.max_score) + "], " +
         fmt("%.0f s", seconds_since(t0)));
  return o;
}

struct DistillRun {
  TrainResult result;
  std::vector<VideoClip> train_clips, test_clips;
  double train_seconds = 0;
};

DistillRun distill_run(const TrainConfig& config, const fs::path& work) {
  DistillRun d;
  auto train_ds = generate_dataset(motion_spec_16(kEncoderTrainPerClass, 11, 0));
  auto test_ds = generate_dataset(motion_spec_16(kTestPerClass, 12, 0));
  d.train_clips = sample_clips(generate_dataset(motion_spec_16(kClassifierTrainPerClass, 13, 0)));
  d.test_clips = sample_clips(test_ds);
  const auto t0 = Clock::now();
  d.result = train(train_ds, config);
  d.train_seconds = seconds_since(t0);
  const auto dir = work / "c7";
  fs::create_directories(dir);
  save_model(d.result.model, dir / "model.avdc");
  std::ofstream log(dir / "train_log.csv");
  d.result.log.write_csv(log);
  save_dataset(test_ds, dir / "test.avdd");
  save_dataset(train_ds, dir / "train.avdd");
  return d;
}

Outcome criterion_7(const DistillRun& d) {
  Outcome o;
  const auto t0 = Clock::now();
  ClassifierConfig cc;
  const auto report = compare_representations(d.train_clips, d.test_clips, d.result.model.encoder, 4, cc);
  const double single = report.at("SingleRandomFrame").accuracy;
  const double mean = report.at("MeanFrame").accuracy;
  const double distilled = report.at("Distilled").accuracy;
  const double total = d.train_seconds + seconds_since(t0);
  o.require(single <= 0.35, "SingleRandomFrame <= 35%");
  o.require(distilled >= 0.80, "Distilled >= 80%");
  o.require(distilled - single >= 0.40, "gap >= 40 points");
  o.require(total < 2700.0, "runtime under 45 min");
  o.note("single " + fmt("%.1f%%", 100 * single) + ", mean " + fmt("%.1f%%", 100 * mean) + ", distilled " +
         fmt("%.1f%%", 100 * distilled) + ", gap " + fmt("%.1f pts", 100 * (distilled - single)) + ", " +
         std::to_string(d.train_clips.size()) + "/" + std::to_string(d.test_clips.size()) +
         " classifier train/test clips, " + fmt("%.0f s", total));
  return o;
}

Outcome criterion_8(const DistillRun& d) {
  Outcome o;
  const auto t0 = Clock::now();
  auto b_train = sample_clips(generate_dataset(motion_spec_16(kClassifierTrainPerClass, 23, 1)));
  auto b_test = sample_clips(generate_dataset(motion_spec_16(kTestPerClass, 22, 1)));
  ClassifierConfig cc;
  const auto report =
      cross_dataset_eval(d.result.model.encoder, d.train_clips, d.test_clips, b_train, b_test, 4, cc);
  const double in = report.at("Distilled/in-domain").accuracy;
  const double cross = report.at("Distilled/cross-domain").accuracy;
  o.require(in >= cross, "in-domain >= cross-domain");
  o.require(cross >= 0.40, "cross-domain >= chance + 15 points");
  o.note("A->A " + fmt("%.1f%%", 100 * in) + ", A->B " + fmt("%.1f%%", 100 * cross) + ", " +
         fmt("%.0f s", seconds_since(t0)));
  return o;
}

// Train, checkpoint, log, distill and evaluate into `dir`.
void pipeline(const fs::path& dir) {
  fs::create_directories(dir / "ppm");
  SyntheticDatasetSpec spec = motion_spec_16(4, 31, 0);
  auto train_ds = generate_dataset(spec);
  save_dataset(train_ds, dir / "train.avdd");
  spec.seed = 32;
  spec.clips_per_class = 2;
  auto test_ds = generate_dataset(spec);
  TrainConfig c;
  c.lambda = 0.5f;
  c.epochs = 2;
  c.batch_size = 4;
  c.seed = 9;
  c.frame_pool_size = 64;
  auto result = train(train_ds, c);
  save_model(result.model, dir / "model.avdc");
  {
    std::ofstream f(dir / "train_log.csv");
    result.log.write_csv(f);
  }
  auto test_clips = sample_clips(test_ds);
  auto images = represent_all(RepresentationKind::distilled, test_clips, &result.model.encoder);
  for (std::size_t i = 0; i < images.size(); ++i) {
    write_ppm(unstack(images.images, i), dir / "ppm" / ("clip_" + std::to_string(i) + ".ppm"));
  }
  ClassifierConfig cc;
  cc.epochs = 2;
  cc.batch_size = 8;
  auto report = compare_representations(sample_clips(train_ds), test_clips, result.model.encoder, 4, cc);
  std::ofstream f(dir / "eval_report.csv");
  report.write_csv(f);
}

// Every tensor of `model` appears in `entries` under the same name with identical bits.
bool same_bits(const std::vector<NamedTensor>& model, const std::vector<NamedTensor>& entries) {
  for (const auto& m : model) {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const NamedTensor& e) { return e.name == m.name; });
    if (it == entries.end() || it->tensor.shape() != m.tensor.shape()) return false;
    auto x = m.tensor.data();
    auto y = it->tensor.data();
    if (std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) != 0) return false;
  }
  return !model.empty();
}

Outcome criterion_9(const fs::path& work) {
  Outcome o;
  const auto a = work / "c9" / "run_a";
  const auto b = work / "c9" / "run_b";
  fs::remove_all(work / "c9");
  pipeline(a);
  pipeline(b);
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    o.require(fs::exists(b / rel) && testkit::read_bytes(entry.path()) == testkit::read_bytes(b / rel),
              "byte-identical " + rel.string());
    ++compared;
  }
  o.require(compared >= 5, "artifacts produced");

  // Checkpoint round trip: load, compare tensors bitwise, re-save byte-identical.
  auto model = load_model(a / "model.avdc");
  save_model(model, work / "c9" / "resaved.avdc");
  o.require(testkit::read_bytes(a / "model.avdc") == testkit::read_bytes(work / "c9" / "resaved.avdc"),
            "checkpoint re-save byte-identical");
  o.require(same_bits(named_tensors(model), load_checkpoint(a / "model.avdc")) &&
                same_bits(named_tensors(model), named_tensors(load_model(work / "c9" / "resaved.avdc"))),
            "checkpoint tensors bit-exact");

  // Dataset round trip.
  auto original = generate_dataset(motion_spec_16(4, 31, 0));
  auto loaded = load_dataset(a / "train.avdd");
  bool equal = loaded.videos.size() == original.videos.size() && loaded.num_classes == original.num_classes &&
               loaded.seed == original.seed && loaded.variant_id == original.variant_id;
  for (std::size_t i = 0; equal && i < loaded.videos.size(); ++i) {
    const auto& x = loaded.videos[i];
    const auto& y = original.videos[i];
    equal = x.label == y.label && x.source_id == y.source_id && x.frames.shape() == y.frames.shape() &&
            std::memcmp(x.frames.data().data(), y.frames.data().data(), x.frames.numel() * sizeof(float)) == 0;
  }
  o.require(equal, "dataset round trip bit-exact");
  save_dataset(loaded, work / "c9" / "resaved.avdd");
  o.require(testkit::read_bytes(a / "train.avdd") == testkit::read_bytes(work / "c9" / "resaved.avdd"),
            "dataset re-save byte-identical");
  o.note(std::to_string(compared) + " artifacts compared across two runs");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance run"};
  fs::path work = fs::temp_directory_path() / "avd_acceptance";
  fs::path avd_exe;
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory")->capture_default_str();
  app.add_option("--avd", avd_exe, "avd executable, exercised by criterion 1");
  app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 9));
  // Overrides for exploring the distillation run; the defaults are the pinned configuration.
  TrainConfig distill = distillation_config();
  app.add_option("--distill-lambda", distill.lambda)->capture_default_str();
  app.add_option("--distill-lr", distill.lr)->capture_default_str();
  app.add_option("--distill-epochs", distill.epochs)->capture_default_str();
  app.add_option("--distill-batch", distill.batch_size)->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected(only.begin(), only.end());
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int n, const Outcome& o) {
    std::printf("criterion %d: %s  %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };
  auto guarded = [&](int n, auto&& fn) {
    if (!selected.contains(n)) return;
    try {
      report(n, fn());
    } catch (const std::exception& e) {
      report(n, Outcome{false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, [&] { return criterion_1(avd_exe); });
  guarded(2, [] { return criterion_2(); });
  guarded(3, [] { return criterion_3(); });
  guarded(4, [] { return criterion_4(); });
  guarded(5, [&] { return criterion_5(work); });
  guarded(6, [] { return criterion_6(); });
  if (selected.contains(7) || selected.contains(8)) {
    std::optional<DistillRun> run;
    try {
      run = distill_run(distill, work);
    } catch (const std::exception& e) {
      for (int n : {7, 8}) {
        if (selected.contains(n)) report(n, Outcome{false, std::string("training exception: ") + e.what()});
      }
    }
    if (run) {
      guarded(7, [&] { return criterion_7(*run); });
      guarded(8, [&] { return criterion_8(*run); });
    }
  }
  guarded(9, [&] { return criterion_9(work); });

  std::printf("%d of %zu criteria failed\n", failures, selected.size());
  return failures == 0 ? 0 : 1;
}
