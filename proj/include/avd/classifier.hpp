#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "avd/model.hpp"
#include "avd/video.hpp"

namespace avd {

enum class RepresentationKind { single_random_frame, mean_frame, distilled };

inline constexpr RepresentationKind kAllRepresentations[] = {
    RepresentationKind::single_random_frame, RepresentationKind::mean_frame, RepresentationKind::distilled};

/// "SingleRandomFrame", "MeanFrame" or "Distilled".
std::string_view to_string(RepresentationKind kind);

/// Maps a clip [3,T,H,W] to one image [3,H,W]. SingleRandomFrame picks a
/// frame uniformly using `seed`; Distilled runs the encoder in eval mode and
/// requires `encoder`.
Tensor represent(RepresentationKind kind, const VideoClip& clip, const EncoderParams* encoder,
                 std::uint64_t seed = 0);

/// Images plus labels and the source each image came from.
struct LabeledImages {
  Tensor images;  // [N,3,H,W]
  std::vector<std::uint32_t> labels;
  std::vector<std::string> source_ids;

  std::size_t size() const { return labels.size(); }
};

/// Batched represent(); clip i uses seed + i. Every clip must carry a label.
LabeledImages represent_all(RepresentationKind kind, const std::vector<VideoClip>& clips,
                            const EncoderParams* encoder, std::uint64_t seed = 0);

struct ClassifierConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  float lr = 0.1f;
  float momentum = 0.9f;
  float lr_decay = 0.95f;  // per epoch
  std::uint64_t seed = 0;

  void validate() const;
};

/// Three 3x3 stride-2 conv blocks (batch-norm, ReLU; widths 3-16-32-64),
/// global average pooling and a linear head.
struct ClassifierParams {
  std::vector<ConvLayer> blocks;
  DenseLayer head;  // [64, num_classes]

  std::size_t num_classes() const { return head.bias.numel(); }
};

ClassifierParams init_classifier(std::uint32_t num_classes, std::uint64_t seed);
std::vector<NamedTensor> named_tensors(const ClassifierParams& params, const std::string& prefix = "classifier");

/// [N,3,H,W] -> logits [N,num_classes].
Tensor classifier_logits(ClassifierParams& params, const Tensor& images, Mode mode);

/// Cross-entropy training with momentum SGD. Needs at least two classes.
ClassifierParams train_classifier(const LabeledImages& data, std::uint32_t num_classes,
                                  const ClassifierConfig& config);

std::vector<std::uint32_t> predict(const ClassifierParams& params, const Tensor& images);

struct EvalEntry {
  std::string kind;
  double accuracy = 0.0;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

/// Top-1 accuracy and confusion matrix; parameters are not modified.
EvalEntry evaluate(const ClassifierParams& params, const LabeledImages& test, std::string kind = "");

struct EvalReport {
  std::vector<EvalEntry> entries;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  ClassifierConfig config;

  const EvalEntry& at(std::string_view kind) const;
  /// `kind,accuracy` header, one row per entry.
  void write_csv(std::ostream& os) const;
  /// One confusion-matrix block per entry.
  void write_confusion(std::ostream& os) const;
};

/// Throws SplitLeakageError when a source video appears in both splits.
void check_disjoint(const std::vector<VideoClip>& train, const std::vector<VideoClip>& test);

/// One classifier per representation kind, identical architecture, config
/// and seed, all scored on the same test split.
EvalReport compare_representations(const std::vector<VideoClip>& train, const std::vector<VideoClip>& test,
                                   const EncoderParams& encoder, std::uint32_t num_classes,
                                   const ClassifierConfig& config);

/// Distilled accuracy of `encoder` on its own domain and on another one.
/// Entries: "Distilled/in-domain" (classifier trained and tested on the
/// in-domain split) and "Distilled/cross-domain" (the same encoder applied
/// to the other variant). Both domains must use the same label set.
EvalReport cross_dataset_eval(const EncoderParams& encoder, const std::vector<VideoClip>& in_train,
                              const std::vector<VideoClip>& in_test, const std::vector<VideoClip>& cross_train,
                              const std::vector<VideoClip>& cross_test, std::uint32_t num_classes,
                              const ClassifierConfig& config);

}  // namespace avd
