#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "csteer/model.hpp"
#include "csteer/task.hpp"

namespace csteer {

struct TrainParams {
  int epochs = 14;
  int batch_size = 32;
  float learning_rate = 1e-3f;
  float min_lr_ratio = 0.1f;  // cosine decay floor
  int warmup_steps = 50;
  float weight_decay = 0.01f;
  float grad_clip = 1.0f;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
  // Called after every optimizer step with (step, total_steps, batch loss).
  std::function<void(int, int, double)> on_step;
};

struct TrainReport {
  double initial_heldout_loss = 0.0;
  double final_heldout_loss = 0.0;
  double final_train_loss = 0.0;  // mean over the last epoch's batches
  int steps = 0;
  std::size_t train_size = 0;
  std::size_t heldout_size = 0;
};

// Mean cross-entropy over the supervised (answer) tokens of the batch and its
// gradient with respect to every parameter, in layout order.
struct LossGrad {
  double loss = 0.0;
  std::size_t tokens = 0;
  FloatBuffer grad;
};
LossGrad loss_and_gradient(const Model& model, std::span<const Sequence> batch);

// Mean next-token loss over the answer tokens of every sequence.
double mean_loss(const Model& model, std::span<const Sequence> data);

// Fits the model on the sequences, holding out a seeded fraction for
// evaluation. Throws NumericError on a non-finite loss.
TrainReport train_substrate(Model& model, std::span<const Sequence> data, const TrainParams& params);

// Teacher-forcing sequences (context + ground truth) for a set of examples.
// With mc_cues, every MC example is followed by its cue question.
std::vector<Sequence> training_sequences(std::span<const ReferringExample> examples, bool mc_cues = true);

}  // namespace csteer
