#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "scatterbench/dataset.hpp"
#include "scatterbench/geometry.hpp"
#include "scatterbench/image.hpp"
#include "scatterbench/metrics.hpp"
#include "scatterbench/nn/net.hpp"

namespace scatterbench::auxnet {

/// U-Net with two constant auxiliary input planes. Pooling floors odd sizes and each
/// decoder level upsamples to its skip connection's size, so any input whose
/// dimensions survive n_down_blocks halvings is accepted.
struct NetSpec {
  std::size_t input_h = 40;
  std::size_t input_w = 32;
  int n_down_blocks = 4;
  int base_channels = 16;
  float leaky_slope = 0.01f;

  void validate() const;
};

/// Block count used for each input resolution: 5 down to 80x64, then 4 and 3.
int default_blocks(std::size_t input_h, std::size_t input_w);

nn::Net build(const NetSpec& spec, std::uint64_t seed = 1);

struct AuxInput {
  FomSize fom;
  double w_max_mm = 180.0;
  double h_max_mm = 180.0;

  void validate() const;
};

/// Planes filled with diameter / w_max and height / h_max.
std::array<Image2D, 2> make_aux_channels(const AuxInput& aux, std::size_t h, std::size_t w);

/// Stacks (image, aux planes) into channels of one batch slot.
void write_input(nn::Tensor4& batch, std::size_t slot, const Image2D& image, const AuxInput& aux);

/// Bicubic downsample to the net's native size, the net, bicubic upsample back to
/// each input's own size. Aux planes are regenerated at native size.
class InferenceWrapper {
 public:
  InferenceWrapper(nn::Net& net, std::size_t native_h, std::size_t native_w, double w_max_mm = 180.0,
                   double h_max_mm = 180.0);

  std::size_t native_h() const noexcept { return native_h_; }
  std::size_t native_w() const noexcept { return native_w_; }

  std::vector<Image2D> predict(std::span<const Image2D> images, std::span<const FomSize> foms);
  Image2D predict(const Image2D& image, const FomSize& fom);

 private:
  nn::Net* net_;
  std::size_t native_h_;
  std::size_t native_w_;
  double w_max_mm_;
  double h_max_mm_;
};

struct TrainConfig {
  int batch_size = 64;
  double lr_start = 1e-4;
  double lr_end = 1e-5;
  int lr_decay_epochs = 30;
  int early_stop_patience = 5;
  int max_epochs = 200;
  double val_fraction = 0.2;
  // With folds > 1 the validation set is partition fold_index of `folds`.
  int folds = 1;
  int fold_index = 0;
  std::uint64_t seed = 1;
  // Start the output bias at the mean training target.
  bool init_head_bias = true;
  double w_max_mm = 180.0;
  double h_max_mm = 180.0;

  void validate() const;
};

/// lr_start * (lr_end / lr_start)^(min(epoch, decay_epochs) / decay_epochs)
double learning_rate(const TrainConfig& cfg, int epoch);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_val_mse = 0.0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// Sample indices of the training and validation partitions.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, const TrainConfig& cfg);

/// Trains on samples resized (bicubic) to the spec resolution. The net is left holding
/// the weights of the best validation epoch. Throws NumericError on a non-finite loss.
TrainResult train(nn::Net& net, const NetSpec& spec, std::span<const sim::ScatterSample> samples,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {});

void write_training_log(std::ostream& os, std::span<const EpochLog> epochs);

struct Evaluation {
  double mape = 0.0;
  double mse = 0.0;
};

/// MAPE and MSE of wrapped predictions against targets at each sample's own size,
/// pooled over the selected samples.
Evaluation evaluate(InferenceWrapper& wrapper, std::span<const sim::ScatterSample> samples,
                    std::span<const std::size_t> indices = {},
                    metrics::MapeMode mode = metrics::MapeMode::SumNormalized);

}  // namespace scatterbench::auxnet
