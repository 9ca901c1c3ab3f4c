#include "scatterbench/auxnet.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "scatterbench/errors.hpp"
#include "scatterbench/nn/adam.hpp"
#include "scatterbench/resample.hpp"

namespace scatterbench::auxnet {

namespace {

constexpr resample::Method kBicubic{resample::Kind::Bicubic, false};

void conv_bn_act(nn::Net& net, int c_in, int c_out, float slope) {
  net.add(nn::Conv2d{3, 3, c_in, c_out, 1, 1, false});
  net.add(nn::BatchNorm{c_out});
  net.add(nn::LeakyReLU{slope});
}

Image2D fit(const Image2D& img, std::size_t h, std::size_t w) {
  if (img.height() == h && img.width() == w) return img;
  return resample::resize(img, h, w, kBicubic);
}

// Training tensors prepared once: resized image and target, plus the aux input.
struct Prepared {
  std::vector<Image2D> images;
  std::vector<Image2D> targets;
  std::vector<AuxInput> aux;
};

Prepared prepare(std::span<const sim::ScatterSample> samples, const NetSpec& spec, const TrainConfig& cfg) {
  Prepared p;
  for (const sim::ScatterSample& s : samples) {
    p.images.push_back(fit(s.input, spec.input_h, spec.input_w));
    p.targets.push_back(fit(s.target, spec.input_h, spec.input_w));
    p.aux.push_back({s.fom, cfg.w_max_mm, cfg.h_max_mm});
  }
  return p;
}

void fill_batch(const Prepared& data, std::span<const std::size_t> idx, nn::Tensor4& x, nn::Tensor4& y) {
  const std::size_t h = data.images[idx[0]].height();
  const std::size_t w = data.images[idx[0]].width();
  x = nn::Tensor4({idx.size(), 3, h, w});
  y = nn::Tensor4({idx.size(), 1, h, w});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    write_input(x, b, data.images[idx[b]], data.aux[idx[b]]);
    std::copy(data.targets[idx[b]].pixels().begin(), data.targets[idx[b]].pixels().end(), y.plane(b, 0));
  }
}

double validation_mse(nn::Net& net, const Prepared& data, std::span<const std::size_t> val, int batch_size) {
  double sum = 0.0;
  std::size_t count = 0;
  nn::Tensor4 x;
  nn::Tensor4 y;
  for (std::size_t start = 0; start < val.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto chunk = val.subspan(start, std::min<std::size_t>(batch_size, val.size() - start));
    fill_batch(data, chunk, x, y);
    const nn::Tensor4 pred = net.forward(x, nn::Mode::Eval);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = static_cast<double>(pred.data()[i]) - y.data()[i];
      sum += d * d;
    }
    count += pred.size();
  }
  return sum / static_cast<double>(count);
}

}  // namespace

void NetSpec::validate() const {
  if (n_down_blocks < 3 || n_down_blocks > 5) throw InvalidArgument("NetSpec: n_down_blocks must be 3, 4 or 5");
  if (base_channels < 1) throw InvalidArgument("NetSpec: base_channels must be >= 1");
  if (input_h == 0 || input_w == 0) throw InvalidArgument("NetSpec: input size must be positive");
  const std::size_t div = std::size_t{1} << n_down_blocks;
  if (input_h / div == 0 || input_w / div == 0) {
    throw InvalidArgument("NetSpec: " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                          " is too small for " + std::to_string(n_down_blocks) + " downsampling blocks");
  }
  if (!(leaky_slope >= 0.0f && leaky_slope < 1.0f)) throw InvalidArgument("NetSpec: leaky_slope must lie in [0, 1)");
}

int default_blocks(std::size_t input_h, std::size_t input_w) {
  const std::size_t m = std::min(input_h, input_w);
  if (m >= 64) return 5;
  if (m >= 32) return 4;
  return 3;
}

nn::Net build(const NetSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int n = spec.n_down_blocks;
  const float slope = spec.leaky_slope;
  nn::Net net(3);
  std::vector<int> skips;
  std::vector<int> channels;
  int c_prev = 3;
  for (int i = 0; i < n; ++i) {
    const int c = spec.base_channels << i;
    conv_bn_act(net, c_prev, c, slope);
    conv_bn_act(net, c, c, slope);
    skips.push_back(static_cast<int>(net.size()) - 1);
    channels.push_back(c);
    net.add(nn::MaxPool2{});
    c_prev = c;
  }
  const int c_bottom = spec.base_channels << n;
  conv_bn_act(net, c_prev, c_bottom, slope);
  conv_bn_act(net, c_bottom, c_bottom, slope);
  c_prev = c_bottom;
  for (int i = n - 1; i >= 0; --i) {
    const int c = channels[i];
    conv_bn_act(net, c_prev, c, slope);
    const int up = net.add(nn::BilinearUp2{}, {static_cast<int>(net.size()) - 1, skips[i]});
    net.add(nn::Concat{}, {up, skips[i]});
    conv_bn_act(net, 2 * c, c, slope);
    c_prev = c;
  }
  net.add(nn::Conv2d{1, 1, c_prev, 1, 1, 0, true});
  net.init_weights(seed, slope);
  return net;
}

void AuxInput::validate() const {
  if (!(w_max_mm > 0.0) || !(h_max_mm > 0.0)) throw InvalidArgument("AuxInput: maxima must be > 0");
  if (!(fom.diameter_mm > 0.0 && fom.diameter_mm <= w_max_mm)) {
    throw InvalidArgument("AuxInput: FOM diameter " + std::to_string(fom.diameter_mm) + " outside (0, " +
                          std::to_string(w_max_mm) + "]");
  }
  if (!(fom.height_mm > 0.0 && fom.height_mm <= h_max_mm)) {
    throw InvalidArgument("AuxInput: FOM height " + std::to_string(fom.height_mm) + " outside (0, " +
                          std::to_string(h_max_mm) + "]");
  }
}

std::array<Image2D, 2> make_aux_channels(const AuxInput& aux, std::size_t h, std::size_t w) {
  aux.validate();
  return {Image2D(h, w, static_cast<float>(aux.fom.diameter_mm / aux.w_max_mm)),
          Image2D(h, w, static_cast<float>(aux.fom.height_mm / aux.h_max_mm))};
}

void write_input(nn::Tensor4& batch, std::size_t slot, const Image2D& image, const AuxInput& aux) {
  if (batch.c() != 3 || image.height() != batch.h() || image.width() != batch.w() || slot >= batch.n()) {
    throw InvalidArgument("write_input: image does not fit the batch tensor " + nn::to_string(batch.shape()));
  }
  aux.validate();
  const std::size_t plane = batch.shape().plane();
  std::copy(image.pixels().begin(), image.pixels().end(), batch.plane(slot, 0));
  std::fill_n(batch.plane(slot, 1), plane, static_cast<float>(aux.fom.diameter_mm / aux.w_max_mm));
  std::fill_n(batch.plane(slot, 2), plane, static_cast<float>(aux.fom.height_mm / aux.h_max_mm));
}

InferenceWrapper::InferenceWrapper(nn::Net& net, std::size_t native_h, std::size_t native_w, double w_max_mm,
                                   double h_max_mm)
    : net_(&net), native_h_(native_h), native_w_(native_w), w_max_mm_(w_max_mm), h_max_mm_(h_max_mm) {
  if (native_h == 0 || native_w == 0) throw InvalidArgument("InferenceWrapper: native size must be positive");
  net.output_shape({1, 3, native_h, native_w});
}

std::vector<Image2D> InferenceWrapper::predict(std::span<const Image2D> images, std::span<const FomSize> foms) {
  if (images.size() != foms.size()) throw InvalidArgument("predict: one FOM per image required");
  if (images.empty()) return {};
  nn::Tensor4 x({images.size(), 3, native_h_, native_w_});
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b].empty()) throw InvalidArgument("predict: empty image");
    write_input(x, b, fit(images[b], native_h_, native_w_), {foms[b], w_max_mm_, h_max_mm_});
  }
  const nn::Tensor4 y = net_->forward(x, nn::Mode::Eval);
  x.release();
  std::vector<Image2D> out;
  out.reserve(images.size());
  const std::size_t plane = native_h_ * native_w_;
  for (std::size_t b = 0; b < images.size(); ++b) {
    Image2D native(native_h_, native_w_, std::vector<float>(y.plane(b, 0), y.plane(b, 0) + plane));
    out.push_back(fit(native, images[b].height(), images[b].width()));
  }
  return out;
}

Image2D InferenceWrapper::predict(const Image2D& image, const FomSize& fom) {
  return std::move(predict(std::span(&image, 1), std::span(&fom, 1)).front());
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
  if (!(lr_start > lr_end && lr_end > 0.0)) throw InvalidArgument("TrainConfig: need lr_start > lr_end > 0");
  if (lr_decay_epochs < 1) throw InvalidArgument("TrainConfig: lr_decay_epochs must be >= 1");
  if (early_stop_patience < 1) throw InvalidArgument("TrainConfig: early_stop_patience must be >= 1");
  if (max_epochs < 1) throw InvalidArgument("TrainConfig: max_epochs must be >= 1");
  if (folds < 1) throw InvalidArgument("TrainConfig: folds must be >= 1");
  if (fold_index < 0 || fold_index >= folds) throw InvalidArgument("TrainConfig: fold_index outside [0, folds)");
  if (folds == 1 && !(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw InvalidArgument("TrainConfig: val_fraction must lie in (0, 1)");
  }
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  const double t = static_cast<double>(std::clamp(epoch, 0, cfg.lr_decay_epochs)) / cfg.lr_decay_epochs;
  return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, t);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, const TrainConfig& cfg) {
  cfg.validate();
  if (n < 2) throw InvalidArgument("split_indices: need at least two samples");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t lo = 0;
  std::size_t hi = 0;
  if (cfg.folds > 1) {
    const auto k = static_cast<std::size_t>(cfg.folds);
    const auto f = static_cast<std::size_t>(cfg.fold_index);
    lo = n * f / k;
    hi = n * (f + 1) / k;
  } else {
    hi = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(cfg.val_fraction * n)), 1, n - 1);
  }
  if (hi <= lo || hi - lo >= n) throw InvalidArgument("split_indices: too few samples for the requested folds");
  std::vector<std::size_t> train;
  std::vector<std::size_t> val(order.begin() + static_cast<std::ptrdiff_t>(lo),
                               order.begin() + static_cast<std::ptrdiff_t>(hi));
  train.insert(train.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(lo));
  train.insert(train.end(), order.begin() + static_cast<std::ptrdiff_t>(hi), order.end());
  return {std::move(train), std::move(val)};
}

TrainResult train(nn::Net& net, const NetSpec& spec, std::span<const sim::ScatterSample> samples,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  spec.validate();
  cfg.validate();
  if (samples.empty()) throw InvalidArgument("train: empty dataset");
  TrainResult result;
  std::tie(result.train_indices, result.val_indices) = split_indices(samples.size(), cfg);
  const Prepared data = prepare(samples, spec, cfg);

  if (cfg.init_head_bias) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i : result.train_indices) {
      for (float v : data.targets[i].pixels()) sum += v;
      count += data.targets[i].size();
    }
    nn::NodeState& head = net.state(net.size() - 1);
    if (head.bias.size() == 1) head.bias[0] = static_cast<float>(sum / static_cast<double>(count));
  }

  nn::Adam adam;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order = result.train_indices;
  nn::Net best = net;
  double best_val = std::numeric_limits<double>::infinity();
  nn::Tensor4 x;
  nn::Tensor4 y;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = learning_rate(cfg, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const auto chunk = std::span<const std::size_t>(order).subspan(start, std::min(bs, order.size() - start));
      fill_batch(data, chunk, x, y);
      const nn::Tensor4 pred = net.forward(x, nn::Mode::Train);
      nn::Loss loss = nn::mse_loss(pred, y);
      if (!std::isfinite(loss.value)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start));
      }
      net.zero_grad();
      net.backward(loss.grad);
      net.clear_cache();
      adam.step(net.parameters(), lr);
      loss_sum += loss.value * static_cast<double>(chunk.size());
    }
    const double val = validation_mse(net, data, result.val_indices, cfg.batch_size);
    if (!std::isfinite(val)) throw NumericError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const EpochLog log{epoch, lr, loss_sum / static_cast<double>(order.size()), val, seconds};
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (val < best_val) {
      best_val = val;
      best = net;
      result.best_epoch = epoch;
    } else if (epoch - result.best_epoch >= cfg.early_stop_patience) {
      break;
    }
  }
  net = std::move(best);
  result.best_val_mse = best_val;
  return result;
}

void write_training_log(std::ostream& os, std::span<const EpochLog> epochs) {
  os << "epoch,lr,train_mse,val_mse,seconds\n";
  for (const EpochLog& e : epochs) {
    os << e.epoch << ',' << sim::format_number(e.lr) << ',' << sim::format_number(e.train_mse) << ','
       << sim::format_number(e.val_mse) << ',' << sim::format_number(e.seconds) << '\n';
  }
}

Evaluation evaluate(InferenceWrapper& wrapper, std::span<const sim::ScatterSample> samples,
                    std::span<const std::size_t> indices, metrics::MapeMode mode) {
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(samples.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    indices = all;
  }
  if (indices.empty()) throw InvalidArgument("evaluate: no samples");
  std::vector<float> pred_all;
  std::vector<float> truth_all;
  constexpr std::size_t kChunk = 16;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    std::vector<Image2D> images;
    std::vector<FomSize> foms;
    for (std::size_t j = start; j < std::min(indices.size(), start + kChunk); ++j) {
      images.push_back(samples[indices[j]].input);
      foms.push_back(samples[indices[j]].fom);
    }
    const std::vector<Image2D> pred = wrapper.predict(images, foms);
    for (std::size_t j = 0; j < pred.size(); ++j) {
      const Image2D& t = samples[indices[start + j]].target;
      pred_all.insert(pred_all.end(), pred[j].pixels().begin(), pred[j].pixels().end());
      truth_all.insert(truth_all.end(), t.pixels().begin(), t.pixels().end());
    }
  }
  return {metrics::mape(pred_all, truth_all, mode), metrics::mse(pred_all, truth_all)};
}

}  // namespace scatterbench::auxnet
