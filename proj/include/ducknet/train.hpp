#pragma once

#include <cstdio>
#include <optional>

#include "ducknet/augment.hpp"
#include "ducknet/checkpoint.hpp"
#include "ducknet/metrics.hpp"
#include "ducknet/network.hpp"
#include "ducknet/optimizer.hpp"

namespace ducknet {

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 4;
  int epochs = 600;
  int input_h = 352, input_w = 352;
  std::uint64_t seed = 0;
  bool augment = true;
  double loss_eps = 1e-6;

  void validate() const {
    require(lr > 0, "train config: lr must be positive");
    require(batch_size >= 1, "train config: batch size must be >= 1");
    require(epochs >= 1, "train config: epochs must be >= 1");
    require(input_h >= 1 && input_w >= 1, "train config: input size");
  }
};

struct EpochStat {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_dice = 0.0;
};

struct TrainResult {
  std::vector<EpochStat> history;
  int best_epoch = 0;
  double best_val_dice = 0.0;
  std::vector<std::uint8_t> best_checkpoint;  // serialized at the best epoch
};

// one "epoch train_loss val_dice" line per epoch
inline std::string history_to_text(const std::vector<EpochStat>& history) {
  std::string out;
  char buf[96];
  for (const EpochStat& e : history) {
    std::snprintf(buf, sizeof buf, "%d %.8f %.8f\n", e.epoch, e.train_loss,
                  e.val_dice);
    out += buf;
  }
  return out;
}

template <typename T>
struct Optimizer {
  RmspropState<T> state;
  std::vector<std::size_t> offsets;  // per trainable param

  Optimizer(Graph<T>& g, T lr) {
    std::size_t total = 0;
    for (const auto& p : g.params())
      if (p.trainable) {
        offsets.push_back(total);
        total += p.tensor->data.size();
      }
    state = RmspropState<T>(total, lr);
  }

  void step(Graph<T>& g) {
    std::size_t i = 0;
    for (auto& p : g.params()) {
      if (!p.trainable) continue;
      rmsprop_step(p.tensor->data.data(), p.tensor->grad.data(),
                   p.tensor->data.size(), state, offsets[i], p.name);
      ++i;
    }
  }
};

// One optimization step over a batch; returns the loss before the update.
template <typename T>
double train_step(Network<T>& net, const Tensor4<T>& images,
                  const Tensor4<T>& masks, Optimizer<T>& opt,
                  double loss_eps = 1e-6) {
  net.graph.zero_param_grads();
  const Tensor4<T> pred = net.forward(images, Mode::Train);
  Tensor4<T> grad;
  const double loss = dice_loss_soft_grad(pred, masks, grad, loss_eps);
  if (!std::isfinite(loss))
    throw std::runtime_error("train_step: non-finite loss");
  net.graph.backward(grad);
  opt.step(net.graph);
  return loss;
}

namespace detail {

template <typename T>
void stack_batch(const std::vector<Sample>& samples,
                 const std::vector<std::size_t>& order, std::size_t first,
                 std::size_t count, Tensor4<T>& images, Tensor4<T>& masks) {
  const Shape4 is = samples[order[first]].image.shape;
  images = Tensor4<T>(int(count), 3, is.h, is.w);
  masks = Tensor4<T>(int(count), 1, is.h, is.w);
  for (std::size_t b = 0; b < count; ++b) {
    const Sample& s = samples[order[first + b]];
    require(s.image.shape == is, "train: sample sizes differ in batch");
    const std::size_t ipx = s.image.data.size(), mpx = s.mask.data.size();
    for (std::size_t i = 0; i < ipx; ++i)
      images.data[b * ipx + i] = T(s.image.data[i]);
    for (std::size_t i = 0; i < mpx; ++i)
      masks.data[b * mpx + i] = T(s.mask.data[i]);
  }
}

template <typename T>
double mean_val_dice(Network<T>& net, const std::vector<Sample>& val,
                     double threshold) {
  std::vector<double> dices;
  for (const Sample& s : val) {
    Tensor4<T> image(1, 3, s.image.shape.h, s.image.shape.w);
    for (std::size_t i = 0; i < image.data.size(); ++i)
      image.data[i] = T(s.image.data[i]);
    Tensor4<T> gt(1, 1, s.mask.shape.h, s.mask.shape.w);
    for (std::size_t i = 0; i < gt.data.size(); ++i)
      gt.data[i] = T(s.mask.data[i]);
    const Tensor4<T> pred = net.forward(image, Mode::Infer);
    dices.push_back(dice(confusion_counts(pred, gt, threshold)));
  }
  double m = 0.0;
  for (double d : dices) m += d;
  return dices.empty() ? 0.0 : m / double(dices.size());
}

}  // namespace detail

// Full training loop: the training set is re-augmented before each epoch
// (per-sample rng streams derived from hash(seed, epoch, id), so results do
// not depend on iteration order), batches follow a seeded per-epoch shuffle,
// and the checkpoint of the best validation-Dice epoch is retained. With an
// empty validation set the best checkpoint is simply the last epoch's.
template <typename T>
TrainResult train(Network<T>& net, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg,
                  const AugmentConfig& aug = {}) {
  cfg.validate();
  require(!train_set.empty(), "train: empty training split");
  Optimizer<T> opt(net.graph, T(cfg.lr));
  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<Sample> epoch_set;
    epoch_set.reserve(train_set.size());
    if (cfg.augment) {
      for (const Sample& s : train_set) {
        Rng stream(hash_str(hash_u64(cfg.seed, std::uint64_t(epoch)), s.id));
        epoch_set.push_back(augment(s, aug, stream));
      }
    } else {
      epoch_set = train_set;
    }
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(hash_str(hash_u64(cfg.seed, std::uint64_t(epoch)), "shuffle"));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t first = 0; first < order.size();
         first += std::size_t(cfg.batch_size)) {
      const std::size_t count =
          std::min(std::size_t(cfg.batch_size), order.size() - first);
      Tensor4<T> images, masks;
      detail::stack_batch(epoch_set, order, first, count, images, masks);
      double loss;
      try {
        loss = train_step(net, images, masks, opt, cfg.loss_eps);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " (epoch " +
                                 std::to_string(epoch) + ", step " +
                                 std::to_string(steps + 1) + ")");
      }
      loss_sum += loss;
      ++steps;
    }
    EpochStat stat;
    stat.epoch = epoch;
    stat.train_loss = loss_sum / double(steps);
    stat.val_dice = detail::mean_val_dice(net, val_set, kDefaultThreshold);
    result.history.push_back(stat);
    const bool is_best = val_set.empty()
                             ? epoch == cfg.epochs
                             : (result.best_epoch == 0 ||
                                stat.val_dice > result.best_val_dice);
    if (is_best) {
      result.best_epoch = epoch;
      result.best_val_dice = stat.val_dice;
      result.best_checkpoint = save_checkpoint_bytes(net.graph);
    }
  }
  return result;
}

}  // namespace ducknet
