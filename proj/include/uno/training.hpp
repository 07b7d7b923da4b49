#pragma once

#include "uno/data.hpp"
#include "uno/models.hpp"

#include <cstdint>
#include <functional>
#include <set>

namespace uno {

struct TrainConfig {
  int epochs = 80;
  double lr = 1e-3;
  int batch_size = 128;
  std::uint64_t seed = 0;
};

// Plain Adam (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParamVector& theta, const GradVector& g);

 private:
  double lr_, b1_, b2_, eps_;
  Vec m_, v_;
  long t_ = 0;
};

struct TrainReport {
  double final_loss = 0;  // mean loss over the last epoch
};

// Called after each epoch with (epoch, mean loss).
using EpochCallback = std::function<void(int, double)>;

TrainReport train_vae(VaeModel& model, const Mat& images, const TrainConfig& config,
                      const EpochCallback& on_epoch = {});

// Binary retain/forget cross-entropy plus the multiclass cross-entropy.
TrainReport train_classifier(ClassifierModel& classifier, const LabeledDataset& data,
                             const std::set<int>& forget_labels, const TrainConfig& config,
                             const EpochCallback& on_epoch = {});

struct ClassifierAccuracy {
  double binary = 0;
  double multiclass = 0;
};

ClassifierAccuracy evaluate_classifier(const ClassifierModel& classifier, const LabeledDataset& data,
                                       const std::set<int>& forget_labels);

}  // namespace uno
