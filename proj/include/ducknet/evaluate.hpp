#pragma once

#include "ducknet/dataset.hpp"
#include "ducknet/metrics.hpp"
#include "ducknet/network.hpp"

namespace ducknet {

// Per-image metrics at the resized working resolution. Cross-dataset
// evaluation is the same call pointed at a different dataset/split.
template <typename T>
MetricsReport evaluate(Network<T>& net, const DatasetDir& data,
                       const std::vector<std::string>& ids, int input_h,
                       int input_w, double threshold = kDefaultThreshold,
                       Aggregate aggregate = Aggregate::PerImageMean) {
  require(!ids.empty(), "evaluate: empty split");
  std::vector<MetricsRow> rows;
  ConfusionCounts pooled;
  for (const auto& id : ids) {
    const Sample s = data.load_resized(id, input_h, input_w);
    Tensor4<T> image(1, 3, input_h, input_w);
    for (std::size_t i = 0; i < image.data.size(); ++i)
      image.data[i] = T(s.image.data[i]);
    Tensor4<T> gt(1, 1, input_h, input_w);
    for (std::size_t i = 0; i < gt.data.size(); ++i)
      gt.data[i] = T(s.mask.data[i]);
    const Tensor4<T> pred = net.forward(image, Mode::Infer);
    const ConfusionCounts c = confusion_counts(pred, gt, threshold);
    pooled.tp += c.tp;
    pooled.fp += c.fp;
    pooled.fn += c.fn;
    pooled.tn += c.tn;
    rows.push_back(row_from_counts(id, c));
  }
  return make_report(rows, aggregate, &pooled);
}

}  // namespace ducknet
