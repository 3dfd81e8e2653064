#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "ducknet/tensor.hpp"

namespace ducknet {

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
};

inline constexpr double kDefaultThreshold = 0.5;

// Pixel positive iff prob >= threshold.
template <typename T>
ConfusionCounts confusion_counts(const Tensor4<T>& pred, const Tensor4<T>& gt,
                                 double threshold = kDefaultThreshold) {
  require_same_shape(pred, gt, "confusion_counts");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = double(pred.data[i]) >= threshold;
    const bool g = gt.data[i] != T(0);
    if (p && g) ++c.tp;
    else if (p && !g) ++c.fp;
    else if (!p && g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

// A zero denominator (e.g. no positives anywhere for precision) scores 1.0:
// nothing to find and nothing found.
inline double ratio_or_one(std::int64_t num, std::int64_t den) {
  return den == 0 ? 1.0 : double(num) / double(den);
}

inline double dice(const ConfusionCounts& c) {
  return ratio_or_one(2 * c.tp, 2 * c.tp + c.fp + c.fn);
}
inline double jaccard(const ConfusionCounts& c) {
  return ratio_or_one(c.tp, c.tp + c.fp + c.fn);
}
inline double precision(const ConfusionCounts& c) {
  return ratio_or_one(c.tp, c.tp + c.fp);
}
inline double recall(const ConfusionCounts& c) {
  return ratio_or_one(c.tp, c.tp + c.fn);
}
inline double accuracy(const ConfusionCounts& c) {
  return ratio_or_one(c.tp + c.tn, c.total());
}

// Soft Dice loss over the whole batch jointly:
//   1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps)
template <typename T>
double dice_loss_soft(const Tensor4<T>& pred, const Tensor4<T>& gt,
                      double eps = 1e-6) {
  require_same_shape(pred, gt, "dice_loss_soft");
  double inter = 0.0, sp = 0.0, sg = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    inter += double(pred.data[i]) * double(gt.data[i]);
    sp += double(pred.data[i]);
    sg += double(gt.data[i]);
  }
  return 1.0 - (2.0 * inter + eps) / (sp + sg + eps);
}

// Loss value plus gradient w.r.t. pred.
template <typename T>
double dice_loss_soft_grad(const Tensor4<T>& pred, const Tensor4<T>& gt,
                           Tensor4<T>& grad, double eps = 1e-6) {
  require_same_shape(pred, gt, "dice_loss_soft");
  double inter = 0.0, sp = 0.0, sg = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    inter += double(pred.data[i]) * double(gt.data[i]);
    sp += double(pred.data[i]);
    sg += double(gt.data[i]);
  }
  const double num = 2.0 * inter + eps;
  const double den = sp + sg + eps;
  grad = Tensor4<T>(pred.shape);
  for (std::size_t i = 0; i < pred.data.size(); ++i)
    grad.data[i] = T((num - 2.0 * double(gt.data[i]) * den) / (den * den));
  return 1.0 - num / den;
}

// Population standard deviation (divide by n).
inline double sd(const std::vector<double>& values) {
  require(!values.empty(), "sd: need at least one value");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= double(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return std::sqrt(sq / double(values.size()));
}

struct MetricsRow {
  std::string id;
  double dice = 0, jaccard = 0, precision = 0, recall = 0, accuracy = 0;
};

enum class Aggregate { PerImageMean, PooledPixels };

struct MetricsReport {
  std::vector<MetricsRow> rows;
  MetricsRow mean_row;  // id = "mean"
  MetricsRow sd_row;    // id = "sd"
  std::size_t n = 0;
  Aggregate aggregate = Aggregate::PerImageMean;
};

inline MetricsRow row_from_counts(const std::string& id,
                                  const ConfusionCounts& c) {
  return {id, dice(c), jaccard(c), precision(c), recall(c), accuracy(c)};
}

inline MetricsReport make_report(const std::vector<MetricsRow>& rows,
                                 Aggregate aggregate = Aggregate::PerImageMean,
                                 const ConfusionCounts* pooled = nullptr) {
  require(!rows.empty(), "metrics report: no rows");
  MetricsReport r;
  r.rows = rows;
  r.n = rows.size();
  r.aggregate = aggregate;
  auto each = [&](auto get) {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& row : rows) v.push_back(get(row));
    return v;
  };
  const auto d = each([](const MetricsRow& x) { return x.dice; });
  const auto j = each([](const MetricsRow& x) { return x.jaccard; });
  const auto p = each([](const MetricsRow& x) { return x.precision; });
  const auto rc = each([](const MetricsRow& x) { return x.recall; });
  const auto a = each([](const MetricsRow& x) { return x.accuracy; });
  auto mean = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    return m / double(v.size());
  };
  if (aggregate == Aggregate::PooledPixels) {
    require(pooled != nullptr, "metrics report: pooled counts missing");
    r.mean_row = row_from_counts("mean", *pooled);
  } else {
    r.mean_row = {"mean", mean(d), mean(j), mean(p), mean(rc), mean(a)};
  }
  r.sd_row = {"sd", sd(d), sd(j), sd(p), sd(rc), sd(a)};
  return r;
}

namespace detail {

inline std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline void append_row(std::string& out, const MetricsRow& r,
                       std::size_t id_width) {
  std::string id = r.id;
  id.resize(std::max(id_width, id.size()), ' ');
  out += id + "  " + fmt_metric(r.dice) + "  " + fmt_metric(r.jaccard) + "   " +
         fmt_metric(r.precision) + "     " + fmt_metric(r.recall) + "  " +
         fmt_metric(r.accuracy) + "\n";
}

}  // namespace detail

// Plain-text table, columns ordered DSC, Jaccard, Precision, Recall,
// Accuracy.
inline std::string report_to_text(const MetricsReport& r) {
  std::size_t id_w = 4;
  for (const auto& row : r.rows) id_w = std::max(id_w, row.id.size());
  std::string head = "id";
  head.resize(id_w, ' ');
  std::string out = head + "  DSC     Jaccard  Precision  Recall  Accuracy\n";
  for (const auto& row : r.rows) detail::append_row(out, row, id_w);
  detail::append_row(out, r.mean_row, id_w);
  detail::append_row(out, r.sd_row, id_w);
  return out;
}

inline std::string report_to_csv(const MetricsReport& r) {
  std::string out = "id,dsc,jaccard,precision,recall,accuracy\n";
  auto line = [&](const MetricsRow& row) {
    out += row.id + "," + detail::fmt_metric(row.dice) + "," +
           detail::fmt_metric(row.jaccard) + "," +
           detail::fmt_metric(row.precision) + "," +
           detail::fmt_metric(row.recall) + "," +
           detail::fmt_metric(row.accuracy) + "\n";
  };
  for (const auto& row : r.rows) line(row);
  line(r.mean_row);
  line(r.sd_row);
  return out;
}

}  // namespace ducknet
