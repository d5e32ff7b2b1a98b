#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace bowsense::metrics {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
};

Confusion confusion(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> truths);

struct Classification {
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing was predicted positive
  double recall = 0.0;     // 0 when nothing is truly positive
  double f1 = 0.0;         // 0 when precision + recall is 0
};

Classification classification_metrics(const Confusion& c);
Classification classification_metrics(std::span<const std::uint8_t> preds,
                                      std::span<const std::uint8_t> truths);

/// 1 - |p_pred - p_true| / p_true. Not clamped: over-prediction by more than
/// p_true gives a negative value.
double pqd(std::size_t p_pred, std::size_t p_true);

/// Fraction of positions where prediction and truth agree.
double sla(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> truths);

struct EvalReport {
  Classification cls;
  double pqd = 0.0;
  double sla = 0.0;
  Confusion counts;
};

EvalReport evaluate(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> truths);

}  // namespace bowsense::metrics
