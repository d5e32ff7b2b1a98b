#include "bowsense/metrics.hpp"

#include <stdexcept>

namespace bowsense::metrics {

namespace {

void check_lengths(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> truths) {
  if (preds.size() != truths.size()) throw std::invalid_argument("predictions and truths differ in length");
  if (preds.empty()) throw std::invalid_argument("empty prediction vector");
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Confusion confusion(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> truths) {
  check_lengths(preds, truths);
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] != 0;
    const bool t = truths[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Classification classification_metrics(const Confusion& c) {
  Classification m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  const double sum = m.precision + m.recall;
  m.f1 = sum > 0.0 ? 2.0 * m.precision * m.recall / sum : 0.0;
  return m;
}

Classification classification_metrics(std::span<const std::uint8_t> preds,
                                      std::span<const std::uint8_t> truths) {
  return classification_metrics(confusion(preds, truths));
}

double pqd(std::size_t p_pred, std::size_t p_true) {
  if (p_true == 0) throw std::invalid_argument("pqd: true positive count must be >= 1");
  const double diff = p_pred > p_true ? static_cast<double>(p_pred - p_true)
                                      : static_cast<double>(p_true - p_pred);
  return 1.0 - diff / static_cast<double>(p_true);
}

double sla(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> truths) {
  check_lengths(preds, truths);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += (preds[i] != 0) == (truths[i] != 0) ? 1 : 0;
  return ratio(correct, preds.size());
}

EvalReport evaluate(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> truths) {
  EvalReport r;
  r.counts = confusion(preds, truths);
  r.cls = classification_metrics(r.counts);
  r.pqd = pqd(r.counts.tp + r.counts.fp, r.counts.tp + r.counts.fn);
  r.sla = sla(preds, truths);
  return r;
}

}  // namespace bowsense::metrics
