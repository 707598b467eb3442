#include "ssllanes/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ssllanes {

namespace {

std::vector<double> flatten_points(const std::vector<Vec2>& pts) {
  std::vector<double> out;
  out.reserve(pts.size() * 2);
  for (const Vec2& p : pts) {
    out.push_back(p.x);
    out.push_back(p.y);
  }
  return out;
}

}  // namespace

int best_mode_by_fde(const DecodeOutputs& dec, const std::vector<Vec2>& gt_future) {
  if (gt_future.empty()) throw std::invalid_argument("best_mode_by_fde: empty ground truth");
  const Vec2 gt_end = gt_future.back();
  int best = 0;
  double best_fde = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < dec.mode_positions.size(); ++k) {
    const auto& v = dec.mode_positions[k].value();
    const Vec2 end{v[v.size() - 2], v[v.size() - 1]};
    const double fde = distance(end, gt_end);
    if (fde < best_fde) {
      best_fde = fde;
      best = static_cast<int>(k);
    }
  }
  return best;
}

ad::Var loss_reg(ad::Graph& g, const DecodeOutputs& dec,
                 const std::vector<Vec2>& gt_future, int best_mode) {
  const ad::Var& pred = dec.mode_positions[static_cast<std::size_t>(best_mode)];
  ad::Var gt = g.constant(pred.shape(), flatten_points(gt_future));
  return ad::smooth_l1(pred, gt, 1.0);
}

ad::Var loss_cls(const DecodeOutputs& dec, int best_mode, double margin) {
  const int k = dec.score_logits.shape()[0];
  if (k <= 1) return ad::mul_scalar(ad::sum(dec.score_logits), 0.0);  // no other modes
  ad::Var s_best = ad::select_index(dec.score_logits, best_mode);     // [1]
  ad::Var spread = ad::tile_rows(s_best, k);                          // [k,1]
  ad::Var diff = ad::sub(dec.score_logits, ad::reshape(spread, {k}));
  ad::Var hinge = ad::relu(ad::add_scalar(diff, margin));
  std::vector<double> drop_best(static_cast<std::size_t>(k), 1.0);
  drop_best[static_cast<std::size_t>(best_mode)] = 0.0;
  return ad::mul_scalar(ad::sum(ad::mul_const(hinge, drop_best)), 1.0 / (k - 1));
}

ad::Var loss_terminal(ad::Graph& g, const DecodeOutputs& dec,
                      const std::vector<Vec2>& gt_future, int best_mode) {
  const ad::Var& pred = dec.mode_positions[static_cast<std::size_t>(best_mode)];
  const int t = pred.shape()[0];
  ad::Var end = ad::gather_rows(pred, {t - 1});
  ad::Var gt_end = g.constant({1, 2}, {gt_future.back().x, gt_future.back().y});
  return ad::norm2(end, gt_end);
}

SupervisedLosses supervised_losses(ad::Graph& g, const DecodeOutputs& dec,
                                   const std::vector<Vec2>& gt_future) {
  SupervisedLosses out;
  out.best_mode = best_mode_by_fde(dec, gt_future);
  out.reg = loss_reg(g, dec, gt_future, out.best_mode);
  out.cls = loss_cls(dec, out.best_mode);
  out.terminal = loss_terminal(g, dec, gt_future, out.best_mode);
  return out;
}

ad::Var loss_mask(ad::Graph& g, ad::Var reconstructions, const MaskSpec& spec) {
  const int n = static_cast<int>(spec.masked_nodes.size());
  if (n == 0) throw std::invalid_argument("loss_mask: empty mask spec");
  if (reconstructions.shape() != ad::Shape{n, kNodeFeatureDim})
    throw std::invalid_argument("loss_mask: reconstruction shape mismatch");
  ad::Var targets = g.constant({n, kNodeFeatureDim}, spec.target_features);
  return ad::mse(reconstructions, targets);
}

ad::Var loss_d2i(ad::Graph& g, ad::Var predictions, const DistanceLabels& labels) {
  const int m = static_cast<int>(labels.d.size());
  if (predictions.shape() != ad::Shape{m})
    throw std::invalid_argument("loss_d2i: prediction/label length mismatch");
  ad::Var targets = g.constant({m}, labels.d);
  ad::Var sq = ad::mul(ad::sub(predictions, targets), ad::sub(predictions, targets));
  return ad::masked_mean(sq, labels.reachable);
}

ad::Var loss_maneuver(ad::Var logits, int label) {
  if (logits.shape() != ad::Shape{kNumManeuvers})
    throw std::invalid_argument("loss_maneuver: expected 6 logits");
  if (label < 0 || label >= kNumManeuvers)
    throw std::invalid_argument("loss_maneuver: label out of range");
  return ad::cross_entropy(logits, {label});
}

ad::Var loss_goal(ad::Var candidate_logits, const GoalLabels& labels) {
  if (candidate_logits.shape() != ad::Shape{static_cast<int>(labels.labels.size())})
    throw std::invalid_argument("loss_goal: prediction/label length mismatch");
  return ad::focal_loss(candidate_logits, labels.labels, kFocalGamma, kFocalAlpha);
}

TotalLoss total_loss(ad::Graph& g, const SupervisedLosses& sup, ad::Var ss,
                     double alpha1, double alpha2) {
  (void)g;
  ad::Var supervised = ad::add(ad::add(sup.cls, sup.reg), sup.terminal);
  ad::Var total = ad::mul_scalar(supervised, alpha1);
  if (ss.defined()) total = ad::add(total, ad::mul_scalar(ss, alpha2));

  TotalLoss out;
  out.value = total;
  out.report.alpha1 = alpha1;
  out.report.alpha2 = alpha2;
  out.report.components["cls"] = sup.cls.scalar();
  out.report.components["reg"] = sup.reg.scalar();
  out.report.components["terminal"] = sup.terminal.scalar();
  out.report.components["ss"] = ss.defined() ? ss.scalar() : 0.0;
  out.report.total = total.scalar();
  return out;
}

}  // namespace ssllanes
