// Supervised winner-takes-all losses (classification margin, smooth-L1
// regression, terminal endpoint) and the four self-supervised losses, combined
// into the weighted joint objective.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "ssllanes/autodiff.hpp"
#include "ssllanes/model.hpp"
#include "ssllanes/pseudolabels.hpp"

namespace ssllanes {

constexpr double kClsMargin = 0.2;
constexpr double kFocalGamma = 2.0;
constexpr double kFocalAlpha = 0.25;

// Index of the mode with the smallest final displacement error; ties break to
// the lowest index.
int best_mode_by_fde(const DecodeOutputs& dec, const std::vector<Vec2>& gt_future);

struct SupervisedLosses {
  ad::Var cls;
  ad::Var reg;
  ad::Var terminal;
  int best_mode = 0;
};

SupervisedLosses supervised_losses(ad::Graph& g, const DecodeOutputs& dec,
                                   const std::vector<Vec2>& gt_future);

ad::Var loss_reg(ad::Graph& g, const DecodeOutputs& dec,
                 const std::vector<Vec2>& gt_future, int best_mode);
ad::Var loss_cls(const DecodeOutputs& dec, int best_mode, double margin = kClsMargin);
ad::Var loss_terminal(ad::Graph& g, const DecodeOutputs& dec,
                      const std::vector<Vec2>& gt_future, int best_mode);

ad::Var loss_mask(ad::Graph& g, ad::Var reconstructions, const MaskSpec& spec);
ad::Var loss_d2i(ad::Graph& g, ad::Var predictions, const DistanceLabels& labels);
ad::Var loss_maneuver(ad::Var logits, int label);
ad::Var loss_goal(ad::Var candidate_logits, const GoalLabels& labels);

struct LossReport {
  double total = 0.0;
  std::map<std::string, double> components;  // cls, reg, terminal, ss
  double alpha1 = 1.0;
  double alpha2 = 1.0;
};

struct TotalLoss {
  ad::Var value;
  LossReport report;
};

// total = alpha1 * (cls + reg + terminal) + alpha2 * ss. Pass an undefined
// Var as `ss` when no pretext task contributes (pure supervised objective).
TotalLoss total_loss(ad::Graph& g, const SupervisedLosses& sup, ad::Var ss,
                     double alpha1 = 1.0, double alpha2 = 1.0);

}  // namespace ssllanes
