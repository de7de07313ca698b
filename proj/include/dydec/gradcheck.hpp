#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dydec/model.hpp"

namespace dydec {

struct GradCheckRow {
  std::string check;
  std::string param;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradCheckOptions {
  int depth = 3;
  int kernel_len = 65;
  Eigen::Index samples = 4096;
  double sample_rate = 8000.0;
  std::uint64_t seed = 0;
  int per_kind = 3;  ///< randomly chosen parameters per kind in the model-level checks
  double frontend_step = 1e-7;  ///< eg-Norm step; cutoffs use it times the Nyquist rate
  double backbone_step = 1e-5;
  double training_step = 1e-8;  ///< step (relative; cutoffs times Nyquist) of the long-double training-loss oracle
};

/// |a - n| / max(|a|, |n|); 0 when both are below 1e-12 in magnitude.
double relative_error(double analytic, double numeric);

/// Cutoff Jacobian of every tree kernel against central differences (1e-4 Hz).
std::vector<GradCheckRow> check_kernel_cutoffs(const GradCheckOptions& opt);
/// eg-Norm parameter and input VJPs at random points (step 1e-5).
std::vector<GradCheckRow> check_egnorm(const GradCheckOptions& opt);
/// Directional derivative of decompose with respect to single cutoffs and eg-Norm parameters.
std::vector<GradCheckRow> check_frontend_jvp(const GradCheckOptions& opt);
/// Backbone weights, biases, pooling cutoffs and the output affine.
std::vector<GradCheckRow> check_backbone(const GradCheckOptions& opt);
/// Full training loss for the default miniature model and every ablation variant.
std::vector<GradCheckRow> check_training(const GradCheckOptions& opt);

std::vector<GradCheckRow> run_gradcheck(const GradCheckOptions& opt);

}  // namespace dydec
