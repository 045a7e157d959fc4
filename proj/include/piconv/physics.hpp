#pragma once

// Differentiable physics terms: discretised heat-equation residual, surface
// boundary residuals, initial-condition residual and the weighted composite
// loss. All temperatures are physical (degrees Celsius).

#include "piconv/field.hpp"
#include "piconv/laser.hpp"
#include "piconv/material.hpp"
#include "piconv/tensor.hpp"
#include "piconv/thermal_sim.hpp"

#include <optional>
#include <span>
#include <vector>

namespace piconv {

/// Time level at which the 5-point Laplacian, the surface ghost values and
/// the thin-wall sinks are evaluated.
///  - previous: on T_prev. One explicit simulator step has residual zero.
///  - predicted: on the predicted field (backward-Euler form).
/// Density, heat capacity and conductivity are lagged (taken at T_prev) at
/// both levels.
enum class StencilLevel { previous, predicted };

std::string to_string(StencilLevel level);
StencilLevel stencil_level_from_string(const std::string& name);

struct PhysicsSettings {
  MaterialModel material;
  GridSpec grid;
  /// Interval between the previous and predicted frame, in seconds.
  double frame_dt = 0.02;
  StepOptions options;
  StencilLevel level = StencilLevel::previous;
};

/// Per-sample reference data for a batch of predictions [B, 1, H, W].
struct PhysicsBatch {
  std::vector<Field> prev;          // T_prev
  std::vector<Mask> prev_active;    // cells governed by the residual
  std::vector<Mask> target_active;  // cells active at the predicted time
  std::vector<Field> flux;          // laser flux at the predicted time

  std::size_t size() const { return prev.size(); }
  void validate(Index rows, Index cols) const;
};

/// Heat-equation residual [B, 1, H, W] in W/m^3:
///   R = -rho Cp (T - T_prev) / dt + k/dx^2 sum_faces (T_ghost - T) - sink
/// Zero on cells inactive at T_prev. `flux_scale`, when given, is a
/// one-element tensor multiplying the laser flux (trainable laser power).
Tensor pde_residual(const Tensor& t_pred, const PhysicsBatch& batch,
                    const PhysicsSettings& settings,
                    const Tensor* flux_scale = nullptr);

/// Single-frame convenience form; `t_pred` may be [H, W] or [1, 1, H, W].
Tensor pde_residual(const Tensor& t_pred, const ThermalFrame& prev,
                    const Field& flux, const PhysicsSettings& settings);

/// Surface residuals on exposed faces of active cells, with a first-order
/// one-sided normal derivative towards the inner neighbour:
///   r = -k(T_s) (T_s - T_inner) / dx - [h (T_s - T_amb)
///        + sigma eps (T_s^4 - T_amb^4) - q]      (q on top faces only)
/// i.e. -k dT/dn equals the net outward loss. `top` is [B, 1, H, W] (north
/// faces), `lateral` is [B, 3, H, W] (south, west, east faces); entries that
/// are not exposed faces are zero.
struct BcResiduals {
  Tensor top;
  Tensor lateral;
  Index n_top = 0;
  Index n_lateral = 0;
  Mask top_faces;       // [B * H, W] stacked per sample
  Mask lateral_faces;   // [B * 3 * H, W]

  /// Face residuals as flat vectors, in row-major cell order.
  std::vector<double> top_values() const;
  std::vector<double> lateral_values() const;
};

BcResiduals bc_residuals(const Tensor& t_pred, std::span<const Mask> active,
                         std::span<const Field> flux,
                         const MaterialModel& material, const GridSpec& grid,
                         const Tensor* flux_scale = nullptr);

/// T_pred - T_init, elementwise.
Tensor ic_residual(const Tensor& t_pred, const Tensor& t_init);

struct LossWeights {
  double w_p = 1.0;
  double w_i = 1.0;
  double w_b = 1.0;
  double w_d = 1.0;

  void validate() const;
  LossWeights scaled(double factor) const {
    return {w_p * factor, w_i * factor, w_b * factor, w_d * factor};
  }
};

/// Unweighted terms and their weighted sum.
struct LossBreakdown {
  double l_pde = 0;
  double l_ic = 0;
  double l_bc = 0;
  double l_data = 0;
  double l_total = 0;
};

/// w_p l_pde + w_i l_ic + w_b l_bc + w_d l_data, evaluated in that order.
double weighted_total(const LossWeights& w, double l_pde, double l_ic,
                      double l_bc, double l_data);

struct CompositeLoss {
  Tensor total;  // differentiable; built from non-zero-weight terms only
  Tensor pde, ic, bc, data;
  LossBreakdown breakdown;
};

/// l_pde = mean(R^2); l_ic = mean over cells still inactive at the target
/// time of (T_pred - T_amb)^2; l_bc = mean over exposed faces of r^2;
/// l_data = mean((T_pred - T_target)^2).
CompositeLoss composite_loss(const Tensor& preds, const Tensor& targets,
                             const PhysicsBatch& batch,
                             const PhysicsSettings& settings,
                             const LossWeights& weights,
                             const Tensor* flux_scale = nullptr);

}  // namespace piconv
