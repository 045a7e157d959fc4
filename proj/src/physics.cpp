#include "piconv/physics.hpp"

#include "piconv/error.hpp"

#include <cmath>

namespace piconv {

std::string to_string(StencilLevel level) {
  return level == StencilLevel::predicted ? "predicted" : "previous";
}

StencilLevel stencil_level_from_string(const std::string& name) {
  if (name == "previous") return StencilLevel::previous;
  if (name == "predicted") return StencilLevel::predicted;
  throw ValidationError("unknown stencil level '" + name +
                        "' (expected previous or predicted)");
}

void PhysicsBatch::validate(Index rows, Index cols) const {
  const std::size_t n = prev.size();
  if (prev_active.size() != n || target_active.size() != n || flux.size() != n) {
    throw ShapeError("physics batch: member lengths differ");
  }
  auto check = [&](Index r, Index c, const char* what) {
    if (r != rows || c != cols) {
      throw ShapeError(std::string("physics batch: ") + what + " is " +
                       std::to_string(r) + "x" + std::to_string(c) +
                       ", expected " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  };
  for (std::size_t b = 0; b < n; ++b) {
    check(prev[b].rows(), prev[b].cols(), "prev frame");
    check(prev_active[b].rows(), prev_active[b].cols(), "prev mask");
    check(target_active[b].rows(), target_active[b].cols(), "target mask");
    check(flux[b].rows(), flux[b].cols(), "flux field");
  }
}

namespace {

struct Planes {
  Index batch, rows, cols;
  Index plane() const { return rows * cols; }
  Index size() const { return batch * plane(); }
  Shape shape() const { return {batch, 1, rows, cols}; }
};

Planes planes_of(const Tensor& t, std::size_t batch) {
  const Shape& s = t.shape();
  if (s.size() != 4 || s[1] != 1 || s[0] != Index(batch)) {
    throw ShapeError("physics: expected prediction shape [" +
                     std::to_string(batch) + ", 1, H, W], got " +
                     shape_string(s));
  }
  return {s[0], s[2], s[3]};
}

template <typename Fn>
Array per_cell(const Planes& p, Fn fn) {
  Array out(p.size());
  for (Index b = 0; b < p.batch; ++b)
    for (Index i = 0; i < p.rows; ++i)
      for (Index j = 0; j < p.cols; ++j)
        out[b * p.plane() + i * p.cols + j] = fn(b, i, j);
  return out;
}

double quartic(double x) { return (x * x) * (x * x); }

Tensor flux_term(Tape& tape, const Planes& p, const Array& q_over_dx,
                 const Tensor* flux_scale) {
  Tensor q = tape.constant(p.shape(), q_over_dx);
  return flux_scale ? mul(q, *flux_scale) : q;
}

}  // namespace

Tensor pde_residual(const Tensor& t_pred, const PhysicsBatch& batch,
                    const PhysicsSettings& s, const Tensor* flux_scale) {
  const Planes p = planes_of(t_pred, batch.size());
  batch.validate(p.rows, p.cols);
  if (!(s.frame_dt > 0)) throw ValidationError("pde_residual: dt must be > 0");
  Tape& tape = t_pred.tape();
  const MaterialModel& m = s.material;
  const double dx = s.grid.dx;
  const auto& act = batch.prev_active;
  const auto& prev = batch.prev;
  const EdgeCondition edges = s.options.edges;

  // rho Cp / dt at T_prev, zero on inactive cells.
  const Array cap = per_cell(p, [&](Index b, Index i, Index j) {
    return act[b](i, j) ? m.volumetric_heat_capacity(prev[b](i, j)) / s.frame_dt
                        : 0.0;
  });
  const Array tp = per_cell(p, [&](Index b, Index i, Index j) {
    return prev[b](i, j);
  });
  auto exposed = [&](Index b, Index i, Index j, Face f) {
    return act[b](i, j) &&
           face_kind(act[b], i, j, f, edges) == FaceKind::exposed;
  };
  const Array q_over_dx = per_cell(p, [&](Index b, Index i, Index j) {
    return exposed(b, i, j, Face::north) ? batch.flux[b](i, j) / dx : 0.0;
  });

  if (s.level == StencilLevel::previous) {
    const Field zero = Field::Zero(p.rows, p.cols);
    Array rhs(p.size());
    for (Index b = 0; b < p.batch; ++b) {
      const Field r = heat_rhs(prev[b], act[b], m, s.grid, zero, s.options);
      rhs.segment(b * p.plane(), p.plane()) =
          Eigen::Map<const Array>(r.data(), p.plane());
    }
    Tensor linear = mul(t_pred, tape.constant(p.shape(), -cap));
    Tensor r = add(linear, tape.constant(p.shape(), cap * tp + rhs));
    return add(r, flux_term(tape, p, q_over_dx, flux_scale));
  }

  // Predicted level: every stencil value comes from t_pred.
  const double ta = m.t_amb;
  const double ta4 = quartic(ta + kKelvinOffset);
  const double sig_eps = m.sigma_sb * m.emissivity;
  const bool thin = s.options.mode == HeatMode::thin_wall;
  const double w = s.grid.thickness;

  auto count_faces = [&](Index b, Index i, Index j, FaceKind kind) {
    double n = 0;
    for (Face f : kFaces) n += face_kind(act[b], i, j, f, edges) == kind;
    return n;
  };
  const Array kdx2 = per_cell(p, [&](Index b, Index i, Index j) {
    return act[b](i, j) ? m.conductivity(prev[b](i, j)) / (dx * dx) : 0.0;
  });
  const Array n_conduct = per_cell(p, [&](Index b, Index i, Index j) {
    return act[b](i, j) ? count_faces(b, i, j, FaceKind::conduct) : 0.0;
  });
  const Array n_dirichlet = per_cell(p, [&](Index b, Index i, Index j) {
    return act[b](i, j) ? count_faces(b, i, j, FaceKind::dirichlet) : 0.0;
  });
  // Coefficients of (T - T_amb) and (T_K^4 - T_amb,K^4).
  const Array conv = per_cell(p, [&](Index b, Index i, Index j) {
    if (!act[b](i, j)) return 0.0;
    double c = 0;
    for (Face f : kFaces) {
      if (exposed(b, i, j, f)) c += (f == Face::north ? m.h_top : m.h_conv) / dx;
    }
    return thin ? c + m.h_conv / w : c;
  });
  const Array rad = per_cell(p, [&](Index b, Index i, Index j) {
    if (!act[b](i, j)) return 0.0;
    double c = count_faces(b, i, j, FaceKind::exposed) / dx;
    return sig_eps * (thin ? c + 1.0 / w : c);
  });

  const Array diag = -cap - kdx2 * (n_conduct + 2.0 * n_dirichlet) - conv;
  const Array constant =
      cap * tp + 2.0 * ta * kdx2 * n_dirichlet + conv * ta + rad * ta4;

  Tensor r = mul(t_pred, tape.constant(p.shape(), diag));
  for (Face f : kFaces) {
    const Array coef = per_cell(p, [&](Index b, Index i, Index j) {
      return act[b](i, j) && face_kind(act[b], i, j, f, edges) == FaceKind::conduct
                 ? kdx2[b * p.plane() + i * p.cols + j]
                 : 0.0;
    });
    if (coef.isZero(0.0)) continue;
    r = add(r, mul(shift2d(t_pred, face_drow(f), face_dcol(f)),
                   tape.constant(p.shape(), coef)));
  }
  if (!rad.isZero(0.0)) {
    r = sub(r, mul(power4(offset(t_pred, kKelvinOffset)),
                   tape.constant(p.shape(), rad)));
  }
  r = add(r, tape.constant(p.shape(), constant));
  return add(r, flux_term(tape, p, q_over_dx, flux_scale));
}

Tensor pde_residual(const Tensor& t_pred, const ThermalFrame& prev,
                    const Field& flux, const PhysicsSettings& settings) {
  Tensor pred = t_pred;
  if (t_pred.shape().size() == 2) {
    pred = reshape(t_pred, {1, 1, t_pred.dim(0), t_pred.dim(1)});
  }
  PhysicsBatch batch;
  batch.prev.push_back(prev.values);
  batch.prev_active.push_back(prev.active);
  batch.target_active.push_back(prev.active);
  batch.flux.push_back(flux);
  return pde_residual(pred, batch, settings);
}

// ---------------------------------------------------------------------------

std::vector<double> BcResiduals::top_values() const {
  std::vector<double> out;
  const Array& v = top.value();
  for (Index k = 0; k < v.size(); ++k) {
    if (top_faces.data()[k]) out.push_back(v[k]);
  }
  return out;
}

std::vector<double> BcResiduals::lateral_values() const {
  std::vector<double> out;
  const Array& v = lateral.value();
  for (Index k = 0; k < v.size(); ++k) {
    if (lateral_faces.data()[k]) out.push_back(v[k]);
  }
  return out;
}

BcResiduals bc_residuals(const Tensor& t_pred, std::span<const Mask> active,
                         std::span<const Field> flux, const MaterialModel& m,
                         const GridSpec& grid, const Tensor* flux_scale) {
  const Planes p = planes_of(t_pred, active.size());
  if (flux.size() != active.size()) {
    throw ShapeError("bc_residuals: flux and mask counts differ");
  }
  for (std::size_t b = 0; b < active.size(); ++b) {
    if (active[b].rows() != p.rows || active[b].cols() != p.cols ||
        flux[b].rows() != p.rows || flux[b].cols() != p.cols) {
      throw ShapeError("bc_residuals: mask/flux shape does not match prediction " +
                       shape_string(t_pred.shape()));
    }
  }
  Tape& tape = t_pred.tape();
  const double dx = grid.dx;
  const double ta = m.t_amb;
  const double ta4 = quartic(ta + kKelvinOffset);
  const double sig_eps = m.sigma_sb * m.emissivity;

  // Shared nonlinear pieces.
  Tensor k_of_t = offset(scale(t_pred, m.k1), m.k0);
  Tensor rad = offset(power4(offset(t_pred, kKelvinOffset)), -ta4);
  Tensor above_amb = offset(t_pred, -ta);

  BcResiduals out;
  out.top_faces = Mask::Constant(p.batch * p.rows, p.cols, false);
  out.lateral_faces = Mask::Constant(p.batch * 3 * p.rows, p.cols, false);

  auto face_residual = [&](Face f, Index slot) {
    const Index dr = face_drow(f), dc = face_dcol(f);
    Index count = 0;
    const Array exposed = per_cell(p, [&](Index b, Index i, Index j) {
      const bool e = active[b](i, j) &&
                     face_kind(active[b], i, j, f, EdgeCondition::robin) ==
                         FaceKind::exposed;
      if (e) {
        ++count;
        if (f == Face::north) {
          out.top_faces(b * p.rows + i, j) = true;
        } else {
          out.lateral_faces((b * 3 + slot) * p.rows + i, j) = true;
        }
      }
      return e ? 1.0 : 0.0;
    });
    // Inner neighbour sits opposite the exposed face.
    const Array inner_ok = per_cell(p, [&](Index b, Index i, Index j) {
      const Index ii = i - dr, jj = j - dc;
      return ii >= 0 && jj >= 0 && ii < p.rows && jj < p.cols && active[b](ii, jj)
                 ? 1.0
                 : 0.0;
    });
    Tensor inner = add(mul(shift2d(t_pred, -dr, -dc), tape.constant(p.shape(), inner_ok)),
                       mul(t_pred, tape.constant(p.shape(), 1.0 - inner_ok)));
    const double h = f == Face::north ? m.h_top : m.h_conv;
    Tensor r = scale(mul(k_of_t, sub(t_pred, inner)), -1.0 / dx);
    r = sub(r, scale(above_amb, h));
    r = sub(r, scale(rad, sig_eps));
    if (f == Face::north) {
      const Array q = per_cell(p, [&](Index b, Index i, Index j) {
        return flux[b](i, j);
      });
      r = add(r, flux_term(tape, p, q, flux_scale));
    }
    return std::pair{mul(r, tape.constant(p.shape(), exposed)), count};
  };

  auto [top, n_top] = face_residual(Face::north, 0);
  auto [south, n_s] = face_residual(Face::south, 0);
  auto [west, n_w] = face_residual(Face::west, 1);
  auto [east, n_e] = face_residual(Face::east, 2);
  out.top = top;
  out.lateral = concat_channels(concat_channels(south, west), east);
  out.n_top = n_top;
  out.n_lateral = n_s + n_w + n_e;
  return out;
}

Tensor ic_residual(const Tensor& t_pred, const Tensor& t_init) {
  if (t_pred.shape() != t_init.shape()) {
    throw ShapeError("ic_residual: shape mismatch " +
                     shape_string(t_pred.shape()) + " vs " +
                     shape_string(t_init.shape()));
  }
  return sub(t_pred, t_init);
}

// ---------------------------------------------------------------------------

void LossWeights::validate() const {
  if (!(w_p >= 0 && w_i >= 0 && w_b >= 0 && w_d >= 0)) {
    throw ValidationError("loss weights must be non-negative");
  }
  if (w_p == 0 && w_i == 0 && w_b == 0 && w_d == 0) {
    throw ValidationError("loss weights: at least one weight must be > 0");
  }
}

double weighted_total(const LossWeights& w, double l_pde, double l_ic,
                      double l_bc, double l_data) {
  return w.w_p * l_pde + w.w_i * l_ic + w.w_b * l_bc + w.w_d * l_data;
}

CompositeLoss composite_loss(const Tensor& preds, const Tensor& targets,
                             const PhysicsBatch& batch,
                             const PhysicsSettings& settings,
                             const LossWeights& weights,
                             const Tensor* flux_scale) {
  weights.validate();
  if (batch.size() == 0) throw ValidationError("composite_loss: empty batch");
  if (preds.shape() != targets.shape()) {
    throw ShapeError("composite_loss: predictions " +
                     shape_string(preds.shape()) + " vs targets " +
                     shape_string(targets.shape()));
  }
  const Planes p = planes_of(preds, batch.size());
  Tape& tape = preds.tape();

  CompositeLoss out;
  out.pde = mean(square(pde_residual(preds, batch, settings, flux_scale)));

  Index n_ic = 0;
  const Array ic_mask = per_cell(p, [&](Index b, Index i, Index j) {
    const bool m = !batch.target_active[b](i, j);
    n_ic += m;
    return m ? 1.0 : 0.0;
  });
  if (n_ic > 0) {
    Tensor init = tape.constant(p.shape(),
                                Array::Constant(p.size(), settings.material.t_amb));
    Tensor r = mul(ic_residual(preds, init), tape.constant(p.shape(), ic_mask));
    out.ic = scale(sum(square(r)), 1.0 / double(n_ic));
  } else {
    out.ic = tape.scalar_constant(0.0);
  }

  BcResiduals bc = bc_residuals(preds, batch.target_active, batch.flux,
                                settings.material, settings.grid, flux_scale);
  if (bc.n_top + bc.n_lateral > 0) {
    out.bc = scale(add(sum(square(bc.top)), sum(square(bc.lateral))),
                   1.0 / double(bc.n_top + bc.n_lateral));
  } else {
    out.bc = tape.scalar_constant(0.0);
  }

  out.data = mean(square(sub(preds, targets)));

  LossBreakdown& lb = out.breakdown;
  lb.l_pde = out.pde.item();
  lb.l_ic = out.ic.item();
  lb.l_bc = out.bc.item();
  lb.l_data = out.data.item();
  lb.l_total = weighted_total(weights, lb.l_pde, lb.l_ic, lb.l_bc, lb.l_data);

  // Zero-weight terms stay off the differentiable total so that they can
  // never contribute a gradient.
  std::optional<Tensor> total;
  auto accumulate = [&](double w, const Tensor& term) {
    if (w == 0.0) return;
    Tensor t = scale(term, w);
    total = total ? add(*total, t) : t;
  };
  accumulate(weights.w_p, out.pde);
  accumulate(weights.w_i, out.ic);
  accumulate(weights.w_b, out.bc);
  accumulate(weights.w_d, out.data);
  out.total = *total;
  return out;
}

}  // namespace piconv
