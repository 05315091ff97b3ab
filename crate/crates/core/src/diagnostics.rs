//! Discrete mass and energy, reference solutions and error norms.

use crate::basis::{Interval, SpaceKind};
use crate::error::{FsbpError, Result};
use crate::solver::{run, BlockState, Boundary, ProblemKind, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
}

/// `Σ_blocks 1ᵀ P u`
pub fn mass(state: &BlockState) -> f64 {
    weighted_sum(state, |v| v)
}

/// `Σ_blocks uᵀ P u`
pub fn energy(state: &BlockState) -> f64 {
    weighted_sum(state, |v| v * v)
}

fn weighted_sum(state: &BlockState, f: impl Fn(f64) -> f64) -> f64 {
    state
        .grid
        .weights()
        .iter()
        .zip(&state.values)
        .map(|(p, &v)| p * f(v))
        .sum()
}

pub fn record(state: &BlockState) -> DiagnosticsRecord {
    DiagnosticsRecord {
        t: state.t,
        mass: mass(state),
        energy: energy(state),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// `sqrt(Σ eᵀ P e)`
    pub err_p: f64,
    /// `‖e‖₂ / sqrt(N_total)`
    pub err_2: f64,
    pub err_max: f64,
}

/// Nodal errors against reference values given in node order.
pub fn error_report(state: &BlockState, reference: &[f64]) -> Result<ErrorReport> {
    if reference.len() != state.values.len() {
        return Err(FsbpError::LengthMismatch {
            expected: state.values.len(),
            got: reference.len(),
        });
    }
    let weights = state.grid.weights();
    let (mut weighted, mut squared, mut max) = (0.0, 0.0, 0.0_f64);
    for ((p, u), r) in weights.iter().zip(&state.values).zip(reference) {
        let e = u - r;
        weighted += p * e * e;
        squared += e * e;
        max = max.max(e.abs());
    }
    Ok(ErrorReport {
        err_p: weighted.sqrt(),
        err_2: (squared / reference.len() as f64).sqrt(),
        err_max: max,
    })
}

/// [`reference_solution`] at every node of `state` at time `state.t`.
pub fn reference_values(spec: &ProblemSpec, state: &BlockState) -> Result<Vec<f64>> {
    state
        .grid
        .nodes()
        .iter()
        .map(|&x| reference_solution(spec, x, state.t))
        .collect()
}

/// `u_0(x - a t)`, wrapped into `domain` when periodic and otherwise
/// evaluated on the extension of `u_0` to the whole line.
pub fn exact_advection(
    u0: impl Fn(f64) -> f64,
    wave_speed: f64,
    x: f64,
    t: f64,
    domain: Interval,
    periodic: bool,
) -> f64 {
    let mut xi = x - wave_speed * t;
    if periodic {
        xi = domain.left() + (xi - domain.left()).rem_euclid(domain.length());
    }
    u0(xi)
}

/// Entropy solution of Burgers' equation by tracing the characteristic
/// through `(x, t)`: `u_0(ξ)` with `ξ` from [`characteristic_foot`].
pub fn burgers_reference(
    u0: impl Fn(f64) -> f64,
    du0: impl Fn(f64) -> f64,
    x: f64,
    t: f64,
) -> Result<f64> {
    let xi = characteristic_foot(&u0, du0, x, t)?;
    Ok(u0(xi))
}

/// Solves `ξ + t u_0(ξ) = x` by Newton's method safeguarded with bisection.
///
/// Fails once characteristics have crossed at the foot point.
pub fn characteristic_foot(
    u0: impl Fn(f64) -> f64,
    du0: impl Fn(f64) -> f64,
    x: f64,
    t: f64,
) -> Result<f64> {
    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 200;
    let fail = |reason: &str| FsbpError::Characteristic {
        x,
        t,
        reason: reason.to_string(),
    };
    if t == 0.0 {
        return Ok(x);
    }
    let h = |xi: f64| xi + t * u0(xi) - x;

    // Bracket the root of the increasing map h by expanding outwards.
    let start = x - t * u0(x);
    let mut width = t.abs() * (1.0 + u0(x).abs()) + TOL;
    let (mut lo, mut hi) = (start - width, start + width);
    let mut grow = 0;
    while !(h(lo) <= 0.0 && h(hi) >= 0.0) {
        width *= 2.0;
        lo = start - width;
        hi = start + width;
        grow += 1;
        if grow > 60 || !lo.is_finite() {
            return Err(fail("no sign change while bracketing the foot point"));
        }
    }

    let mut xi = start.clamp(lo, hi);
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let value = h(xi);
        if value.abs() <= TOL {
            converged = true;
            break;
        }
        if value > 0.0 {
            hi = xi;
        } else {
            lo = xi;
        }
        let slope = 1.0 + t * du0(xi);
        let newton = xi - value / slope;
        xi = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= TOL * (1.0 + xi.abs()) {
            converged = h(xi).abs() <= 1e3 * TOL;
            break;
        }
    }
    if !converged {
        return Err(fail("foot-point iteration did not converge"));
    }
    if !(1.0 + t * du0(xi) > 0.0) {
        return Err(fail("characteristics have crossed; a shock has formed"));
    }
    Ok(xi)
}

/// Reference solution for any of the model problems.
///
/// Linear problems use the characteristic solution with data entering from
/// the left boundary where needed. The Burgers reference extends `u_0` to the
/// left of an inflow boundary by the constant `g(0)`.
pub fn reference_solution(spec: &ProblemSpec, x: f64, t: f64) -> Result<f64> {
    let dom = spec.domain;
    match spec.kind {
        ProblemKind::Advection | ProblemKind::AdvectionSource => {
            let a = spec.wave_speed;
            let c = match spec.kind {
                ProblemKind::AdvectionSource => spec.source_coefficient,
                _ => 0.0,
            };
            match &spec.boundary {
                Boundary::Periodic => Ok(exact_advection(&*spec.initial_condition, a, x, t, dom, true)
                    * (c * t).exp()),
                Boundary::Inflow(g) => {
                    let foot = x - a * t;
                    if foot >= dom.left() {
                        Ok(spec.initial(foot) * (c * t).exp())
                    } else {
                        let travel = (x - dom.left()) / a;
                        Ok(g(t - travel) * (c * travel).exp())
                    }
                }
            }
        }
        ProblemKind::Burgers => {
            let du0 = spec.initial_derivative.clone().ok_or_else(|| {
                FsbpError::InvalidArgument("Burgers reference needs u0'".to_string())
            })?;
            match &spec.boundary {
                Boundary::Periodic => burgers_reference(&*spec.initial_condition, &*du0, x, t),
                Boundary::Inflow(g) => {
                    let left = g(0.0);
                    burgers_reference(
                        |xi| if xi >= dom.left() { spec.initial(xi) } else { left },
                        |xi| if xi >= dom.left() { du0(xi) } else { 0.0 },
                        x,
                        t,
                    )
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub space: String,
    pub blocks: usize,
    pub errors: ErrorReport,
    /// Observed order in the `P`-norm relative to the previous row.
    pub order: Option<f64>,
}

/// Runs `spec` to `t_final` for each block count and tabulates errors
/// against [`reference_solution`].
pub fn convergence_table(
    spec: &ProblemSpec,
    kind: &SpaceKind,
    nodes_per_block: usize,
    block_counts: &[usize],
    t_final: f64,
    cfl: f64,
) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(block_counts.len());
    for &blocks in block_counts {
        let out = run(spec, kind, nodes_per_block, blocks, t_final, cfl)?;
        let reference = reference_values(spec, &out.state)?;
        let errors = error_report(&out.state, &reference)?;
        let order = rows.last().map(|prev| {
            (prev.errors.err_p / errors.err_p).ln() / (blocks as f64 / prev.blocks as f64).ln()
        });
        rows.push(ConvergenceRow {
            space: kind.to_string(),
            blocks,
            errors,
            order,
        });
    }
    Ok(rows)
}
