//! Multi-block SBP-SAT semi-discretizations of linear advection (with an
//! optional linear source) and of Burgers' equation in skew-symmetric split
//! form, advanced with the three-stage third-order SSP Runge-Kutta method.
//!
//! Blocks are coupled through upwind SATs at their left ends: block `i`
//! receives the right-end value of block `i - 1`, and the first block
//! receives either the inflow data or, for periodic problems, the right-end
//! value of the last block.

use std::fmt;
use std::sync::Arc;

use crate::basis::{make_space, Interval, RealFn, SpaceKind};
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{FsbpError, Result};
use crate::operator::{build_operator, FsbpOperator};
use crate::quadrature::rule_with_nodes;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// `u_t + a u_x = 0`
    Advection,
    /// `u_t + a u_x = c u`
    AdvectionSource,
    /// `u_t + (u²/2)_x = 0`
    Burgers,
}

#[derive(Clone)]
pub enum Boundary {
    Periodic,
    /// Left-boundary data `g(t)`.
    Inflow(RealFn),
}

impl Boundary {
    pub fn inflow(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Boundary::Inflow(Arc::new(g))
    }

    pub fn constant(value: f64) -> Self {
        Boundary::inflow(move |_| value)
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Boundary::Periodic)
    }
}

impl fmt::Debug for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Periodic => write!(f, "Periodic"),
            Boundary::Inflow(_) => write!(f, "Inflow(..)"),
        }
    }
}

/// A model problem together with its SAT parameter.
#[derive(Clone)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub domain: Interval,
    /// `a > 0` for the advection kinds; unused for Burgers.
    pub wave_speed: f64,
    /// `c` in `u_t + a u_x = c u`.
    pub source_coefficient: f64,
    pub boundary: Boundary,
    pub sigma: f64,
    pub initial_condition: RealFn,
    /// `u_0'`, needed by the characteristic-tracing Burgers reference.
    pub initial_derivative: Option<RealFn>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("kind", &self.kind)
            .field("domain", &self.domain)
            .field("wave_speed", &self.wave_speed)
            .field("source_coefficient", &self.source_coefficient)
            .field("boundary", &self.boundary)
            .field("sigma", &self.sigma)
            .finish()
    }
}

impl ProblemSpec {
    pub fn advection(
        domain: Interval,
        wave_speed: f64,
        initial: impl Fn(f64) -> f64 + Send + Sync + 'static,
        boundary: Boundary,
    ) -> Self {
        Self {
            kind: ProblemKind::Advection,
            domain,
            wave_speed,
            source_coefficient: 0.0,
            boundary,
            sigma: 1.0,
            initial_condition: Arc::new(initial),
            initial_derivative: None,
        }
    }

    pub fn advection_source(
        domain: Interval,
        wave_speed: f64,
        source_coefficient: f64,
        initial: impl Fn(f64) -> f64 + Send + Sync + 'static,
        boundary: Boundary,
    ) -> Self {
        Self {
            kind: ProblemKind::AdvectionSource,
            source_coefficient,
            ..Self::advection(domain, wave_speed, initial, boundary)
        }
    }

    pub fn burgers(
        domain: Interval,
        initial: impl Fn(f64) -> f64 + Send + Sync + 'static,
        initial_derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        boundary: Boundary,
    ) -> Self {
        Self {
            kind: ProblemKind::Burgers,
            domain,
            wave_speed: 1.0,
            source_coefficient: 0.0,
            boundary,
            sigma: 2.0,
            initial_condition: Arc::new(initial),
            initial_derivative: Some(Arc::new(initial_derivative)),
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// Periodic advection of `cos 4πx + ½ sin 40πx` on `[0, 1]` with `a = 1`.
    pub fn oscillatory_advection() -> Self {
        use std::f64::consts::PI;
        Self::advection(
            Interval::unit(),
            1.0,
            |x| (4.0 * PI * x).cos() + 0.5 * (40.0 * PI * x).sin(),
            Boundary::Periodic,
        )
    }

    /// `u_t + u_x = 2u` on `(0, π)` with `u_0 = 1`, `g = 1`; the steady
    /// state is `e^{2x}`.
    pub fn exponential_source() -> Self {
        Self::advection_source(
            Interval::new(0.0, std::f64::consts::PI).expect("valid interval"),
            1.0,
            2.0,
            |_| 1.0,
            Boundary::constant(1.0),
        )
    }

    /// Periodic Burgers on `[0, 1]` with
    /// `u_0 = 1 + ½ sin³(4πx) + ¼ cos⁵(4πx)`.
    pub fn burgers_wave() -> Self {
        use std::f64::consts::PI;
        let w = 4.0 * PI;
        Self::burgers(
            Interval::unit(),
            move |x| 1.0 + 0.5 * (w * x).sin().powi(3) + 0.25 * (w * x).cos().powi(5),
            move |x| {
                let (s, c) = (w * x).sin_cos();
                1.5 * w * s * s * c - 1.25 * w * c.powi(4) * s
            },
            Boundary::Periodic,
        )
    }

    pub fn initial(&self, x: f64) -> f64 {
        (self.initial_condition)(x)
    }

    /// Checks the preconditions of the stability analysis over `[0, t_final]`.
    pub fn validate(&self, t_final: f64) -> Result<()> {
        let bad = |msg: String| Err(FsbpError::InvalidArgument(msg));
        if !self.sigma.is_finite() {
            return bad("sigma must be finite".to_string());
        }
        match self.kind {
            ProblemKind::Advection | ProblemKind::AdvectionSource => {
                if !(self.wave_speed > 0.0) {
                    return bad(format!(
                        "wave speed must be positive for left-inflow SATs, got {}",
                        self.wave_speed
                    ));
                }
            }
            ProblemKind::Burgers => {
                let samples = self.domain.equidistant(1001);
                if let Some(x) = samples.iter().find(|&&x| !(self.initial(x) >= 0.0)) {
                    return bad(format!(
                        "Burgers requires nonnegative initial data; u0({x}) = {}",
                        self.initial(*x)
                    ));
                }
                if let Boundary::Inflow(g) = &self.boundary {
                    let times = Interval::new(0.0, t_final.max(f64::MIN_POSITIVE))?.equidistant(101);
                    if let Some(t) = times.iter().find(|&&t| !(g(t) >= 0.0)) {
                        return bad(format!(
                            "Burgers requires nonnegative inflow data; g({t}) = {}",
                            g(*t)
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Operators of a uniform multi-block partition.
#[derive(Debug, Clone)]
pub struct BlockGrid {
    operators: Vec<FsbpOperator>,
    nodes_per_block: usize,
}

impl BlockGrid {
    /// Builds one reference operator on `[0, Δx]` and translates it onto each
    /// of the `blocks` uniform sub-intervals of `domain`.
    ///
    /// RBF centers are read on the unit interval and mapped to the block, so
    /// `rbf-cubic:centers=0,0.5,1` means "both ends and the midpoint".
    pub fn uniform(kind: &SpaceKind, nodes_per_block: usize, blocks: usize, domain: Interval) -> Result<Self> {
        if blocks == 0 {
            return Err(FsbpError::InvalidArgument("need at least one block".to_string()));
        }
        let parts = domain.split(blocks);
        let reference = Interval::new(0.0, parts[0].length())?;
        let kind = kind.mapped(&Interval::unit(), &reference);
        let space = make_space(kind, reference)?;
        let rule = rule_with_nodes(&space, nodes_per_block)?;
        let op = build_operator(&space, &rule)?;
        Ok(Self::from_reference(&op, domain, blocks))
    }

    /// Maps `reference` affinely onto each of `blocks` uniform sub-intervals.
    pub fn from_reference(reference: &FsbpOperator, domain: Interval, blocks: usize) -> Self {
        let operators = domain
            .split(blocks.max(1))
            .into_iter()
            .map(|b| reference.map_to(b))
            .collect();
        Self {
            operators,
            nodes_per_block: reference.len(),
        }
    }

    pub fn operators(&self) -> &[FsbpOperator] {
        &self.operators
    }

    pub fn blocks(&self) -> usize {
        self.operators.len()
    }

    pub fn nodes_per_block(&self) -> usize {
        self.nodes_per_block
    }

    pub fn total_nodes(&self) -> usize {
        self.blocks() * self.nodes_per_block
    }

    /// All nodes, block by block (interface nodes appear twice).
    pub fn nodes(&self) -> Vec<f64> {
        self.operators
            .iter()
            .flat_map(|op| op.nodes().iter().copied())
            .collect()
    }

    /// All norm weights in the same order as [`BlockGrid::nodes`].
    pub fn weights(&self) -> Vec<f64> {
        self.operators
            .iter()
            .flat_map(|op| op.weights().iter().copied())
            .collect()
    }

    pub fn min_spacing(&self) -> f64 {
        self.operators
            .iter()
            .flat_map(|op| op.nodes().windows(2).map(|w| w[1] - w[0]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes().into_iter().map(f).collect()
    }
}

/// Nodal solution on a [`BlockGrid`] at time `t`, stored block-major.
#[derive(Debug, Clone)]
pub struct BlockState {
    pub grid: BlockGrid,
    pub values: Vec<f64>,
    pub t: f64,
}

impl BlockState {
    pub fn block(&self, i: usize) -> &[f64] {
        let n = self.grid.nodes_per_block;
        &self.values[i * n..(i + 1) * n]
    }
}

/// Value fed to the left SAT of block `i`.
fn left_data(grid: &BlockGrid, u: &[f64], i: usize, t: f64, spec: &ProblemSpec) -> f64 {
    let n = grid.nodes_per_block;
    if i > 0 {
        u[i * n - 1]
    } else {
        match &spec.boundary {
            Boundary::Periodic => u[u.len() - 1],
            Boundary::Inflow(g) => g(t),
        }
    }
}

/// `-a D u + P⁻¹ S (+ c u)` per block, with `S_1 = -σ a (u_1 - g_L)`.
pub fn rhs_advection(grid: &BlockGrid, u: &[f64], t: f64, spec: &ProblemSpec) -> Vec<f64> {
    let n = grid.nodes_per_block;
    let a = spec.wave_speed;
    let c = match spec.kind {
        ProblemKind::AdvectionSource => spec.source_coefficient,
        _ => 0.0,
    };
    let mut out = vec![0.0; u.len()];
    for (i, op) in grid.operators.iter().enumerate() {
        let ui = &u[i * n..(i + 1) * n];
        let oi = &mut out[i * n..(i + 1) * n];
        op.apply_into(ui, oi);
        for (o, &v) in oi.iter_mut().zip(ui) {
            *o = -a * *o + c * v;
        }
        let g = left_data(grid, u, i, t, spec);
        oi[0] += -spec.sigma * a * (ui[0] - g) / op.weights()[0];
    }
    out
}

/// `-(D U u + U D u)/3 + P⁻¹ S` per block, with `S_1 = -(σ/3) u_1 (u_1 - g_L)`.
pub fn rhs_burgers(grid: &BlockGrid, u: &[f64], t: f64, spec: &ProblemSpec) -> Vec<f64> {
    let n = grid.nodes_per_block;
    let mut out = vec![0.0; u.len()];
    let mut squared = vec![0.0; n];
    let mut d_sq = vec![0.0; n];
    for (i, op) in grid.operators.iter().enumerate() {
        let ui = &u[i * n..(i + 1) * n];
        let oi = &mut out[i * n..(i + 1) * n];
        for (s, &v) in squared.iter_mut().zip(ui) {
            *s = v * v;
        }
        op.apply_into(&squared, &mut d_sq);
        op.apply_into(ui, oi);
        for j in 0..n {
            oi[j] = -(d_sq[j] + ui[j] * oi[j]) / 3.0;
        }
        let g = left_data(grid, u, i, t, spec);
        oi[0] += -(spec.sigma / 3.0) * ui[0] * (ui[0] - g) / op.weights()[0];
    }
    out
}

/// Dispatches on the problem kind.
pub fn rhs(grid: &BlockGrid, u: &[f64], t: f64, spec: &ProblemSpec) -> Vec<f64> {
    match spec.kind {
        ProblemKind::Burgers => rhs_burgers(grid, u, t, spec),
        _ => rhs_advection(grid, u, t, spec),
    }
}

/// One step of the Shu-Osher SSPRK(3,3) scheme for `u' = L(t, u)`.
pub fn ssprk33_step<F>(mut rhs_fn: F, u: &[f64], t: f64, dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    if !(dt > 0.0) {
        return Err(FsbpError::InvalidArgument(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let check = |v: &[f64], stage_t: f64| {
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(FsbpError::Instability { t: stage_t })
        }
    };

    let k = rhs_fn(t, u);
    let u1: Vec<f64> = u.iter().zip(&k).map(|(v, k)| v + dt * k).collect();
    check(&u1, t + dt)?;

    let k = rhs_fn(t + dt, &u1);
    let u2: Vec<f64> = u
        .iter()
        .zip(&u1)
        .zip(&k)
        .map(|((v, v1), k)| 0.75 * v + 0.25 * (v1 + dt * k))
        .collect();
    check(&u2, t + 0.5 * dt)?;

    let k = rhs_fn(t + 0.5 * dt, &u2);
    let next: Vec<f64> = u
        .iter()
        .zip(&u2)
        .zip(&k)
        .map(|((v, v2), k)| v / 3.0 + 2.0 / 3.0 * (v2 + dt * k))
        .collect();
    check(&next, t + dt)?;
    Ok(next)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: BlockState,
    /// Mass and energy at `t = 0` and after every accepted step.
    pub history: Vec<DiagnosticsRecord>,
    pub steps: usize,
}

/// Integrates `spec` from `t = 0` to `t_final` on `blocks` uniform blocks of
/// the given space with `nodes_per_block` nodes each.
///
/// The step is `cfl · h_min / λ`, with `λ = a` for advection and
/// `λ = max(1, max|u|)` re-evaluated every step for Burgers. The last step
/// is shortened to land on `t_final`.
pub fn run(
    spec: &ProblemSpec,
    kind: &SpaceKind,
    nodes_per_block: usize,
    blocks: usize,
    t_final: f64,
    cfl: f64,
) -> Result<RunOutput> {
    let grid = BlockGrid::uniform(kind, nodes_per_block, blocks, spec.domain)?;
    run_on_grid(spec, grid, t_final, cfl)
}

/// As [`run`] with a prebuilt grid.
pub fn run_on_grid(spec: &ProblemSpec, grid: BlockGrid, t_final: f64, cfl: f64) -> Result<RunOutput> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(FsbpError::InvalidArgument(format!(
            "final time must be finite and nonnegative, got {t_final}"
        )));
    }
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(FsbpError::InvalidArgument(format!(
            "cfl must lie in (0, 1], got {cfl}"
        )));
    }
    spec.validate(t_final)?;

    let h_min = grid.min_spacing();
    let values = grid.sample(|x| spec.initial(x));
    let mut state = BlockState {
        grid,
        values,
        t: 0.0,
    };
    let mut history = vec![diagnostics::record(&state)];
    let mut steps = 0;
    while state.t < t_final {
        let speed = match spec.kind {
            ProblemKind::Burgers => state.values.iter().fold(1.0_f64, |m, v| m.max(v.abs())),
            _ => spec.wave_speed,
        };
        let mut dt = cfl * h_min / speed;
        let remaining = t_final - state.t;
        let last = dt >= remaining * (1.0 - 1e-12);
        if last {
            dt = remaining;
        }
        let grid = &state.grid;
        state.values = ssprk33_step(|t, u| rhs(grid, u, t, spec), &state.values, state.t, dt)?;
        state.t = if last { t_final } else { state.t + dt };
        steps += 1;
        history.push(diagnostics::record(&state));
    }
    Ok(RunOutput {
        state,
        history,
        steps,
    })
}
