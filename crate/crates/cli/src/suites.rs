//! Randomized adjoint and finite-difference suites.

use std::fmt;
use std::str::FromStr;

use dagrid::circular::circular_backward;
use dagrid::gradcheck::{
    check, check_masked, finite_difference, finite_difference_masked, DEFAULT_STEP,
};
use dagrid::polar::parametric_slice_backward;
use dagrid::{
    accumulate, accumulate_backward_grid, accumulate_backward_input, circular_accumulate,
    compensated_dot, grid_sample, parametric_slice, slice, slice_backward, CircularConfig,
    GradReport, GradientField, GridSet, KernelKind, ParametricSlicer, Plane, PolarConfig, Result,
    SamplingGrid, TargetShape, Tensor, DEFAULT_EPSILON,
};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::random;

/// Distance kept between bilinear kinks and probed coordinates.
pub const KINK_MARGIN: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct AdjointReport {
    pub trials: usize,
    pub max_rel_err: f64,
    pub worst_trial: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// `⟨D(U), V⟩ = ⟨U, S(V)⟩` on random instances cycling through both kernels
/// and `N ∈ {1, 2, 5}`, with source and target sides up to `max_side`.
pub fn adjoint_suite(
    trials: usize,
    seed: u64,
    max_side: usize,
    tolerance: f64,
) -> Result<AdjointReport> {
    let mut rng = random::rng(seed);
    let kinds = [KernelKind::Nearest, KernelKind::Bilinear];
    let counts = [1, 2, 5];
    let (mut max_rel, mut worst) = (0.0f64, 0usize);
    for t in 0..trials {
        let kind = kinds[t % 2];
        let n = counts[(t / 2) % 3];
        let side = |rng: &mut ChaCha20Rng| rng.random_range(1..=max_side.max(1));
        let (h, w, th, tw) = (
            side(&mut rng),
            side(&mut rng),
            side(&mut rng),
            side(&mut rng),
        );
        let c = rng.random_range(1..=3);
        let grids = random::grids(&mut rng, n, h, w, th, tw)?;
        let u = random::tensor(&mut rng, c, h, w);
        let v = random::tensor(&mut rng, c, th, tw);
        let lhs = compensated_dot(
            &accumulate(&u, &grids, kind, TargetShape::new(th, tw)?)?,
            &v,
        )?;
        let rhs = compensated_dot(&u, &slice(&v, &grids, kind, (h, w))?)?;
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        if rel > max_rel {
            max_rel = rel;
            worst = t;
        }
    }
    Ok(AdjointReport {
        trials,
        max_rel_err: max_rel,
        worst_trial: worst,
        tolerance,
        passed: max_rel < tolerance,
    })
}

/// Operator whose analytic backward pass is checked against central differences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradOp {
    Accumulate,
    AccumulateGrid,
    Slice,
    GridSample,
    ParametricP,
    ParametricL,
    Circular,
}

impl GradOp {
    pub const ALL: [GradOp; 7] = [
        GradOp::Accumulate,
        GradOp::AccumulateGrid,
        GradOp::Slice,
        GradOp::GridSample,
        GradOp::ParametricP,
        GradOp::ParametricL,
        GradOp::Circular,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradOp::Accumulate => "accumulate",
            GradOp::AccumulateGrid => "accumulate-grid",
            GradOp::Slice => "slice",
            GradOp::GridSample => "grid-sample",
            GradOp::ParametricP => "parametric-p",
            GradOp::ParametricL => "parametric-l",
            GradOp::Circular => "circular",
        }
    }

    /// Whether the op takes the kernel setting into account.
    pub fn uses_kernel(self) -> bool {
        !matches!(self, GradOp::ParametricP | GradOp::ParametricL)
    }
}

impl fmt::Display for GradOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GradOp {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        GradOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = GradOp::ALL.iter().map(|op| op.name()).collect();
                format!("unknown op '{s}', expected one of {}", names.join(", "))
            })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckSummary {
    pub op: String,
    pub kernel: String,
    pub trials: usize,
    pub step: f64,
    pub tolerance: f64,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub failed_trials: usize,
    pub passed: bool,
}

/// Runs `trials` random finite-difference checks of `op`.
pub fn gradcheck_suite(
    op: GradOp,
    kind: KernelKind,
    trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<GradcheckSummary> {
    if op == GradOp::AccumulateGrid && kind != KernelKind::Bilinear {
        return Err(dagrid::Error::UnsupportedKernel(kind.name()));
    }
    let mut rng = random::rng(seed);
    let (mut max_rel, mut max_abs, mut failed) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..trials {
        let report = trial(op, kind, &mut rng, tolerance)?;
        max_rel = max_rel.max(report.max_rel_err);
        max_abs = max_abs.max(report.max_abs_err);
        failed += usize::from(!report.passed);
    }
    Ok(GradcheckSummary {
        op: op.name().to_string(),
        kernel: if op.uses_kernel() {
            kind.name()
        } else {
            "parametric"
        }
        .to_string(),
        trials,
        step: DEFAULT_STEP,
        tolerance,
        max_rel_err: max_rel,
        max_abs_err: max_abs,
        failed_trials: failed,
        passed: failed == 0,
    })
}

fn dims(rng: &mut ChaCha20Rng) -> (usize, usize, usize) {
    (
        rng.random_range(1..=2),
        rng.random_range(2..=8),
        rng.random_range(2..=8),
    )
}

fn stack_coords(grids: &GridSet) -> Tensor {
    let planes: Vec<Plane> = grids
        .iter()
        .flat_map(|g| [g.gx().clone(), g.gy().clone()])
        .collect();
    Tensor::stack(&planes).expect("grids share one shape")
}

fn unstack_coords(x: &Tensor) -> GridSet {
    let grids = (0..x.channels() / 2)
        .map(|k| SamplingGrid::new(x.plane(2 * k), x.plane(2 * k + 1)).expect("finite probe"))
        .collect();
    GridSet::new(grids).expect("at least one grid")
}

fn trial(op: GradOp, kind: KernelKind, rng: &mut ChaCha20Rng, tol: f64) -> Result<GradReport> {
    let (c, h, w) = dims(rng);
    let (th, tw) = (rng.random_range(2..=8), rng.random_range(2..=8));
    let n = rng.random_range(1..=3);
    let name = op.name();
    match op {
        GradOp::Accumulate => {
            let grids = random::grids(rng, n, h, w, th, tw)?;
            let r = random::tensor(rng, c, th, tw);
            let shape = TargetShape::new(th, tw)?;
            let analytic = accumulate_backward_input(&r, &grids, kind, (h, w))?;
            let loss = |x: &Tensor| {
                compensated_dot(&accumulate(x, &grids, kind, shape).unwrap(), &r).unwrap()
            };
            let numeric = finite_difference(loss, &random::tensor(rng, c, h, w), DEFAULT_STEP)?;
            check(name, &analytic, &numeric, tol)
        }
        GradOp::AccumulateGrid => {
            let grids = GridSet::new(
                (0..n)
                    .map(|_| random::kink_free_grid(rng, h, w, th, tw, KINK_MARGIN))
                    .collect::<Result<_>>()?,
            )?;
            let u = random::tensor(rng, c, h, w);
            let r = random::tensor(rng, c, th, tw);
            let shape = TargetShape::new(th, tw)?;
            let grads = accumulate_backward_grid(&r, &u, &grids, kind)?;
            let planes: Vec<Plane> = grads.into_iter().flat_map(|g| [g.gx, g.gy]).collect();
            let analytic = Tensor::stack(&planes)?;
            let loss = |x: &Tensor| {
                compensated_dot(
                    &accumulate(&u, &unstack_coords(x), kind, shape).unwrap(),
                    &r,
                )
                .unwrap()
            };
            let numeric = finite_difference(loss, &stack_coords(&grids), DEFAULT_STEP)?;
            check(name, &analytic, &numeric, tol)
        }
        GradOp::Slice => {
            let grids = random::grids(rng, n, h, w, th, tw)?;
            let r = random::tensor(rng, c, h, w);
            let analytic = slice_backward(&r, &grids, kind, TargetShape::new(th, tw)?)?;
            let loss =
                |x: &Tensor| compensated_dot(&slice(x, &grids, kind, (h, w)).unwrap(), &r).unwrap();
            let numeric = finite_difference(loss, &random::tensor(rng, c, th, tw), DEFAULT_STEP)?;
            check(name, &analytic, &numeric, tol)
        }
        GradOp::GridSample => {
            // output (th, tw) reads a source of (h, w)
            let grid = random::grid(rng, th, tw, h, w)?;
            let r = random::tensor(rng, c, th, tw);
            let analytic = accumulate(
                &r,
                &GridSet::single(grid.clone()),
                kind,
                TargetShape::new(h, w)?,
            )?;
            let loss = |x: &Tensor| compensated_dot(&grid_sample(x, &grid, kind), &r).unwrap();
            let numeric = finite_difference(loss, &random::tensor(rng, c, h, w), DEFAULT_STEP)?;
            check(name, &analytic, &numeric, tol)
        }
        GradOp::ParametricP | GradOp::ParametricL => {
            let (h_r, w_psi) = (rng.random_range(2..=6), rng.random_range(3..=8));
            let mut cfg = PolarConfig::for_image(h, w, h_r, w_psi)?;
            cfg.angular_wrap = rng.random_bool(0.5);
            let p = random::tensor(rng, c, h_r, w_psi);
            let l = random::tensor(rng, 4, h, w);
            let r = random::tensor(rng, c, h, w);
            let slicer = ParametricSlicer::new(l.clone())?;
            let grads = parametric_slice_backward(&r, &p, &slicer, &cfg)?;
            if op == GradOp::ParametricP {
                let loss = |x: &Tensor| {
                    compensated_dot(&parametric_slice(x, &slicer, &cfg).unwrap(), &r).unwrap()
                };
                let numeric = finite_difference(loss, &p, DEFAULT_STEP)?;
                check(name, &grads.d_p, &numeric, tol)
            } else {
                let loss = |x: &Tensor| {
                    let s = ParametricSlicer::new(x.clone()).unwrap();
                    compensated_dot(&parametric_slice(&p, &s, &cfg).unwrap(), &r).unwrap()
                };
                let numeric = finite_difference(loss, &l, DEFAULT_STEP)?;
                check(name, &grads.d_l, &numeric, tol)
            }
        }
        GradOp::Circular => {
            let (ux, uy) = random::kink_free_gradients(rng, h, w, 3, KINK_MARGIN);
            let field = GradientField::from_components(ux, uy, DEFAULT_EPSILON)?;
            let cfg = CircularConfig::from_radii(&[3, 1])?
                .symmetric(rng.random_bool(0.5))
                .kernel(kind);
            let u = random::tensor(rng, 1, h, w);
            let r = random::tensor(rng, 1, h, w);
            let grads = circular_backward(&r, &Tensor::zeros(1, h, w), &u, &field, &cfg)?;
            let s = field.magnitude.clone().into_tensor();
            // ε-dominated cells are excluded from the comparison
            let keep = |idx: usize| s.as_slice()[idx] >= 10.0 * DEFAULT_EPSILON;
            let loss = |x: &Tensor| {
                let mut f = field.clone();
                f.magnitude = x.plane(0);
                compensated_dot(&circular_accumulate(&u, &f, &cfg).unwrap().v_s, &r).unwrap()
            };
            let numeric = finite_difference_masked(loss, &s, DEFAULT_STEP, keep)?;
            check_masked(name, &grads.d_magnitude.into_tensor(), &numeric, tol, keep)
        }
    }
}
