//! Discretized radial exterior domain `[1, r_max]`, conformally flat metrics
//! on it, region pairs `(Ω, Σ)` and zero-set extraction.
//!
//! The manifold is the exterior of the unit ball with a single end. Radial
//! symmetry reduces everything to the interval `[1, r_max]` with the
//! `r^{n-1}` volume weight; the boundary is the single point `r = 1` carrying
//! the area of the unit `(n-1)`-sphere.
//!
//! Conventions (fixed once, used by every module):
//! * the mean curvature `H` is the normalized trace of the boundary shape
//!   operator with respect to the inner normal `+∂_r`; the flat exterior has
//!   `H = +1` in every dimension;
//! * discrete boundary operators use the outward normal `ν_out = -∂_r`, the
//!   direction produced by the divergence theorem on the exterior domain.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Asymptotic-decay tolerance: a conformal factor must satisfy
/// `|φ(r_max) - 1| <= DECAY_TOL` to count as asymptotically Euclidean.
pub const DECAY_TOL: f64 = 0.1;

/// Dimension-derived constants used throughout the energy and solver stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionConstants {
    /// Spatial dimension, `n >= 3`.
    pub n: usize,
    /// Conformal exponent `q̄ = n/(n-2)`.
    pub q_bar: f64,
    /// Critical interior exponent `2q̄ = 2n/(n-2)`.
    pub crit_interior: f64,
    /// Critical boundary exponent `q̄ + 1`.
    pub crit_boundary: f64,
    /// Critical weight index `δ* = (2-n)/2`.
    pub delta_star: f64,
    /// Interior curvature coefficient `(n-2)/(4(n-1))`.
    pub scalar_coeff: f64,
    /// Boundary curvature coefficient `(n-2)/2`.
    pub mean_coeff: f64,
}

impl DimensionConstants {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!(
                "dimension n = {n} must be >= 3"
            )));
        }
        let nf = n as f64;
        Ok(Self {
            n,
            q_bar: nf / (nf - 2.0),
            crit_interior: 2.0 * nf / (nf - 2.0),
            crit_boundary: nf / (nf - 2.0) + 1.0,
            delta_star: (2.0 - nf) / 2.0,
            scalar_coeff: (nf - 2.0) / (4.0 * (nf - 1.0)),
            mean_coeff: (nf - 2.0) / 2.0,
        })
    }
}

/// Node spacing of a radial grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    /// Geometric nodes `r_i = r_max^{i/N}`; resolves both the boundary layer
    /// and the far-field decay region.
    Log,
    Uniform,
}

/// Discretized exterior domain `[1, r_max]` with `r^{n-1}`-weighted
/// quadrature.
///
/// Quadrature weights come from exact moments of the linear interpolant per
/// cell, so constants integrate exactly and smooth integrands are second
/// order accurate.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub dims: DimensionConstants,
    /// Strictly increasing nodes, `nodes[0] = 1`, `nodes[N] = r_max`.
    pub nodes: Vec<f64>,
    /// Node weights for `∫_1^{r_max} f(r) r^{n-1} dr ≈ Σ w_i f(r_i)`.
    pub quad_weights: Vec<f64>,
    /// Area of the unit `(n-1)`-sphere.
    pub sphere_area: f64,
    /// Weight-function samples `ρ(r_i) = r_i`.
    pub rho: Vec<f64>,
    /// Per-cell moment weight attached to the left endpoint.
    pub(crate) cell_lo: Vec<f64>,
    /// Per-cell moment weight attached to the right endpoint.
    pub(crate) cell_hi: Vec<f64>,
}

/// `(b^m - a^m) / (m (b - a))` evaluated as a power sum, avoiding the
/// cancellation of the naive difference for nearby endpoints.
fn mean_power(a: f64, b: f64, m: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..m {
        s += a.powi(j as i32) * b.powi((m - 1 - j) as i32);
    }
    s / m as f64
}

fn unit_sphere_area(n: usize) -> f64 {
    // ω_{n-1} = 2 π^{n/2} / Γ(n/2), building the gamma value by recursion
    // from Γ(1) or Γ(1/2).
    let half_n = n as f64 / 2.0;
    let (mut gamma, mut x) = if n.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (PI.sqrt(), 0.5)
    };
    while x < half_n - 0.25 {
        gamma *= x;
        x += 1.0;
    }
    2.0 * PI.powf(half_n) / gamma
}

impl RadialGrid {
    fn from_nodes(dims: DimensionConstants, nodes: Vec<f64>) -> Result<Self> {
        let n_nodes = nodes.len();
        if n_nodes < 2 {
            return Err(Error::InvalidGrid("need at least two nodes".into()));
        }
        if nodes[0] != 1.0 {
            return Err(Error::InvalidGrid("first node must be r = 1".into()));
        }
        for i in 1..n_nodes {
            if nodes[i] <= nodes[i - 1] {
                return Err(Error::InvalidGrid(
                    "nodes must be strictly increasing".into(),
                ));
            }
        }
        let n = dims.n;
        let mut cell_lo = vec![0.0; n_nodes - 1];
        let mut cell_hi = vec![0.0; n_nodes - 1];
        let mut quad_weights = vec![0.0; n_nodes];
        for i in 0..n_nodes - 1 {
            let (a, b) = (nodes[i], nodes[i + 1]);
            // Exact moments of r^{n-1} against the linear hat functions.
            let m0 = mean_power(a, b, n); // (b^n - a^n)/(n (b-a))
            let m1 = mean_power(a, b, n + 1); // (b^{n+1} - a^{n+1})/((n+1)(b-a))
            let hi = m1 - a * m0;
            let lo = b * m0 - m1;
            cell_lo[i] = lo;
            cell_hi[i] = hi;
            quad_weights[i] += lo;
            quad_weights[i + 1] += hi;
        }
        if quad_weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidGrid("non-positive quadrature weight".into()));
        }
        let rho = nodes.clone();
        Ok(Self {
            dims,
            nodes,
            quad_weights,
            sphere_area: unit_sphere_area(n),
            rho,
            cell_lo,
            cell_hi,
        })
    }

    /// Number of nodes (`N + 1` for `N` cells).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Largest logarithmic step `max_i ln(r_{i+1}/r_i)`; the `h` in the
    /// `10 h^2` tolerances quoted by the second-order contracts.
    pub fn max_log_step(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| (w[1] / w[0]).ln())
            .fold(0.0, f64::max)
    }

    /// Quadrature of nodal samples against `r^{n-1} dr` (no sphere factor).
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        assert_eq!(samples.len(), self.len());
        self.quad_weights
            .iter()
            .zip(samples)
            .map(|(w, f)| w * f)
            .sum()
    }
}

/// Builds a grid from explicit nodes (e.g. a deserialized metric document).
pub fn grid_from_nodes(n: usize, nodes: Vec<f64>) -> Result<Arc<RadialGrid>> {
    let dims = DimensionConstants::new(n)?;
    Ok(Arc::new(RadialGrid::from_nodes(dims, nodes)?))
}

/// Builds a radial grid with `n_cells` cells between 1 and `r_max`.
pub fn build_grid(
    n: usize,
    r_max: f64,
    n_cells: usize,
    spacing: Spacing,
) -> Result<Arc<RadialGrid>> {
    let dims = DimensionConstants::new(n)?;
    if !(r_max > 1.0) {
        return Err(Error::InvalidGrid(format!("r_max = {r_max} must exceed 1")));
    }
    if n_cells < 16 {
        return Err(Error::InvalidGrid(format!(
            "n_cells = {n_cells} must be >= 16"
        )));
    }
    let nodes: Vec<f64> = match spacing {
        Spacing::Log => (0..=n_cells)
            .map(|i| r_max.powf(i as f64 / n_cells as f64))
            .collect(),
        Spacing::Uniform => (0..=n_cells)
            .map(|i| 1.0 + (r_max - 1.0) * i as f64 / n_cells as f64)
            .collect(),
    };
    let mut nodes = nodes;
    nodes[0] = 1.0;
    let last = nodes.len() - 1;
    nodes[last] = r_max;
    Ok(Arc::new(RadialGrid::from_nodes(dims, nodes)?))
}

/// Nodal samples of a function together with its boundary trace.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "sample count must match grid");
        Self { grid, values }
    }

    pub fn from_fn(grid: &Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes.iter().map(|&r| f(r)).collect();
        Self::new(Arc::clone(grid), values)
    }

    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        Self::new(Arc::clone(grid), vec![0.0; grid.len()])
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Trace `γu`: evaluation at `r = 1` in the radial model.
    pub fn trace(&self) -> f64 {
        self.values[0]
    }

    /// Copy with nodes outside `Ω` (and the trace, when `Σ = ∅`) zeroed.
    pub fn masked(&self, region: &RegionPair) -> Self {
        let mut values = self.values.clone();
        for (v, &inside) in values.iter_mut().zip(region.omega()) {
            if !inside {
                *v = 0.0;
            }
        }
        if !region.sigma_included() {
            values[0] = 0.0;
        }
        Self::new(Arc::clone(&self.grid), values)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(
            Arc::clone(&self.grid),
            self.values.iter().map(|v| k * v).collect(),
        )
    }
}

/// Radial conformally flat metric `g = φ^{4/(n-2)} · (flat)` with its
/// curvature data.
#[derive(Debug, Clone)]
pub struct Metric {
    grid: Arc<RadialGrid>,
    /// Conformal factor samples, `φ_i > 0`.
    pub phi: Vec<f64>,
    /// Scalar curvature samples at the nodes.
    pub scalar_curvature: Vec<f64>,
    /// Boundary mean curvature, inner-normal convention.
    pub mean_curvature: f64,
    /// Decay order `τ < 0` of the asymptotics.
    pub decay_order: f64,
    /// Node volume weights `ω_{n-1} w_i φ_i^{2q̄}` for `dV_g` quadrature.
    vol_node: Vec<f64>,
    /// Boundary area `ω_{n-1} φ(1)^{q̄+1}` for `dσ_g`.
    boundary_area: f64,
}

impl Metric {
    pub fn new(
        grid: Arc<RadialGrid>,
        phi: Vec<f64>,
        scalar_curvature: Vec<f64>,
        mean_curvature: f64,
        decay_order: f64,
    ) -> Result<Self> {
        if phi.len() != grid.len() || scalar_curvature.len() != grid.len() {
            return Err(Error::InvalidMetric("field length mismatch".into()));
        }
        if phi.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidMetric(
                "conformal factor must be positive".into(),
            ));
        }
        let tail = (phi[grid.len() - 1] - 1.0).abs();
        if tail > DECAY_TOL {
            return Err(Error::InvalidMetric(format!(
                "|φ(r_max) - 1| = {tail:.3e} exceeds decay tolerance"
            )));
        }
        let dims = grid.dims;
        let vol_node = grid
            .quad_weights
            .iter()
            .zip(&phi)
            .map(|(w, p)| grid.sphere_area * w * p.powf(dims.crit_interior))
            .collect();
        let boundary_area = grid.sphere_area * phi[0].powf(dims.crit_boundary);
        Ok(Self {
            grid,
            phi,
            scalar_curvature,
            mean_curvature,
            decay_order,
            vol_node,
            boundary_area,
        })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn dims(&self) -> DimensionConstants {
        self.grid.dims
    }

    /// Per-node weights for `∫ · dV_g` (includes the sphere factor).
    pub fn volume_weights(&self) -> &[f64] {
        &self.vol_node
    }

    /// Boundary area `|∂M|_g`.
    pub fn boundary_area(&self) -> f64 {
        self.boundary_area
    }

    /// `∫_M f dV_g` from nodal samples.
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        self.vol_node.iter().zip(samples).map(|(w, f)| w * f).sum()
    }

    /// Pointwise factor `φ_i^2` multiplying `|∇u|^2_flat` in `|∇u|^2_g dV_g`.
    pub fn gradient_factor(&self, i: usize) -> f64 {
        self.phi[i] * self.phi[i]
    }

    pub fn is_flat(&self) -> bool {
        self.phi.iter().all(|&p| p == 1.0)
            && self.scalar_curvature.iter().all(|&r| r == 0.0)
            && self.mean_curvature == 1.0
    }
}

/// Flat exterior metric: `φ ≡ 1`, `R ≡ 0`, `H = +1`, `τ = -1`.
pub fn flat_metric(grid: &Arc<RadialGrid>) -> Metric {
    Metric::new(
        Arc::clone(grid),
        vec![1.0; grid.len()],
        vec![0.0; grid.len()],
        1.0,
        -1.0,
    )
    .expect("flat metric is always valid")
}

/// Flat metric with a square scalar-curvature well `R = -depth` on
/// `[r_lo, r_hi]`.
pub fn well_metric(grid: &Arc<RadialGrid>, r_lo: f64, r_hi: f64, depth: f64) -> Metric {
    let scalar = grid
        .nodes
        .iter()
        .map(|&r| if r >= r_lo && r <= r_hi { -depth } else { 0.0 })
        .collect();
    Metric::new(Arc::clone(grid), vec![1.0; grid.len()], scalar, 1.0, -1.0)
        .expect("well metric is always valid")
}

/// A pair `(Ω, Σ)`: node mask for `Ω ⊂ M` plus the all-or-nothing boundary
/// flag for `Σ ⊂ ∂M` (radial symmetry forces `Σ ∈ {∅, ∂M}`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionPair {
    omega: Vec<bool>,
    sigma: bool,
}

impl RegionPair {
    /// The full pair `(M, ∂M)`.
    pub fn full(grid: &Arc<RadialGrid>) -> Self {
        Self {
            omega: vec![true; grid.len()],
            sigma: true,
        }
    }

    /// Builds a pair from an explicit mask without adjacency validation.
    ///
    /// Used by zero-set extraction, which may legitimately produce
    /// `Σ = ∂M` with `Ω` not touching the boundary; the trace terms are
    /// inert in that case because the boundary node is constrained to zero.
    pub fn from_mask(omega: Vec<bool>, sigma: bool) -> Self {
        Self { omega, sigma }
    }

    pub fn omega(&self) -> &[bool] {
        &self.omega
    }

    pub fn sigma_included(&self) -> bool {
        self.sigma
    }

    /// True when the trace degree of freedom is genuinely active:
    /// `Σ = ∂M` and the boundary node belongs to `Ω`.
    pub fn boundary_active(&self) -> bool {
        self.sigma && self.omega[0]
    }

    pub fn is_empty_interior(&self) -> bool {
        self.omega.iter().all(|&b| !b)
    }

    pub fn node_count(&self) -> usize {
        self.omega.iter().filter(|&&b| b).count()
    }

    /// Contiguous index runs `[start, end]` (inclusive) of the mask.
    pub fn runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = None;
        for (i, &inside) in self.omega.iter().enumerate() {
            match (inside, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push((s, i - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push((s, self.omega.len() - 1));
        }
        runs
    }

    /// Radial intervals covered by the mask (inverse of
    /// [`region_from_intervals`] on valid pairs).
    pub fn intervals(&self, grid: &RadialGrid) -> Vec<(f64, f64)> {
        self.runs()
            .into_iter()
            .map(|(s, e)| (grid.nodes[s], grid.nodes[e]))
            .collect()
    }
}

/// Builds `(Ω, Σ)` from closed radial intervals.
///
/// Rejects out-of-range or overlapping intervals, and rejects
/// `include_boundary` when no interval contains `r = 1` (the trace of an
/// `Ω`-supported function would be forced to zero).
pub fn region_from_intervals(
    grid: &Arc<RadialGrid>,
    intervals: &[(f64, f64)],
    include_boundary: bool,
) -> Result<RegionPair> {
    let r_max = grid.r_max();
    for &(lo, hi) in intervals {
        if !(lo <= hi) {
            return Err(Error::InvalidRegion(format!("empty interval [{lo}, {hi}]")));
        }
        if lo < 1.0 || hi > r_max {
            return Err(Error::InvalidRegion(format!(
                "interval [{lo}, {hi}] outside [1, {r_max}]"
            )));
        }
    }
    let mut sorted: Vec<(f64, f64)> = intervals.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for pair in sorted.windows(2) {
        if pair[1].0 <= pair[0].1 {
            return Err(Error::InvalidRegion("overlapping intervals".into()));
        }
    }
    if include_boundary && !sorted.iter().any(|&(lo, _)| lo <= 1.0) {
        return Err(Error::InvalidRegion(
            "Σ = ∂M requires an interval containing r = 1".into(),
        ));
    }
    let omega = grid
        .nodes
        .iter()
        .map(|&r| sorted.iter().any(|&(lo, hi)| r >= lo && r <= hi))
        .collect();
    Ok(RegionPair::from_mask(omega, include_boundary))
}

/// Prescribed curvature pair `(R', H')` with the zero-set threshold.
#[derive(Debug, Clone)]
pub struct CurvatureTarget {
    /// Target scalar curvature samples at the nodes.
    pub scalar: Vec<f64>,
    /// Target boundary mean curvature.
    pub mean: f64,
    /// Threshold for zero-set extraction.
    pub zero_tol: f64,
}

impl CurvatureTarget {
    /// Default threshold `max(1e-12 · max(|R'|, |H'|), 1e-300)`; the zero
    /// set is an exact notion, discretely a threshold is unavoidable.
    pub fn new(scalar: Vec<f64>, mean: f64) -> Self {
        let scale = scalar.iter().map(|r| r.abs()).fold(mean.abs(), f64::max);
        let zero_tol = (1e-12 * scale).max(1e-300);
        Self {
            scalar,
            mean,
            zero_tol,
        }
    }

    pub fn with_zero_tol(mut self, zero_tol: f64) -> Self {
        self.zero_tol = zero_tol;
        self
    }

    pub fn zero(grid: &RadialGrid) -> Self {
        Self::new(vec![0.0; grid.len()], 0.0)
    }

    /// `R' <= 0` nodewise and `H' <= 0`: the sign condition of the existence
    /// pipeline.
    pub fn is_non_positive(&self) -> bool {
        self.scalar.iter().all(|&r| r <= 0.0) && self.mean <= 0.0
    }
}

/// Zero-set pair `(Z, Z_∂)` of a curvature target.
pub fn zero_set(target: &CurvatureTarget, grid: &RadialGrid) -> RegionPair {
    let omega = target
        .scalar
        .iter()
        .map(|r| r.abs() <= target.zero_tol)
        .collect();
    let sigma = target.mean.abs() <= target.zero_tol;
    debug_assert_eq!(target.scalar.len(), grid.len());
    RegionPair::from_mask(omega, sigma)
}
