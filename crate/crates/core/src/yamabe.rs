//! The relative Yamabe invariant `𝒴^{q,r}_b(Ω,Σ) = inf { E(u) : u ∈
//! B^{q,r}_b }` by projected-gradient descent, sign classification through
//! the weighted eigenvalue, and the sign-independence and
//! conformal-invariance harnesses.
//!
//! At critical exponents the continuum infimum need not be attained; the
//! computed value is an upper bound for the discrete infimum and only its
//! sign carries the classification contract.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conformal::apply_conformal;
use crate::domain::{GridFunction, Metric, RegionPair};
use crate::error::{Error, Result};
use crate::normalize::{project_to_constraint, ExponentTriple};
use crate::spectral::{
    assemble_pencil, classify_value, lambda_delta, InvariantReport, QuadraticEnergy, SignClass,
};

/// Options of the constrained descent.
#[derive(Debug, Clone, Copy)]
pub struct YamabeOptions {
    pub max_iters: usize,
    pub step0: f64,
    pub tol_grad: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for YamabeOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            step0: 1.0,
            tol_grad: 1e-8,
            restarts: 4,
            seed: 0x59a3abe,
        }
    }
}

impl YamabeOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Precondition("max_iters must be >= 1".into()));
        }
        if !(self.tol_grad > 0.0) {
            return Err(Error::Precondition("tol_grad must be positive".into()));
        }
        Ok(())
    }
}

fn validate_exponents(metric: &Metric, tri: ExponentTriple) -> Result<()> {
    let dims = metric.dims();
    if !(tri.q >= 2.0 && tri.q <= dims.crit_interior) {
        return Err(Error::ExponentOutOfRange(format!(
            "q = {} outside [2, {}]",
            tri.q, dims.crit_interior
        )));
    }
    if !(tri.r >= 2.0 && tri.r <= dims.crit_boundary) {
        return Err(Error::ExponentOutOfRange(format!(
            "r = {} outside [2, {}]",
            tri.r, dims.crit_boundary
        )));
    }
    if !(tri.q > tri.r) {
        return Err(Error::ExponentOutOfRange(format!(
            "need q > r, got q = {}, r = {}",
            tri.q, tri.r
        )));
    }
    Ok(())
}

/// Constraint-set normal direction at `u` (gradient of the membership
/// functional), used to project the energy gradient onto the tangent space.
fn constraint_normal(
    metric: &Metric,
    region: &RegionPair,
    tri: ExponentTriple,
    u: &GridFunction,
) -> Vec<f64> {
    let grid = metric.grid();
    let mvw = crate::calculus::masked_volume_weights(metric, region);
    let mut n_vec = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        if region.omega()[i] {
            let v = u.values()[i];
            n_vec[i] = tri.q * v.abs().powf(tri.q - 2.0) * v * mvw[i];
        }
    }
    if region.boundary_active() {
        let v = u.values()[0];
        n_vec[0] += tri.b * tri.r * v.abs().powf(tri.r - 2.0) * v * metric.boundary_area();
    }
    if !region.sigma_included() {
        n_vec[0] = 0.0;
    }
    n_vec
}

struct DescentOutcome {
    value: f64,
    minimizer: GridFunction,
    iterations: usize,
    rel_tangent_grad: f64,
}

/// Projected-gradient descent with Armijo backtracking from one start.
fn descend(
    form: &QuadraticEnergy,
    metric: &Metric,
    region: &RegionPair,
    tri: ExponentTriple,
    start: &GridFunction,
    opts: &YamabeOptions,
) -> Result<Option<DescentOutcome>> {
    let (_, mut u) = match project_to_constraint(start, metric, region, tri) {
        Ok(p) => p,
        Err(Error::TrivialFunction) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut e = form.value(u.values());
    let mut step = opts.step0;
    let mut rel = f64::INFINITY;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        iterations += 1;
        let g = form.grad(u.values());
        let n_vec = constraint_normal(metric, region, tri, &u);
        let nn: f64 = n_vec.iter().map(|v| v * v).sum();
        let gn: f64 = g.iter().zip(&n_vec).map(|(a, b)| a * b).sum();
        let g_tan: Vec<f64> = if nn > 0.0 {
            g.iter().zip(&n_vec).map(|(a, b)| a - gn / nn * b).collect()
        } else {
            g.clone()
        };
        let g_norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let gt_norm_sq: f64 = g_tan.iter().map(|v| v * v).sum();
        let gt_norm = gt_norm_sq.sqrt();
        rel = gt_norm / g_norm.max(1e-300);
        if gt_norm <= opts.tol_grad * g_norm.max(1e-300) {
            break;
        }

        // backtracking along the projected path
        let mut accepted = false;
        let mut t = step;
        for _ in 0..60 {
            let trial = GridFunction::new(
                std::sync::Arc::clone(u.grid()),
                u.values()
                    .iter()
                    .zip(&g_tan)
                    .map(|(v, g)| v - t * g)
                    .collect(),
            );
            if let Ok((_, proj)) = project_to_constraint(&trial, metric, region, tri) {
                let e_new = form.value(proj.values());
                if e_new <= e - 1e-4 * t * gt_norm_sq {
                    u = proj;
                    e = e_new;
                    accepted = true;
                    step = (t * 2.0).min(opts.step0 * 1e6);
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(Some(DescentOutcome {
        value: e,
        minimizer: u,
        iterations,
        rel_tangent_grad: rel,
    }))
}

fn standard_starts(
    metric: &Metric,
    region: &RegionPair,
    opts: &YamabeOptions,
) -> Vec<GridFunction> {
    let grid = metric.grid();
    let mut starts = Vec::new();
    if opts.restarts >= 1 {
        starts.push(GridFunction::from_fn(grid, |_| 1.0).masked(region));
    }
    if opts.restarts >= 2 {
        starts.push(GridFunction::from_fn(grid, |r| 1.0 / r).masked(region));
    }
    if opts.restarts >= 3 {
        if let Some(&(s, e)) = region.runs().iter().max_by_key(|&&(s, e)| e - s) {
            let (r_lo, r_hi) = (grid.nodes[s], grid.nodes[e]);
            let center = (r_lo.ln() + r_hi.ln()) / 2.0;
            let width = ((r_hi.ln() - r_lo.ln()) / 4.0).max(1e-3);
            starts.push(
                GridFunction::from_fn(grid, |r| (-((r.ln() - center) / width).powi(2)).exp())
                    .masked(region),
            );
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.restarts {
        let vals: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        starts.push(GridFunction::new(std::sync::Arc::clone(grid), vals).masked(region));
    }
    starts
}

fn descend_best(
    metric: &Metric,
    region: &RegionPair,
    tri: ExponentTriple,
    starts: &[GridFunction],
    opts: &YamabeOptions,
) -> Result<Option<DescentOutcome>> {
    let form = QuadraticEnergy::new(metric, region);
    let mut best: Option<DescentOutcome> = None;
    let mut total_iters = 0;
    for start in starts {
        if let Some(out) = descend(&form, metric, region, tri, start, opts)? {
            total_iters += out.iterations;
            let better = best.as_ref().is_none_or(|b| out.value < b.value);
            if better {
                best = Some(out);
            }
        }
    }
    if let Some(b) = best.as_mut() {
        b.iterations = total_iters;
    }
    Ok(best)
}

/// Discrete upper bound for `𝒴^{q,r}_b(Ω,Σ)` by projected-gradient descent
/// from several starts. Only the SIGN is contractual; `+∞` when the
/// constrained space is trivial.
pub fn yamabe_infimum(
    metric: &Metric,
    region: &RegionPair,
    tri: ExponentTriple,
    opts: &YamabeOptions,
) -> Result<InvariantReport> {
    opts.validate()?;
    validate_exponents(metric, tri)?;
    let pencil = match assemble_pencil(metric, region, 0.0) {
        Some(p) => p,
        None => return Ok(InvariantReport::infinite()),
    };
    let starts = standard_starts(metric, region, opts);
    let best = descend_best(metric, region, tri, &starts, opts)?;
    Ok(match best {
        None => InvariantReport::infinite(),
        Some(out) => InvariantReport {
            value: out.value,
            sign: classify_value(out.value, pencil.a_scale),
            minimizer: Some(out.minimizer),
            iterations: out.iterations,
            residual: out.rel_tangent_grad,
        },
    })
}

/// Sign of the pair `(Ω,Σ)` through the weighted eigenvalue at every listed
/// `δ`. The signs must agree: a strict positive/negative split signals a
/// discretization too coarse to classify and is reported as an error.
/// Trivial pairs (`λ = +∞`) classify as positive.
pub fn classify_sign(
    metric: &Metric,
    region: &RegionPair,
    delta_list: &[f64],
) -> Result<SignClass> {
    if delta_list.is_empty() {
        return Err(Error::Precondition("empty delta list".into()));
    }
    let mut classes = Vec::with_capacity(delta_list.len());
    for &delta in delta_list {
        let report = lambda_delta(metric, region, delta)?;
        classes.push(match report.sign {
            SignClass::Infinite => SignClass::Positive,
            other => other,
        });
    }
    let has_pos = classes.contains(&SignClass::Positive);
    let has_neg = classes.contains(&SignClass::Negative);
    let has_zero = classes.contains(&SignClass::Zero);
    if has_pos && has_neg {
        return Err(Error::SignInconsistency(format!(
            "classes across delta list: {:?}",
            classes.iter().map(|c| c.as_str()).collect::<Vec<_>>()
        )));
    }
    Ok(if has_zero {
        SignClass::Zero
    } else if has_pos {
        SignClass::Positive
    } else {
        SignClass::Negative
    })
}

/// One cell of the sign-independence table.
#[derive(Debug, Clone, Copy)]
pub struct SuiteRow {
    pub b: f64,
    pub r: f64,
    /// Discrete upper bound for the invariant.
    pub value: f64,
    pub sign: SignClass,
}

/// Result of the `(b, r)` sign-independence sweep at `q = 2q̄`.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub rows: Vec<SuiteRow>,
    pub all_equal: bool,
}

/// Computes the sign of the Yamabe infimum over all `(b, r)` pairs at the
/// critical interior exponent.
pub fn sign_independence_suite(
    metric: &Metric,
    region: &RegionPair,
    b_list: &[f64],
    r_list: &[f64],
    opts: &YamabeOptions,
) -> Result<SuiteResult> {
    let q = metric.dims().crit_interior;
    let mut rows = Vec::with_capacity(b_list.len() * r_list.len());
    for &b in b_list {
        for &r in r_list {
            let tri = ExponentTriple::new(q, r, b)?;
            let report = yamabe_infimum(metric, region, tri, opts)?;
            rows.push(SuiteRow {
                b,
                r,
                value: report.value,
                sign: report.sign,
            });
        }
    }
    let all_equal = rows.windows(2).all(|w| w[0].sign == w[1].sign);
    Ok(SuiteResult { rows, all_equal })
}

/// Result of the conformal-invariance check.
#[derive(Debug, Clone, Copy)]
pub struct ConformalCheck {
    /// Discrete `𝒴^{2q̄,r}_0` under the base metric.
    pub v1: f64,
    /// The same under the transformed metric, minimized over the mapped
    /// test family.
    pub v2: f64,
    pub rel_diff: f64,
}

/// Compares `𝒴^{2q̄,r}_0` under `metric` and under
/// `apply_conformal(metric, φ)`, exploiting the exact correspondence
/// `u ↦ u/φ`, `E_{g'}(u) = E_g(φu)`: each side is additionally descended
/// from the other side's mapped minimizer so both upper bounds are tight.
pub fn conformal_invariance_check(
    metric: &Metric,
    region: &RegionPair,
    phi: &GridFunction,
    r: f64,
    opts: &YamabeOptions,
) -> Result<ConformalCheck> {
    opts.validate()?;
    let grid = metric.grid();
    let dims = metric.dims();
    let tri = ExponentTriple::new(dims.crit_interior, r, 0.0)?;
    validate_exponents(metric, tri)?;
    if phi.values().iter().all(|&p| p == 1.0) {
        // identity transformation: identical problem on both sides
        let starts = standard_starts(metric, region, opts);
        let v = descend_best(metric, region, tri, &starts, opts)?
            .map_or(f64::INFINITY, |out| out.value);
        return Ok(ConformalCheck {
            v1: v,
            v2: v,
            rel_diff: 0.0,
        });
    }
    let transformed = apply_conformal(metric, phi)?;

    let starts1 = standard_starts(metric, region, opts);
    let starts2 = standard_starts(&transformed, region, opts);
    let out1 = descend_best(metric, region, tri, &starts1, opts)?;
    let out2 = descend_best(&transformed, region, tri, &starts2, opts)?;
    let (mut out1, mut out2) = match (out1, out2) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Ok(ConformalCheck {
                v1: f64::INFINITY,
                v2: f64::INFINITY,
                rel_diff: 0.0,
            })
        }
    };

    // cross-seed each problem with the other side's minimizer
    let mapped_to_transformed = GridFunction::new(
        std::sync::Arc::clone(grid),
        out1.minimizer
            .values()
            .iter()
            .zip(phi.values())
            .map(|(u, p)| u / p)
            .collect(),
    );
    if let Some(cross) = descend_best(&transformed, region, tri, &[mapped_to_transformed], opts)? {
        if cross.value < out2.value {
            out2 = cross;
        }
    }
    let mapped_to_base = GridFunction::new(
        std::sync::Arc::clone(grid),
        out2.minimizer
            .values()
            .iter()
            .zip(phi.values())
            .map(|(u, p)| u * p)
            .collect(),
    );
    if let Some(cross) = descend_best(metric, region, tri, &[mapped_to_base], opts)? {
        if cross.value < out1.value {
            out1 = cross;
        }
    }

    let v1 = out1.value;
    let v2 = out2.value;
    let rel_diff = (v1 - v2).abs() / v1.abs().max(v2.abs()).max(1e-300);
    Ok(ConformalCheck { v1, v2, rel_diff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, flat_metric, well_metric, RadialGrid, Spacing};
    use crate::energy::energy;
    use std::sync::Arc;

    fn desk_grid() -> Arc<RadialGrid> {
        build_grid(3, 1e3, 256, Spacing::Log).unwrap()
    }

    fn quick_opts() -> YamabeOptions {
        YamabeOptions {
            max_iters: 600,
            ..Default::default()
        }
    }

    #[test]
    fn flat_infimum_positive() {
        let grid = desk_grid();
        let metric = flat_metric(&grid);
        let full = RegionPair::full(&grid);
        let tri = ExponentTriple::new(6.0, 4.0, 1.0).unwrap();
        let report = yamabe_infimum(&metric, &full, tri, &quick_opts()).unwrap();
        assert_eq!(report.sign, SignClass::Positive);
        assert!(report.value > 0.0 && report.value.is_finite());
        // matches the eigenvalue classification
        let class = classify_sign(&metric, &full, &[0.0, -0.25]).unwrap();
        assert_eq!(class, SignClass::Positive);
    }

    #[test]
    fn well_infimum_negative() {
        let grid = desk_grid();
        let metric = well_metric(&grid, 1.0, 2.0, 50.0);
        let full = RegionPair::full(&grid);
        let tri = ExponentTriple::new(6.0, 4.0, 1.0).unwrap();
        let report = yamabe_infimum(&metric, &full, tri, &quick_opts()).unwrap();
        assert_eq!(report.sign, SignClass::Negative);
        let class = classify_sign(&metric, &full, &[0.0, -0.25]).unwrap();
        assert_eq!(class, SignClass::Negative);
    }

    #[test]
    fn empty_pair_conventions() {
        let grid = desk_grid();
        let metric = flat_metric(&grid);
        let empty = RegionPair::from_mask(vec![false; grid.len()], false);
        let tri = ExponentTriple::new(6.0, 4.0, 1.0).unwrap();
        let report = yamabe_infimum(&metric, &empty, tri, &quick_opts()).unwrap();
        assert!(report.value.is_infinite());
        assert_eq!(report.sign, SignClass::Infinite);
        // +∞ counts as positive for the classification gate
        let class = classify_sign(&metric, &empty, &[0.0]).unwrap();
        assert_eq!(class, SignClass::Positive);
    }

    #[test]
    fn rejects_out_of_range_exponents() {
        let grid = desk_grid();
        let metric = flat_metric(&grid);
        let full = RegionPair::full(&grid);
        let opts = quick_opts();
        for (q, r) in [(7.0, 4.0), (6.0, 4.5), (6.0, 1.5), (4.0, 4.0)] {
            let tri = ExponentTriple { q, r, b: 1.0 };
            assert!(
                yamabe_infimum(&metric, &full, tri, &opts).is_err(),
                "({q},{r})"
            );
        }
    }

    #[test]
    fn scale_invariance_of_energy_on_ray() {
        // E(ku) = k² E(u), exactly as used by the normalization arguments
        let grid = desk_grid();
        let metric = well_metric(&grid, 1.0, 3.0, 5.0);
        let full = RegionPair::full(&grid);
        let form = QuadraticEnergy::new(&metric, &full);
        let u = GridFunction::from_fn(&grid, |r| 1.0 / r + 0.2 * (-r).exp());
        let e1 = form.value(u.values());
        for k in [0.5, 2.0, 17.0] {
            let ek = form.value(u.scale(k).values());
            assert!((ek - k * k * e1).abs() <= 1e-12 * ek.abs().max(1.0));
        }
    }

    #[test]
    fn negative_witness_is_portable() {
        // a function with E < 0 stays negative after projection onto any
        // other valid constraint set (E of a positive multiple)
        let grid = desk_grid();
        let metric = well_metric(&grid, 1.0, 2.0, 50.0);
        let full = RegionPair::full(&grid);
        let witness = GridFunction::from_fn(&grid, |r| 1.0 / r);
        let e = energy(&metric, &full, &witness);
        assert!(e.total < 0.0, "witness energy {}", e.total);
        for (q, r, b) in [
            (6.0, 4.0, 1.0),
            (6.0, 2.0, -1.0),
            (4.0, 3.0, 5.0),
            (3.0, 2.0, 0.0),
        ] {
            let tri = ExponentTriple::new(q, r, b).unwrap();
            let (k, ku) = project_to_constraint(&witness, &metric, &full, tri).unwrap();
            assert!(k > 0.0);
            assert!(energy(&metric, &full, &ku).total < 0.0, "({q},{r},{b})");
        }
    }

    #[test]
    fn suite_signs_uniform() {
        let grid = build_grid(3, 1e3, 192, Spacing::Log).unwrap();
        let full = RegionPair::full(&grid);
        let opts = YamabeOptions {
            max_iters: 300,
            ..Default::default()
        };
        let b_list = [-1.0, 0.0, 1.0, 5.0];
        let r_list = [2.0, 3.0, 4.0];

        let flat = flat_metric(&grid);
        let suite = sign_independence_suite(&flat, &full, &b_list, &r_list, &opts).unwrap();
        assert_eq!(suite.rows.len(), 12);
        assert!(suite.all_equal);
        assert!(suite.rows.iter().all(|row| row.sign == SignClass::Positive));

        let well = well_metric(&grid, 1.0, 2.0, 50.0);
        let suite = sign_independence_suite(&well, &full, &b_list, &r_list, &opts).unwrap();
        assert!(suite.all_equal);
        assert!(suite.rows.iter().all(|row| row.sign == SignClass::Negative));

        // single-cell table is trivially uniform
        let single = sign_independence_suite(&flat, &full, &[1.0], &[4.0], &opts).unwrap();
        assert_eq!(single.rows.len(), 1);
        assert!(single.all_equal);
    }

    #[test]
    fn classification_stable_under_refinement() {
        for cells in [128usize, 256] {
            let grid = build_grid(3, 1e3, cells, Spacing::Log).unwrap();
            let full = RegionPair::full(&grid);
            let flat = flat_metric(&grid);
            assert_eq!(
                classify_sign(&flat, &full, &[0.0, -0.25]).unwrap(),
                SignClass::Positive
            );
            let well = well_metric(&grid, 1.0, 2.0, 50.0);
            assert_eq!(
                classify_sign(&well, &full, &[0.0, -0.25]).unwrap(),
                SignClass::Negative
            );
        }
    }

    #[test]
    fn yamabe_monotone_under_inclusion() {
        let grid = desk_grid();
        let metric = flat_metric(&grid);
        let tri = ExponentTriple::new(6.0, 4.0, 1.0).unwrap();
        let opts = quick_opts();
        let small = crate::domain::region_from_intervals(&grid, &[(1.0, 5.0)], true).unwrap();
        let big = RegionPair::full(&grid);
        let v_small = yamabe_infimum(&metric, &small, tri, &opts).unwrap().value;
        let v_big = yamabe_infimum(&metric, &big, tri, &opts).unwrap().value;
        assert!(v_small >= v_big - opts.tol_grad, "{v_small} vs {v_big}");
    }

    #[test]
    fn conformal_invariance_identity_factor() {
        let grid = desk_grid();
        let metric = flat_metric(&grid);
        let full = RegionPair::full(&grid);
        let one = GridFunction::from_fn(&grid, |_| 1.0);
        let check = conformal_invariance_check(&metric, &full, &one, 4.0, &quick_opts()).unwrap();
        assert_eq!(check.rel_diff, 0.0);
        assert_eq!(check.v1, check.v2);
    }

    #[test]
    fn conformal_invariance_perturbed_factor() {
        let grid = build_grid(3, 1e3, 512, Spacing::Log).unwrap();
        let metric = flat_metric(&grid);
        let full = RegionPair::full(&grid);
        let phi = GridFunction::from_fn(&grid, |r| 1.0 + 0.5 / r);
        let check = conformal_invariance_check(&metric, &full, &phi, 4.0, &quick_opts()).unwrap();
        assert!(check.rel_diff <= 0.05, "rel diff {}", check.rel_diff);
    }

    #[test]
    fn energy_identity_under_pullback() {
        // E_{g'}(u) = E_g(φu) within quadrature error
        let grid = build_grid(3, 1e3, 512, Spacing::Log).unwrap();
        let metric = flat_metric(&grid);
        let full = RegionPair::full(&grid);
        let phi = GridFunction::from_fn(&grid, |r| 1.0 + 0.5 / r);
        let transformed = apply_conformal(&metric, &phi).unwrap();
        let h = grid.max_log_step();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let a = rng.gen_range(-1.0..1.0);
            let alpha = rng.gen_range(0.8..2.0);
            let u = GridFunction::from_fn(&grid, |r| a * r.powf(-alpha));
            let lhs = energy(&transformed, &full, &u).total;
            let phi_u = GridFunction::new(
                Arc::clone(&grid),
                u.values()
                    .iter()
                    .zip(phi.values())
                    .map(|(a, b)| a * b)
                    .collect(),
            );
            let rhs = energy(&metric, &full, &phi_u).total;
            let scale = lhs.abs() + rhs.abs() + 1.0;
            assert!((lhs - rhs).abs() <= 10.0 * h * h * scale, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn classify_rejects_empty_delta_list() {
        let grid = desk_grid();
        let metric = flat_metric(&grid);
        let full = RegionPair::full(&grid);
        assert!(classify_sign(&metric, &full, &[]).is_err());
    }
}
