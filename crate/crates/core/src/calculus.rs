//! Discrete differential and integral calculus on radial grids: weighted
//! Sobolev norms, the metric Laplacian, trace and normal derivative, and
//! empirical probes of the Poincaré and Sobolev inequalities.
//!
//! All derivative stencils are three-point formulas on the nonuniform grid,
//! exact on quadratics (one-sided variants at interval ends, four points for
//! the one-sided second derivative to stay second order).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{GridFunction, Metric, RadialGrid, RegionPair};
use crate::error::{Error, Result};

/// Finite-difference weights for the `m`-th derivative at `x0` from the
/// sample points `xs` (Fornberg's recursion).
pub(crate) fn fd_weights(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(m < n, "need more than m points");
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Stencil (indices and weights) for `d/dr` at node `i` restricted to the
/// contiguous index run `[s, e]`.
fn d1_stencil(nodes: &[f64], s: usize, e: usize, i: usize) -> (Vec<usize>, Vec<f64>) {
    debug_assert!(s <= i && i <= e);
    if e == s {
        // isolated node: no derivative information
        return (vec![i], vec![0.0]);
    }
    if e - s == 1 {
        let h = nodes[e] - nodes[s];
        return (vec![s, e], vec![-1.0 / h, 1.0 / h]);
    }
    let js: Vec<usize> = if i == s {
        vec![s, s + 1, s + 2]
    } else if i == e {
        vec![e - 2, e - 1, e]
    } else {
        vec![i - 1, i, i + 1]
    };
    let xs: Vec<f64> = js.iter().map(|&j| nodes[j]).collect();
    let w = fd_weights(nodes[i], &xs, 1);
    (js, w)
}

/// Stencil for `d^2/dr^2` at node `i` on the full grid; four points at the
/// ends to keep second order.
fn d2_stencil(nodes: &[f64], i: usize) -> (Vec<usize>, Vec<f64>) {
    let n = nodes.len();
    let js: Vec<usize> = if i == 0 {
        (0..4.min(n)).collect()
    } else if i == n - 1 {
        (n.saturating_sub(4)..n).collect()
    } else {
        vec![i - 1, i, i + 1]
    };
    let xs: Vec<f64> = js.iter().map(|&j| nodes[j]).collect();
    let w = fd_weights(nodes[i], &xs, 2);
    (js, w)
}

/// First derivative samples on the full grid.
pub(crate) fn derivative(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let (js, ws) = d1_stencil(nodes, 0, n - 1, i);
        out[i] = js.iter().zip(&ws).map(|(&j, &w)| w * values[j]).sum();
    }
    out
}

/// Second derivative samples on the full grid.
pub(crate) fn second_derivative(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let (js, ws) = d2_stencil(nodes, i);
        out[i] = js.iter().zip(&ws).map(|(&j, &w)| w * values[j]).sum();
    }
    out
}

/// First derivative restricted to the runs of `Ω`: within each contiguous
/// run the stencils never reach across the mask, so the jump to the
/// zero-extension does not pollute the samples. Nodes outside `Ω` get zero.
pub(crate) fn masked_derivative(
    grid: &RadialGrid,
    values: &[f64],
    region: &RegionPair,
) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (s, e) in region.runs() {
        for i in s..=e {
            let (js, ws) = d1_stencil(&grid.nodes, s, e, i);
            out[i] = js.iter().zip(&ws).map(|(&j, &w)| w * values[j]).sum();
        }
    }
    out
}

/// Transpose action of the masked derivative operator: accumulates
/// `out[j] += Σ_i s_i D_{ij}` over the region runs.
pub(crate) fn masked_derivative_transpose(
    grid: &RadialGrid,
    s_vec: &[f64],
    region: &RegionPair,
) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (s, e) in region.runs() {
        for i in s..=e {
            let (js, ws) = d1_stencil(&grid.nodes, s, e, i);
            for (&j, &w) in js.iter().zip(&ws) {
                out[j] += s_vec[i] * w;
            }
        }
    }
    out
}

/// Node weights for quadrature restricted to the cells of `Ω` (both cell
/// endpoints inside). For the full region this equals `quad_weights`.
pub(crate) fn region_quad_weights(grid: &RadialGrid, region: &RegionPair) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    let omega = region.omega();
    for i in 0..grid.len() - 1 {
        if omega[i] && omega[i + 1] {
            out[i] += grid.cell_lo[i];
            out[i + 1] += grid.cell_hi[i];
        }
    }
    out
}

/// Per-node `dV_g` weights restricted to the cells of `Ω`.
pub(crate) fn masked_volume_weights(metric: &Metric, region: &RegionPair) -> Vec<f64> {
    let grid = metric.grid();
    let dims = metric.dims();
    let rw = region_quad_weights(grid, region);
    rw.iter()
        .zip(&metric.phi)
        .map(|(w, p)| grid.sphere_area * w * p.powf(dims.crit_interior))
        .collect()
}

/// Specification of a weighted Sobolev norm `W^{k,p}_δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    /// Derivative order, `0 <= k <= 2`.
    pub k: usize,
    /// Integrability exponent, `p >= 1`.
    pub p: f64,
    /// Weight index.
    pub delta: f64,
}

impl NormSpec {
    pub fn new(k: usize, p: f64, delta: f64) -> Result<Self> {
        if k > 2 {
            return Err(Error::InvalidNormSpec(format!("k = {k} must be <= 2")));
        }
        if !(p >= 1.0) {
            return Err(Error::InvalidNormSpec(format!("p = {p} must be >= 1")));
        }
        Ok(Self { k, p, delta })
    }
}

/// Weighted Sobolev norm
/// `(Σ_{j<=k} ‖ρ^{-δ-n/p+j} |∇^j u|‖^p_{L^p})^{1/p}` with the flat background
/// measure. Radially `|∇u| = |u'|`; `|∇²u|` is approximated by `|u''|`
/// (dominant radial Hessian component; `k = 2` norms are diagnostics only).
pub fn weighted_norm(u: &GridFunction, spec: NormSpec) -> Result<f64> {
    if spec.k > 2 {
        return Err(Error::InvalidNormSpec(format!(
            "k = {} must be <= 2",
            spec.k
        )));
    }
    let grid = u.grid();
    let n = grid.dims.n as f64;
    let mut total = 0.0;
    for j in 0..=spec.k {
        let samples: Vec<f64> = match j {
            0 => u.values().to_vec(),
            1 => derivative(&grid.nodes, u.values()),
            _ => second_derivative(&grid.nodes, u.values()),
        };
        let expo = -spec.delta - n / spec.p + j as f64;
        let mut term = 0.0;
        for (i, &w) in grid.quad_weights.iter().enumerate() {
            let weighted = grid.rho[i].powf(expo) * samples[i].abs();
            term += w * weighted.powf(spec.p);
        }
        total += grid.sphere_area * term;
    }
    Ok(total.powf(1.0 / spec.p))
}

/// `∫_Ω |∇u|^2_g dV_g` by nodal quadrature: derivative samples restricted to
/// the runs of `Ω`, metric factor `φ^2`, cell-masked weights.
pub fn gradient_sq_norm(metric: &Metric, region: &RegionPair, u: &GridFunction) -> f64 {
    let grid = metric.grid();
    let du = masked_derivative(grid, u.values(), region);
    let rw = region_quad_weights(grid, region);
    let mut total = 0.0;
    for i in 0..grid.len() {
        total += rw[i] * du[i] * du[i] * metric.gradient_factor(i);
    }
    grid.sphere_area * total
}

/// Metric Laplacian of radial functions:
/// `Δ_g u = φ^{-4/(n-2)} (u'' + ((n-1)/r) u' + 2 (φ'/φ) u')`,
/// which reduces to `r^{1-n} (r^{n-1} u')'` in the flat case.
pub fn laplacian(metric: &Metric, u: &GridFunction) -> GridFunction {
    let grid = metric.grid();
    let nm1 = grid.dims.n as f64 - 1.0;
    let du = derivative(&grid.nodes, u.values());
    let ddu = second_derivative(&grid.nodes, u.values());
    let conf_pow = -(grid.dims.crit_interior - 2.0); // -4/(n-2)
    let flat = metric.is_flat();
    let dphi = if flat {
        Vec::new()
    } else {
        derivative(&grid.nodes, &metric.phi)
    };
    let mut out = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        let mut lap = ddu[i] + nm1 / grid.nodes[i] * du[i];
        if !flat {
            lap += 2.0 * dphi[i] / metric.phi[i] * du[i];
            lap *= metric.phi[i].powf(conf_pow);
        }
        out[i] = lap;
    }
    GridFunction::new(std::sync::Arc::clone(grid), out)
}

/// Outward normal derivative at the boundary, `∂_{ν_out} u = -u'(1)`,
/// one-sided second order.
pub fn normal_derivative_out(u: &GridFunction) -> f64 {
    let nodes = &u.grid().nodes;
    let (js, ws) = d1_stencil(nodes, 0, nodes.len() - 1, 0);
    let du0: f64 = js.iter().zip(&ws).map(|(&j, &w)| w * u.values()[j]).sum();
    -du0
}

/// Empirical constants for the Poincaré and Sobolev inequalities:
/// maximum observed ratios `‖u‖_{L²_{δ*}}/‖∇u‖_{L²}` and
/// `‖u‖_{L^{2q̄}}/‖∇u‖_{L²}` over a deterministic decaying family plus
/// seeded random test functions.
pub fn probe_inequalities(
    grid: &std::sync::Arc<RadialGrid>,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples < 1 {
        return Err(Error::Precondition("samples must be >= 1".into()));
    }
    let dims = grid.dims;
    let n = dims.n as f64;
    let spec_l2d = NormSpec::new(0, 2.0, dims.delta_star)?;
    let spec_l2q = NormSpec::new(0, dims.crit_interior, dims.delta_star)?;
    let spec_grad = NormSpec::new(1, 2.0, dims.delta_star)?;

    let mut c1_hat: f64 = 0.0;
    let mut c2_hat: f64 = 0.0;
    let mut consider = |u: &GridFunction| {
        let l2d = weighted_norm(u, spec_l2d).unwrap();
        let grad_full = weighted_norm(u, spec_grad).unwrap();
        // ‖∇u‖² = ‖u‖²_{W^{1,2}_{δ*}} - ‖u‖²_{L²_{δ*}}
        let grad_sq = grad_full * grad_full - l2d * l2d;
        if grad_sq <= 1e-28 {
            return; // 0/0 guarded
        }
        let grad = grad_sq.sqrt();
        let l2q = weighted_norm(u, spec_l2q).unwrap();
        c1_hat = c1_hat.max(l2d / grad);
        c2_hat = c2_hat.max(l2q / grad);
    };

    // deterministic family r^{-α}
    let alpha_lo = (n - 2.0) / 2.0 + 0.1;
    let alpha_hi = n - 2.0;
    let steps = 9;
    for k in 0..=steps {
        let alpha = alpha_lo + (alpha_hi - alpha_lo) * k as f64 / steps as f64;
        consider(&GridFunction::from_fn(grid, |r| r.powf(-alpha)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_max = grid.r_max();
    for _ in 0..samples {
        match rng.gen_range(0..2) {
            0 => {
                // random decaying power combination
                let terms = rng.gen_range(1..=3);
                let coeffs: Vec<(f64, f64)> = (0..terms)
                    .map(|_| {
                        (
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(alpha_lo..(n - 1.0).max(alpha_lo + 0.5)),
                        )
                    })
                    .collect();
                consider(&GridFunction::from_fn(grid, |r| {
                    coeffs.iter().map(|&(c, a)| c * r.powf(-a)).sum()
                }));
            }
            _ => {
                // log-space Gaussian bump
                let center = rng.gen_range(0.1..(r_max.ln() * 0.5));
                let width = rng.gen_range(0.2..1.0);
                consider(&GridFunction::from_fn(grid, |r| {
                    (-((r.ln() - center) / width).powi(2) / 2.0).exp()
                }));
            }
        }
    }
    Ok((c1_hat, c2_hat))
}
