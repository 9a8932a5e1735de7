//! Linear flows: the heat semigroup of the sub-Laplacian by explicit finite
//! differences, the fractional semigroup by subordination quadrature, a
//! diffusion Monte Carlo oracle, and semigroup action on measures.

use crate::grid::{Field, GridSpec};
use crate::hgroup::{compose, inverse, GroupPoint};
use crate::kernels::PhiTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub const CFL_SAFETY: f64 = 0.4;
const PAR_THRESHOLD: usize = 40_000;

#[derive(Debug, Error)]
pub enum SemigroupError {
    #[error("CFL time step {0:e} below the configurable floor")]
    StepTooSmall(f64),
    #[error("instability: non-finite value at step {step}, t = {t}")]
    Instability { step: usize, t: f64 },
    #[error("non-finite input field")]
    NonFiniteInput,
    #[error("atom at ({0}, {1}, {2}) outside the grid box")]
    AtomOutsideBox(f64, f64, f64),
    #[error("need at least {need} Monte Carlo samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
}

/// Stable explicit step for the given grid.
pub fn cfl_dt(spec: &GridSpec) -> f64 {
    let max_coef = 2.0 + 4.0 * (spec.rx * spec.rx + spec.ry * spec.ry);
    let h = spec.h_min();
    CFL_SAFETY * h * h / (2.0 * max_coef)
}

/// Second-order centered discretization of
/// `L u = u_xx + u_yy + 4(x^2+y^2) u_tt + 4x u_yt - 4y u_xt`
/// with homogeneous Dirichlet values outside the box (N = 1).
pub fn sublaplacian_apply(u: &Field) -> Field {
    let mut out = Field::zeros(u.spec);
    sublaplacian_into(u, &mut out.values);
    out
}

fn sublaplacian_into(u: &Field, out: &mut [f64]) {
    let s = u.spec;
    let (nx, ny, nt) = (s.nx, s.ny, s.ntau);
    let inv_hx2 = 1.0 / (s.hx() * s.hx());
    let inv_hy2 = 1.0 / (s.hy() * s.hy());
    let inv_ht2 = 1.0 / (s.htau() * s.htau());
    let inv_hyht = 1.0 / (4.0 * s.hy() * s.htau());
    let inv_hxht = 1.0 / (4.0 * s.hx() * s.htau());
    let v = &u.values;
    let stride_i = ny * nt;
    let stride_j = nt;

    let row = |out_slice: &mut [f64], i: usize| {
        let x = s.x_at(i);
        for j in 0..ny {
            let y = s.y_at(j);
            let ct = 4.0 * (x * x + y * y) * inv_ht2;
            let cyt = 4.0 * x * inv_hyht;
            let cxt = -4.0 * y * inv_hxht;
            let interior =
                i > 0 && i + 1 < nx && j > 0 && j + 1 < ny;
            for k in 0..nt {
                let c = (i * ny + j) * nt + k;
                let uc = v[c];
                let g = |cond: bool, idx: usize| if cond { v[idx] } else { 0.0 };
                let (uxp, uxm, uyp, uym);
                let (ukp, ukm);
                let (uyp_kp, uyp_km, uym_kp, uym_km);
                let (uxp_kp, uxp_km, uxm_kp, uxm_km);
                if interior && k > 0 && k + 1 < nt {
                    uxp = v[c + stride_i];
                    uxm = v[c - stride_i];
                    uyp = v[c + stride_j];
                    uym = v[c - stride_j];
                    ukp = v[c + 1];
                    ukm = v[c - 1];
                    uyp_kp = v[c + stride_j + 1];
                    uyp_km = v[c + stride_j - 1];
                    uym_kp = v[c - stride_j + 1];
                    uym_km = v[c - stride_j - 1];
                    uxp_kp = v[c + stride_i + 1];
                    uxp_km = v[c + stride_i - 1];
                    uxm_kp = v[c - stride_i + 1];
                    uxm_km = v[c - stride_i - 1];
                } else {
                    let has_xp = i + 1 < nx;
                    let has_xm = i > 0;
                    let has_yp = j + 1 < ny;
                    let has_ym = j > 0;
                    let has_kp = k + 1 < nt;
                    let has_km = k > 0;
                    uxp = g(has_xp, c.wrapping_add(stride_i));
                    uxm = g(has_xm, c.wrapping_sub(stride_i));
                    uyp = g(has_yp, c.wrapping_add(stride_j));
                    uym = g(has_ym, c.wrapping_sub(stride_j));
                    ukp = g(has_kp, c.wrapping_add(1));
                    ukm = g(has_km, c.wrapping_sub(1));
                    uyp_kp = g(has_yp && has_kp, c.wrapping_add(stride_j).wrapping_add(1));
                    uyp_km = g(has_yp && has_km, c.wrapping_add(stride_j).wrapping_sub(1));
                    uym_kp = g(has_ym && has_kp, c.wrapping_sub(stride_j).wrapping_add(1));
                    uym_km = g(has_ym && has_km, c.wrapping_sub(stride_j).wrapping_sub(1));
                    uxp_kp = g(has_xp && has_kp, c.wrapping_add(stride_i).wrapping_add(1));
                    uxp_km = g(has_xp && has_km, c.wrapping_add(stride_i).wrapping_sub(1));
                    uxm_kp = g(has_xm && has_kp, c.wrapping_sub(stride_i).wrapping_add(1));
                    uxm_km = g(has_xm && has_km, c.wrapping_sub(stride_i).wrapping_sub(1));
                }
                let lap = (uxp - 2.0 * uc + uxm) * inv_hx2
                    + (uyp - 2.0 * uc + uym) * inv_hy2
                    + ct * (ukp - 2.0 * uc + ukm)
                    + cyt * (uyp_kp - uyp_km - uym_kp + uym_km)
                    + cxt * (uxp_kp - uxp_km - uxm_kp + uxm_km);
                out_slice[(j * nt) + k] = lap;
            }
        }
    };

    if s.len() >= PAR_THRESHOLD {
        out.par_chunks_mut(ny * nt)
            .enumerate()
            .for_each(|(i, chunk)| row(chunk, i));
    } else {
        for (i, chunk) in out.chunks_mut(ny * nt).enumerate() {
            row(chunk, i);
        }
    }
}

/// Marches the explicit heat flow from `u0` and captures snapshots at the
/// requested (sorted, positive) times. Negative undershoot from the cross
/// stencil is clamped to zero each step; the largest clamped magnitude is
/// returned for diagnostics.
pub fn heat_evolve_checkpoints(
    u0: &Field,
    times: &[f64],
) -> Result<(Vec<Field>, f64), SemigroupError> {
    u0.check_finite().map_err(|_| SemigroupError::NonFiniteInput)?;
    assert!(!times.is_empty());
    assert!(times.windows(2).all(|w| w[0] < w[1]) && times[0] > 0.0);
    let dt_max = cfl_dt(&u0.spec);
    if dt_max <= 1e-12 {
        return Err(SemigroupError::StepTooSmall(dt_max));
    }
    let mut u = u0.clone();
    let mut lap = vec![0.0; u.spec.len()];
    let mut snapshots = Vec::with_capacity(times.len());
    let mut t_prev = 0.0;
    let mut step_count = 0usize;
    let mut max_undershoot = 0.0f64;
    for &t in times {
        let span = t - t_prev;
        let n = (span / dt_max).ceil().max(1.0) as usize;
        let dt = span / n as f64;
        for _ in 0..n {
            sublaplacian_into(&u, &mut lap);
            for (uv, lv) in u.values.iter_mut().zip(&lap) {
                let next = *uv + dt * *lv;
                if next < 0.0 {
                    max_undershoot = max_undershoot.max(-next);
                    *uv = 0.0;
                } else {
                    *uv = next;
                }
            }
            step_count += 1;
            if step_count % 64 == 0 && !u.values[u.spec.center_index()].is_finite() {
                return Err(SemigroupError::Instability {
                    step: step_count,
                    t: t_prev,
                });
            }
        }
        u.check_finite().map_err(|_| SemigroupError::Instability {
            step: step_count,
            t,
        })?;
        snapshots.push(u.clone());
        t_prev = t;
    }
    Ok((snapshots, max_undershoot))
}

/// `e^{t L} u0` by explicit Euler stepping under the CFL bound.
pub fn heat_evolve(u0: &Field, t: f64) -> Result<Field, SemigroupError> {
    assert!(t > 0.0);
    let (mut snaps, _) = heat_evolve_checkpoints(u0, &[t])?;
    Ok(snaps.pop().unwrap())
}

/// Discrete unit point mass at the origin: all mass in the center cell.
pub fn discrete_delta(spec: GridSpec) -> Field {
    let mut f = Field::zeros(spec);
    let c = spec.center_index();
    f.values[c] = 1.0 / spec.cell_volume();
    f
}

/// Projects a delta-seeded kernel onto the exact inversion symmetry
/// `G(eta) = G(eta^{-1})` of the continuum kernel. The discrete stencil
/// preserves quarter-turn rotations and the swap-with-tau-flip automorphism
/// exactly, but tau-evenness only up to truncation error; averaging with the
/// inverted image removes that error mode while keeping O(h^2) accuracy.
pub fn symmetrize_inversion(f: &mut Field) {
    let s = f.spec;
    let n = s.len();
    for c in 0..n {
        let k = c % s.ntau;
        let j = (c / s.ntau) % s.ny;
        let i = c / (s.ny * s.ntau);
        let m = s.idx(s.nx - 1 - i, s.ny - 1 - j, s.ntau - 1 - k);
        if m > c {
            let avg = 0.5 * (f.values[c] + f.values[m]);
            f.values[c] = avg;
            f.values[m] = avg;
        }
    }
}

/// Discrete heat kernel `G(., t)`: the flow of a unit point mass,
/// symmetrized under inversion.
pub fn heat_kernel(t: f64, spec: GridSpec) -> Result<Field, SemigroupError> {
    let mut g = heat_evolve(&discrete_delta(spec), t)?;
    symmetrize_inversion(&mut g);
    Ok(g)
}

/// Heat kernel captured at several times in a single march.
pub fn heat_kernel_checkpoints(
    times: &[f64],
    spec: GridSpec,
) -> Result<Vec<Field>, SemigroupError> {
    let (mut snaps, _) = heat_evolve_checkpoints(&discrete_delta(spec), times)?;
    for s in &mut snaps {
        symmetrize_inversion(s);
    }
    Ok(snaps)
}

/// Fractional kernel `G_alpha(., t)`: subordinated flow of a unit point
/// mass, symmetrized under inversion.
pub fn frac_kernel(t: f64, alpha: f64, spec: GridSpec) -> Result<Field, SemigroupError> {
    let mut g = frac_evolve(&discrete_delta(spec), t, alpha)?;
    symmetrize_inversion(&mut g);
    Ok(g)
}

/// Fractional flow `e^{t L_alpha} u0` as the subordinated average of heat
/// flows over the node table; weights are renormalized in the table so the
/// discrete average is a convex combination.
pub fn frac_evolve_with_table(
    u0: &Field,
    table: &PhiTable,
) -> Result<Field, SemigroupError> {
    let (snaps, _) = heat_evolve_checkpoints(u0, &table.nodes)?;
    let mut out = Field::zeros(u0.spec);
    for (snap, &w) in snaps.iter().zip(&table.weights) {
        out.add_assign(snap, w);
    }
    Ok(out)
}

/// Fractional flow with a truncated default node set. The node range is
/// narrower than the scalar-quadrature default because every node costs a
/// full heat flow; the renormalized weights keep the average convex.
pub fn frac_evolve(u0: &Field, t: f64, alpha: f64) -> Result<Field, SemigroupError> {
    assert!(t > 0.0 && alpha > 0.0 && alpha < 2.0);
    let table = PhiTable::new(alpha, t, 1e-3, 40.0, 60);
    frac_evolve_with_table(u0, &table)
}

/// Discrete group convolution `(a * b)(eta) = int a(zeta^{-1} . eta) b(zeta)`.
/// Quadratic in the grid size; intended for identity checks on small grids.
pub fn group_convolve(a: &Field, b: &Field) -> Field {
    assert_eq!(a.spec, b.spec);
    let s = a.spec;
    let cell = s.cell_volume();
    let mut out = Field::zeros(s);
    let compute = |chunk: &mut [f64], i: usize| {
        let ex = s.x_at(i);
        for j in 0..s.ny {
            let ey = s.y_at(j);
            for k in 0..s.ntau {
                let et = s.tau_at(k);
                let mut acc = 0.0;
                for zi in 0..s.nx {
                    let zx = s.x_at(zi);
                    for zj in 0..s.ny {
                        let zy = s.y_at(zj);
                        for zk in 0..s.ntau {
                            let bv = b.values[s.idx(zi, zj, zk)];
                            if bv == 0.0 {
                                continue;
                            }
                            let zt = s.tau_at(zk);
                            // zeta^{-1} . eta
                            let px = ex - zx;
                            let py = ey - zy;
                            let pt = et - zt + 2.0 * (zy * ex - zx * ey);
                            acc += a.interp(px, py, pt) * bv;
                        }
                    }
                }
                chunk[j * s.ntau + k] = acc * cell;
            }
        }
    };
    out.values
        .par_chunks_mut(s.ny * s.ntau)
        .enumerate()
        .for_each(|(i, chunk)| compute(chunk, i));
    out
}

/// Monte Carlo estimate of the heat kernel density at `eta`, time `t`:
/// horizontal Brownian increments with midpoint coupling into the vertical
/// coordinate, kernel-smoothed with the supplied bandwidths.
pub fn mc_heat_kernel(
    eta: &GroupPoint,
    t: f64,
    n_samples: usize,
    seed: u64,
    bandwidth: (f64, f64, f64),
) -> Result<(f64, f64), SemigroupError> {
    assert!(t > 0.0);
    assert_eq!(eta.dim(), 1);
    if n_samples < 10_000 {
        return Err(SemigroupError::TooFewSamples {
            need: 10_000,
            got: n_samples,
        });
    }
    let n_steps = ((t / 0.005).ceil() as usize).max(100);
    let dt = t / n_steps as f64;
    let amp = (2.0 * dt).sqrt();
    let (bx, by, bt) = bandwidth;
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).powf(1.5) * bx * by * bt);
    let (tx, ty, tt) = (eta.x[0], eta.y[0], eta.tau);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n_samples {
        let (mut x, mut y, mut tau) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..n_steps {
            let dx = amp * gaussian(&mut rng);
            let dy = amp * gaussian(&mut rng);
            // midpoint (Stratonovich) coupling for the vertical component
            tau += 2.0 * ((x + 0.5 * dx) * dy - (y + 0.5 * dy) * dx);
            x += dx;
            y += dy;
        }
        let zx = (x - tx) / bx;
        let zy = (y - ty) / by;
        let zt = (tau - tt) / bt;
        let w = norm * (-0.5 * (zx * zx + zy * zy + zt * zt)).exp();
        sum += w;
        sumsq += w * w;
    }
    let mean = sum / n_samples as f64;
    let var = (sumsq / n_samples as f64 - mean * mean).max(0.0);
    Ok((mean, (var / n_samples as f64).sqrt()))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, one value per call
    let u1: f64 = rng.gen_range(1e-300..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Initial data: an optional density field plus point masses.
#[derive(Clone, Debug, Default)]
pub struct DiscreteMeasure {
    pub density: Option<Field>,
    pub atoms: Vec<(GroupPoint, f64)>,
}

impl DiscreteMeasure {
    pub fn from_density(f: Field) -> Self {
        DiscreteMeasure {
            density: Some(f),
            atoms: Vec::new(),
        }
    }

    pub fn point_mass(at: GroupPoint, mass: f64) -> Self {
        DiscreteMeasure {
            density: None,
            atoms: vec![(at, mass)],
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.density.as_ref().map_or(0.0, |f| f.mass())
            + self.atoms.iter().map(|(_, m)| m).sum::<f64>()
    }
}

/// `e^{t L_alpha} mu` on the grid: the density flows directly; each atom
/// contributes a left-translated copy of the discrete kernel, resampled by
/// trilinear interpolation and renormalized to preserve its mass.
pub fn apply_to_measure(
    mu: &DiscreteMeasure,
    t: f64,
    alpha: f64,
    spec: GridSpec,
) -> Result<Field, SemigroupError> {
    assert!(t > 0.0);
    let flow = |f: &Field| -> Result<Field, SemigroupError> {
        if (alpha - 2.0).abs() < 1e-14 {
            heat_evolve(f, t)
        } else {
            frac_evolve(f, t, alpha)
        }
    };
    let mut out = Field::zeros(spec);
    if let Some(density) = &mu.density {
        assert_eq!(density.spec, spec, "density lives on a different grid");
        out = flow(density)?;
    }
    if !mu.atoms.is_empty() {
        let kernel = if (alpha - 2.0).abs() < 1e-14 {
            heat_kernel(t, spec)?
        } else {
            frac_kernel(t, alpha, spec)?
        };
        let kernel_mass = kernel.mass();
        for (at, mass) in &mu.atoms {
            if at.x[0].abs() > spec.rx || at.y[0].abs() > spec.ry || at.tau.abs() > spec.rtau {
                return Err(SemigroupError::AtomOutsideBox(at.x[0], at.y[0], at.tau));
            }
            let inv_at = inverse(at);
            let mut translated = Field::from_fn(spec, |x, y, tau| {
                let p = compose(&inv_at, &GroupPoint::h1(x, y, tau));
                kernel.interp(p.x[0], p.y[0], p.tau)
            });
            let m = translated.mass();
            if m > 0.0 {
                let scale = mass * kernel_mass / m;
                for v in &mut translated.values {
                    *v *= scale;
                }
            }
            out.add_assign(&translated, 1.0);
        }
    }
    Ok(out)
}
