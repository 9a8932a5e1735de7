//! Heisenberg group arithmetic and geometry.
//!
//! Points are `(x, y, tau)` with `x, y` in `R^N`. The group law twists the
//! `tau` component, Haar measure coincides with Lebesgue measure, and the
//! anisotropic dilations scale `tau` like a squared length. The homogeneous
//! dimension is `Q = 2N + 2`.

use std::fmt;

/// A point of the Heisenberg group `H^N`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub tau: f64,
}

impl GroupPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>, tau: f64) -> Self {
        assert_eq!(x.len(), y.len(), "x and y must have the same dimension");
        GroupPoint { x, y, tau }
    }

    /// Convenience constructor for `H^1`.
    pub fn h1(x: f64, y: f64, tau: f64) -> Self {
        GroupPoint {
            x: vec![x],
            y: vec![y],
            tau,
        }
    }

    pub fn identity(n: usize) -> Self {
        GroupPoint {
            x: vec![0.0; n],
            y: vec![0.0; n],
            tau: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.tau.is_finite()
            && self.x.iter().all(|v| v.is_finite())
            && self.y.iter().all(|v| v.is_finite())
    }
}

impl fmt::Display for GroupPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}, {:?}, {})", self.x, self.y, self.tau)
    }
}

/// Topological parameter `N`, homogeneous dimension `Q = 2N+2`, and the Haar
/// volume of the unit ball of the homogeneous norm.
#[derive(Clone, Copy, Debug)]
pub struct GeometryParams {
    pub n: usize,
    pub q: u32,
    pub unit_ball_volume: f64,
}

impl GeometryParams {
    /// Builds the parameters for `H^N`, computing the unit ball volume by
    /// midpoint quadrature with Richardson extrapolation.
    pub fn new(n: usize) -> Self {
        let q = 2 * n as u32 + 2;
        let unit_ball_volume = unit_ball_volume_quadrature(n);
        GeometryParams {
            n,
            q,
            unit_ball_volume,
        }
    }
}

/// Group law: `(x,y,tau) . (x',y',tau') = (x+x', y+y', tau+tau'+2(x.y'-x'.y))`.
pub fn compose(a: &GroupPoint, b: &GroupPoint) -> GroupPoint {
    assert_eq!(a.dim(), b.dim(), "group points of mismatched dimension");
    let n = a.dim();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut twist = 0.0;
    for i in 0..n {
        x.push(a.x[i] + b.x[i]);
        y.push(a.y[i] + b.y[i]);
        twist += a.x[i] * b.y[i] - b.x[i] * a.y[i];
    }
    GroupPoint {
        x,
        y,
        tau: a.tau + b.tau + 2.0 * twist,
    }
}

/// Group inverse; on `H^N` this is componentwise negation.
pub fn inverse(a: &GroupPoint) -> GroupPoint {
    GroupPoint {
        x: a.x.iter().map(|v| -v).collect(),
        y: a.y.iter().map(|v| -v).collect(),
        tau: -a.tau,
    }
}

/// Homogeneous norm `((|x|^2+|y|^2)^2 + tau^2)^{1/4}`.
pub fn hnorm(a: &GroupPoint) -> f64 {
    let mut r2 = 0.0;
    for i in 0..a.dim() {
        r2 += a.x[i] * a.x[i] + a.y[i] * a.y[i];
    }
    (r2 * r2 + a.tau * a.tau).sqrt().sqrt()
}

/// Scalar version of [`hnorm`] for `H^1`, used by grid kernels.
#[inline]
pub fn hnorm1(x: f64, y: f64, tau: f64) -> f64 {
    let r2 = x * x + y * y;
    (r2 * r2 + tau * tau).sqrt().sqrt()
}

/// Left-invariant distance `d(a,b) = |b^{-1} . a|`.
pub fn distance(a: &GroupPoint, b: &GroupPoint) -> f64 {
    hnorm(&compose(&inverse(b), a))
}

/// Anisotropic dilation `(x,y,tau) -> (lx, ly, l^2 tau)`.
pub fn dilate(lambda: f64, a: &GroupPoint) -> GroupPoint {
    assert!(lambda > 0.0, "dilation factor must be positive");
    GroupPoint {
        x: a.x.iter().map(|v| lambda * v).collect(),
        y: a.y.iter().map(|v| lambda * v).collect(),
        tau: lambda * lambda * a.tau,
    }
}

/// Haar volume of the ball `B(., r)`; centers are irrelevant by left
/// invariance, and homogeneity gives `|B(0,r)| = |B(0,1)| r^Q`.
pub fn ball_volume(r: f64, geom: &GeometryParams) -> f64 {
    assert!(r > 0.0, "ball radius must be positive");
    geom.unit_ball_volume * r.powi(geom.q as i32)
}

/// Midpoint quadrature of the unit-ball indicator at a given resolution.
/// Only `N = 1` is supported by the quadrature routines (3 coordinates).
fn unit_ball_indicator_quadrature(n: usize, cells_per_axis: usize) -> f64 {
    assert_eq!(n, 1, "unit-ball quadrature implemented for H^1 only");
    let m = cells_per_axis;
    // Enclosing box: |x|,|y| <= 1, |tau| <= 1.
    let h = 2.0 / m as f64;
    let cell = h * h * h;
    let mut acc = 0.0;
    for i in 0..m {
        let x = -1.0 + (i as f64 + 0.5) * h;
        for j in 0..m {
            let y = -1.0 + (j as f64 + 0.5) * h;
            for k in 0..m {
                let tau = -1.0 + (k as f64 + 0.5) * h;
                if hnorm1(x, y, tau) < 1.0 {
                    acc += cell;
                }
            }
        }
    }
    acc
}

/// Unit-ball volume by midpoint rule at three refinements with Richardson
/// extrapolation (the indicator gives first-order convergence in `h`).
pub fn unit_ball_volume_quadrature(n: usize) -> f64 {
    let v1 = unit_ball_indicator_quadrature(n, 80);
    let v2 = unit_ball_indicator_quadrature(n, 160);
    let v4 = unit_ball_indicator_quadrature(n, 320);
    // Observed order from the three levels, then eliminate the leading term.
    let r = ((v2 - v1) / (v4 - v2)).abs().max(1.5);
    v4 + (v4 - v2) / (r - 1.0)
}

/// Haar integral of `f(distance(center, .))` over `B(center, radius)` by
/// midpoint quadrature. Integration runs in left-translated coordinates
/// `eta = center . xi`, where the Haar measure is Lebesgue in `xi`.
pub fn integrate_ball<F: Fn(f64) -> f64>(
    f: F,
    center: &GroupPoint,
    radius: f64,
    cells_per_axis: usize,
) -> f64 {
    assert_eq!(center.dim(), 1, "ball quadrature implemented for H^1 only");
    assert!(radius > 0.0);
    let m = cells_per_axis;
    let hxy = 2.0 * radius / m as f64;
    let htau = 2.0 * radius * radius / m as f64;
    let cell = hxy * hxy * htau;
    let mut acc = 0.0;
    for i in 0..m {
        let x = -radius + (i as f64 + 0.5) * hxy;
        for j in 0..m {
            let y = -radius + (j as f64 + 0.5) * hxy;
            for k in 0..m {
                let tau = -radius * radius + (k as f64 + 0.5) * htau;
                let s = hnorm1(x, y, tau);
                if s < radius {
                    let v = f(s);
                    assert!(v.is_finite(), "non-finite integrand sample at s = {s}");
                    acc += v * cell;
                }
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_point(rng: &mut ChaCha8Rng) -> GroupPoint {
        GroupPoint::h1(
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
        )
    }

    #[test]
    fn compose_direct() {
        let a = GroupPoint::h1(1.0, 0.0, 0.0);
        let b = GroupPoint::h1(0.0, 1.0, 0.0);
        let c = compose(&a, &b);
        assert_eq!((c.x[0], c.y[0], c.tau), (1.0, 1.0, 2.0));
    }

    #[test]
    fn group_axioms_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let e = GroupPoint::identity(1);
        for _ in 0..10_000 {
            let a = random_point(&mut rng);
            let b = random_point(&mut rng);
            let c = random_point(&mut rng);
            // identity
            assert_eq!(compose(&a, &e), a);
            // inverse cancels exactly (the twist term vanishes identically)
            let z = compose(&a, &inverse(&a));
            assert_eq!(z.x[0], 0.0);
            assert_eq!(z.y[0], 0.0);
            assert_eq!(z.tau, 0.0);
            // associativity
            let l = compose(&compose(&a, &b), &c);
            let r = compose(&a, &compose(&b, &c));
            assert!((l.tau - r.tau).abs() < 1e-10);
            assert!((l.x[0] - r.x[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn left_invariance_of_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let a = random_point(&mut rng);
            let b = random_point(&mut rng);
            let c = random_point(&mut rng);
            let d0 = distance(&a, &b);
            let d1 = distance(&compose(&c, &a), &compose(&c, &b));
            assert!((d0 - d1).abs() < 1e-10, "{d0} vs {d1}");
        }
    }

    #[test]
    fn hnorm_values() {
        assert!((hnorm(&GroupPoint::h1(1.0, 0.0, 0.0)) - 1.0).abs() < 1e-15);
        assert!((hnorm(&GroupPoint::h1(0.0, 0.0, 1.0)) - 1.0).abs() < 1e-15);
        let d = distance(&GroupPoint::h1(1.0, 1.0, 2.0), &GroupPoint::identity(1));
        assert!((d - 8f64.powf(0.25)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn norm_homogeneity(x in -10.0..10.0f64, y in -10.0..10.0f64, tau in -10.0..10.0f64,
                            lam in 0.1..5.0f64) {
            let a = GroupPoint::h1(x, y, tau);
            let lhs = hnorm(&dilate(lam, &a));
            let rhs = lam * hnorm(&a);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }

        #[test]
        fn dilation_automorphism(ax in -5.0..5.0f64, ay in -5.0..5.0f64, at in -5.0..5.0f64,
                                 bx in -5.0..5.0f64, by in -5.0..5.0f64, bt in -5.0..5.0f64,
                                 lam in 0.1..4.0f64) {
            let a = GroupPoint::h1(ax, ay, at);
            let b = GroupPoint::h1(bx, by, bt);
            let l = dilate(lam, &compose(&a, &b));
            let r = compose(&dilate(lam, &a), &dilate(lam, &b));
            prop_assert!((l.tau - r.tau).abs() < 1e-12 * (1.0 + l.tau.abs()));
        }
    }

    #[test]
    fn dilate_direct() {
        let a = GroupPoint::h1(1.0, 0.0, 1.0);
        let d = dilate(2.0, &a);
        assert_eq!((d.x[0], d.y[0], d.tau), (2.0, 0.0, 4.0));
    }

    #[test]
    fn unit_ball_volume_against_reduction() {
        // Slicing in tau reduces the volume to 2*pi*int_0^1 2r sqrt(1-r^4) dr
        // = pi^2/2, an independent closed-form evaluation.
        let exact = PI * PI / 2.0;
        let v = unit_ball_volume_quadrature(1);
        assert!(
            (v - exact).abs() / exact < 5e-3,
            "quadrature {v} vs reduction {exact}"
        );
    }

    #[test]
    fn ball_volume_homogeneity() {
        let geom = GeometryParams {
            n: 1,
            q: 4,
            unit_ball_volume: PI * PI / 2.0,
        };
        let ratio = ball_volume(2.0, &geom) / ball_volume(1.0, &geom);
        assert!((ratio - 16.0).abs() < 1e-12);
    }

    #[test]
    fn integrate_ball_indicator_matches_volume() {
        let geom = GeometryParams::new(1);
        for &r in &[0.5, 1.0, 2.0] {
            let v = integrate_ball(|_| 1.0, &GroupPoint::identity(1), r, 120);
            let exact = ball_volume(r, &geom);
            assert!(
                (v - exact).abs() / exact < 0.01,
                "r={r}: {v} vs {exact}"
            );
        }
    }

    #[test]
    fn integrate_ball_translation_invariance() {
        let c = GroupPoint::h1(3.0, -2.0, 5.0);
        let v0 = integrate_ball(|_| 1.0, &GroupPoint::identity(1), 1.0, 100);
        let v1 = integrate_ball(|_| 1.0, &c, 1.0, 100);
        assert!((v0 - v1).abs() / v0 < 1e-12);
    }

    #[test]
    fn integrate_ball_linear_profile_vs_monte_carlo() {
        // Monte Carlo oracle for f(s) = s over B(0,1), 10^7 box samples.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000_000u64;
        let box_vol = 2.0 * 2.0 * 2.0;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = rng.gen_range(-1.0..1.0);
            let y = rng.gen_range(-1.0..1.0);
            let tau = rng.gen_range(-1.0..1.0);
            let s = hnorm1(x, y, tau);
            let v = if s < 1.0 { s } else { 0.0 };
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        let mc = mean * box_vol;
        let stderr = (var / n as f64).sqrt() * box_vol;
        let quad = integrate_ball(|s| s, &GroupPoint::identity(1), 1.0, 160);
        assert!(
            (quad - mc).abs() < 3.0 * stderr + 0.01 * mc,
            "quad {quad} vs mc {mc} +- {stderr}"
        );
    }

    #[test]
    fn radial_comparability() {
        // int_{B(0,a)} f(|eta|) vs int_0^{a^2} f(sqrt(r)) r^N dr are comparable.
        let q = 4.0;
        let alpha = 1.0;
        let f = |s: f64| (1.0 + s).powf(-q - alpha);
        for &a in &[0.5, 1.0, 2.0] {
            let lhs = integrate_ball(f, &GroupPoint::identity(1), a, 120);
            // 1D side by midpoint rule.
            let m = 4000;
            let h = a * a / m as f64;
            let mut rhs = 0.0;
            for k in 0..m {
                let r = (k as f64 + 0.5) * h;
                rhs += f(r.sqrt()) * r * h;
            }
            let ratio = lhs / rhs;
            assert!(
                (0.1..=10.0).contains(&ratio),
                "a={a}: comparability ratio {ratio}"
            );
        }
    }
}
