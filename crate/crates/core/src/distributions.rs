//! Entry laws for the noise matrix, reproducible sampling, and the
//! kappa-controlled second moment check.
//!
//! A law `alpha` has kappa-controlled second moment when `E|alpha|^2 <= kappa`
//! and, for all complex `z, w`,
//!
//! ```text
//! E[ Re(z*alpha - w)^2 ; |alpha| <= kappa ]  >=  Re(z)^2 / kappa.
//! ```
//!
//! The check evaluates the left side exactly on atoms and by a fixed-seed
//! Monte Carlo average for continuous laws, over a finite grid of `(z, w)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::{Stream, Substream};

/// A point mass of a discrete law. `im` defaults to zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    pub p: f64,
}

impl Atom {
    pub fn real(value: f64, p: f64) -> Self {
        Atom { re: value, im: 0.0, p }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// The families of entry laws the lab ships.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionKind {
    /// Standard real Gaussian.
    Gaussian,
    /// Uniform on {-1, +1}.
    Bernoulli,
    /// 0 with probability `p`, and +1 or -1 each with probability (1-p)/2.
    ZeroPmOne { p: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Standard Gaussian conditioned on `|g| <= cutoff` (not rescaled).
    TruncatedGaussian { cutoff: f64 },
    /// `a` with probability `p`, `b` otherwise.
    TwoPoint { a: f64, b: f64, p: f64 },
    /// Arbitrary finite law, possibly complex.
    Atoms { atoms: Vec<Atom> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntryDistribution {
    kind: DistributionKind,
    mean: Complex64,
    variance: f64,
    second_moment: f64,
    atoms: Option<Vec<Atom>>,
    name: String,
}

impl EntryDistribution {
    pub fn new(kind: DistributionKind) -> Result<Self> {
        let cfg = |msg: String| Err(Error::Config(msg));
        let (atoms, name): (Option<Vec<Atom>>, String) = match &kind {
            DistributionKind::Gaussian => (None, "gaussian".into()),
            DistributionKind::Bernoulli => (
                Some(vec![Atom::real(-1.0, 0.5), Atom::real(1.0, 0.5)]),
                "bernoulli".into(),
            ),
            &DistributionKind::ZeroPmOne { p } => {
                if !(0.0..1.0).contains(&p) {
                    return cfg(format!("zero_pm_one needs 0 <= p < 1, got {p}"));
                }
                let q = (1.0 - p) / 2.0;
                (
                    Some(vec![Atom::real(-1.0, q), Atom::real(0.0, p), Atom::real(1.0, q)]),
                    format!("zero_pm_one({p})"),
                )
            }
            &DistributionKind::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return cfg(format!("uniform needs finite lo < hi, got [{lo}, {hi}]"));
                }
                (None, format!("uniform({lo},{hi})"))
            }
            &DistributionKind::TruncatedGaussian { cutoff } => {
                if !(cutoff.is_finite() && cutoff > 0.0) {
                    return cfg(format!("truncated_gaussian needs cutoff > 0, got {cutoff}"));
                }
                (None, format!("truncated_gaussian({cutoff})"))
            }
            &DistributionKind::TwoPoint { a, b, p } => {
                if !(a.is_finite() && b.is_finite() && (0.0..=1.0).contains(&p)) {
                    return cfg(format!("two_point needs finite a, b and p in [0,1]; got ({a}, {b}, {p})"));
                }
                (
                    Some(vec![Atom::real(a, p), Atom::real(b, 1.0 - p)]),
                    format!("two_point({a},{b},{p})"),
                )
            }
            DistributionKind::Atoms { atoms } => {
                if atoms.is_empty() {
                    return cfg("atoms list is empty".into());
                }
                if atoms
                    .iter()
                    .any(|a| !(a.re.is_finite() && a.im.is_finite() && a.p >= 0.0 && a.p.is_finite()))
                {
                    return cfg("atoms need finite values and nonnegative probabilities".into());
                }
                let total: f64 = atoms.iter().map(|a| a.p).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return cfg(format!("atom probabilities sum to {total}, expected 1"));
                }
                (Some(atoms.clone()), format!("atoms[{}]", atoms.len()))
            }
        };

        let (mean, variance, second_moment) = match (&kind, &atoms) {
            (_, Some(atoms)) => {
                let mean: Complex64 = atoms.iter().map(|a| a.value() * a.p).sum();
                let second: f64 = atoms.iter().map(|a| a.value().norm_sqr() * a.p).sum();
                let var: f64 = atoms.iter().map(|a| (a.value() - mean).norm_sqr() * a.p).sum();
                (mean, var, second)
            }
            (DistributionKind::Gaussian, None) => (Complex64::new(0.0, 0.0), 1.0, 1.0),
            (&DistributionKind::Uniform { lo, hi }, None) => {
                let m = 0.5 * (lo + hi);
                let v = (hi - lo).powi(2) / 12.0;
                (Complex64::new(m, 0.0), v, v + m * m)
            }
            (&DistributionKind::TruncatedGaussian { cutoff }, None) => {
                let v = truncated_gaussian_variance(cutoff);
                (Complex64::new(0.0, 0.0), v, v)
            }
            _ => unreachable!("discrete kinds always carry atoms"),
        };

        Ok(EntryDistribution {
            kind,
            mean,
            variance,
            second_moment,
            atoms,
            name,
        })
    }

    pub fn gaussian() -> Self {
        Self::new(DistributionKind::Gaussian).expect("valid law")
    }

    pub fn bernoulli() -> Self {
        Self::new(DistributionKind::Bernoulli).expect("valid law")
    }

    pub fn atoms(atoms: Vec<Atom>) -> Result<Self> {
        Self::new(DistributionKind::Atoms { atoms })
    }

    pub fn kind(&self) -> &DistributionKind {
        &self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Real part of the mean.
    pub fn mean(&self) -> f64 {
        self.mean.re
    }

    pub fn complex_mean(&self) -> Complex64 {
        self.mean
    }

    /// `E|alpha - E alpha|^2`.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// `E|alpha|^2`.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn discrete_atoms(&self) -> Option<&[Atom]> {
        self.atoms.as_deref()
    }

    pub fn is_discrete(&self) -> bool {
        self.atoms.is_some()
    }

    pub fn is_real(&self) -> bool {
        self.atoms
            .as_ref()
            .map_or(true, |atoms| atoms.iter().all(|a| a.im == 0.0))
    }

    pub(crate) fn require_real(&self) -> Result<()> {
        if self.is_real() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "law {} has complex atoms; real-valued sampling is unsupported",
                self.name
            )))
        }
    }

    /// Same law multiplied by `e^{i theta}`. Only defined for discrete laws.
    pub fn rotated(&self, theta: f64) -> Result<Self> {
        let atoms = self.atoms.as_ref().ok_or_else(|| {
            Error::Config(format!("rotation of continuous law {} is unsupported", self.name))
        })?;
        let phase = Complex64::from_polar(1.0, theta);
        let rotated = atoms
            .iter()
            .map(|a| {
                let v = a.value() * phase;
                Atom { re: v.re, im: v.im, p: a.p }
            })
            .collect();
        Self::atoms(rotated)
    }

    /// One real draw. Callers must have checked `is_real`.
    #[inline]
    pub fn draw(&self, stream: &mut Stream) -> f64 {
        match &self.kind {
            DistributionKind::Gaussian => stream.standard_normal(),
            DistributionKind::Bernoulli => {
                if stream.next_u32() >> 31 == 0 {
                    -1.0
                } else {
                    1.0
                }
            }
            DistributionKind::Uniform { lo, hi } => lo + (hi - lo) * stream.uniform(),
            &DistributionKind::TruncatedGaussian { cutoff } => {
                let normal = Normal::standard();
                let lo = normal.cdf(-cutoff);
                let hi = normal.cdf(cutoff);
                let u = lo + (hi - lo) * stream.uniform_open0();
                normal.inverse_cdf(u).clamp(-cutoff, cutoff)
            }
            _ => self.draw_atom(stream).re,
        }
    }

    /// One complex draw; real laws return a zero imaginary part.
    pub fn draw_complex(&self, stream: &mut Stream) -> Complex64 {
        if self.atoms.is_some() {
            self.draw_atom(stream)
        } else {
            Complex64::new(self.draw(stream), 0.0)
        }
    }

    fn draw_atom(&self, stream: &mut Stream) -> Complex64 {
        let atoms = self.atoms.as_ref().expect("discrete law");
        let u = stream.uniform();
        let mut acc = 0.0;
        for a in atoms {
            acc += a.p;
            if u < acc {
                return a.value();
            }
        }
        // Rounding in the cumulative sum: fall back to the last atom with mass.
        atoms
            .iter()
            .rev()
            .find(|a| a.p > 0.0)
            .map(Atom::value)
            .unwrap_or_default()
    }
}

fn truncated_gaussian_variance(cutoff: f64) -> f64 {
    let normal = Normal::standard();
    let density = (-0.5 * cutoff * cutoff).exp() / (TAU).sqrt();
    let mass = normal.cdf(cutoff) - normal.cdf(-cutoff);
    1.0 - 2.0 * cutoff * density / mass
}

/// `count` iid real draws from `dist` under `seed`.
pub fn sample(dist: &EntryDistribution, seed: u64, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::Input("sample count must be at least 1".into()));
    }
    dist.require_real()?;
    let mut stream = Stream::new(seed, Substream::SEQUENCE);
    Ok((0..count).map(|_| dist.draw(&mut stream)).collect())
}

/// Search grid for the kappa-control inequality.
///
/// `z` ranges over `phases` equally spaced angles times each entry of
/// `scales`; `w` over a `w_points x w_points` lattice on the square
/// `[-2 kappa, 2 kappa]^2` restricted to the disk `|w| <= 2 kappa`. The left
/// side only depends on `Re(w)`, so lattice columns collapse to one value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaGrid {
    pub phases: usize,
    pub scales: Vec<f64>,
    pub w_points: usize,
    /// Relative slack on the `1/kappa` threshold.
    pub rel_tol: f64,
    /// Sample count for continuous laws.
    pub mc_samples: usize,
    pub audit_seed: u64,
}

impl Default for KappaGrid {
    fn default() -> Self {
        KappaGrid {
            phases: 64,
            scales: vec![0.25, 0.5, 1.0],
            w_points: 33,
            rel_tol: 1e-3,
            mc_samples: 1_000_000,
            audit_seed: 0xA0D1_7000,
        }
    }
}

impl KappaGrid {
    fn validate(&self) -> Result<()> {
        if self.phases == 0 || self.scales.is_empty() || self.w_points == 0 {
            return Err(Error::Input("kappa grid is empty".into()));
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Input("kappa grid scales must be positive".into()));
        }
        Ok(())
    }

    fn w_real_parts(&self, kappa: f64) -> Vec<f64> {
        let radius = 2.0 * kappa;
        if self.w_points == 1 {
            return vec![0.0];
        }
        let step = 2.0 * radius / (self.w_points - 1) as f64;
        (0..self.w_points).map(|k| -radius + step * k as f64).collect()
    }
}

/// Outcome of one kappa-control check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub kappa: f64,
    pub passed: bool,
    /// Grid point `(z, w)` minimizing `E Re(z a - w)^2 1(|a|<=kappa) / Re(z)^2`.
    pub worst_pair: (Complex64, Complex64),
    /// Minimum ratio over the grid.
    pub min_ratio: f64,
    /// `min_ratio - 1/kappa`.
    pub margin: f64,
    pub second_moment: f64,
}

/// Moments of (Re a, Im a) restricted to the event `|a| <= kappa`.
#[derive(Clone, Copy, Debug, Default)]
struct TruncatedMoments {
    mass: f64,
    re: f64,
    im: f64,
    re_re: f64,
    re_im: f64,
    im_im: f64,
}

impl TruncatedMoments {
    fn add(&mut self, value: Complex64, weight: f64) {
        self.mass += weight;
        self.re += weight * value.re;
        self.im += weight * value.im;
        self.re_re += weight * value.re * value.re;
        self.re_im += weight * value.re * value.im;
        self.im_im += weight * value.im * value.im;
    }

    /// `E[(Re(z a) - u)^2 ; |a| <= kappa]` with `Re(z a) = x Re a - y Im a`.
    fn quadratic(&self, z: Complex64, u: f64) -> f64 {
        let (x, y) = (z.re, z.im);
        x * x * self.re_re - 2.0 * x * y * self.re_im + y * y * self.im_im
            - 2.0 * u * (x * self.re - y * self.im)
            + u * u * self.mass
    }
}

/// Either the atoms or a fixed Monte Carlo sample standing in for the law.
enum Support {
    Atoms(Vec<Atom>),
    Samples(Vec<f64>),
}

impl Support {
    fn of(dist: &EntryDistribution, grid: &KappaGrid) -> Result<Self> {
        match dist.discrete_atoms() {
            Some(atoms) => Ok(Support::Atoms(atoms.to_vec())),
            None => {
                let n = grid.mc_samples.max(1);
                let mut stream = Stream::new(grid.audit_seed, Substream::AUDIT);
                Ok(Support::Samples((0..n).map(|_| dist.draw(&mut stream)).collect()))
            }
        }
    }

    fn second_moment(&self) -> f64 {
        match self {
            Support::Atoms(atoms) => atoms.iter().map(|a| a.p * a.value().norm_sqr()).sum(),
            Support::Samples(xs) => xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64,
        }
    }

    fn truncated(&self, kappa: f64) -> TruncatedMoments {
        let mut m = TruncatedMoments::default();
        let limit = kappa * (1.0 + 1e-12);
        match self {
            Support::Atoms(atoms) => {
                for a in atoms {
                    if a.value().norm() <= limit {
                        m.add(a.value(), a.p);
                    }
                }
            }
            Support::Samples(xs) => {
                let w = 1.0 / xs.len() as f64;
                for &x in xs {
                    if x.abs() <= limit {
                        m.add(Complex64::new(x, 0.0), w);
                    }
                }
            }
        }
        m
    }
}

fn evaluate_grid(
    moments: &TruncatedMoments,
    second_moment: f64,
    kappa: f64,
    rotation: Complex64,
    grid: &KappaGrid,
) -> KappaReport {
    let ws = grid.w_real_parts(kappa);
    let mut best = (f64::INFINITY, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    for k in 0..grid.phases {
        let phase = Complex64::from_polar(1.0, TAU * k as f64 / grid.phases as f64);
        for &scale in &grid.scales {
            let z = phase * scale;
            let re2 = z.re * z.re;
            // Re(z) = 0 makes the inequality read `>= 0`, which always holds.
            if re2 <= 1e-12 * scale * scale {
                continue;
            }
            let zr = z * rotation;
            for &u in &ws {
                let ratio = moments.quadratic(zr, u) / re2;
                if ratio < best.0 {
                    best = (ratio, z, Complex64::new(u, 0.0));
                }
            }
        }
    }
    let (min_ratio, z, w) = best;
    let threshold = (1.0 - grid.rel_tol) / kappa;
    let passed = second_moment <= kappa * (1.0 + 1e-12) && min_ratio >= threshold;
    KappaReport {
        kappa,
        passed,
        worst_pair: (z, w),
        min_ratio,
        margin: min_ratio - 1.0 / kappa,
        second_moment,
    }
}

/// Checks whether `dist` has `kappa`-controlled second moment on `grid`.
pub fn check_kappa_control(dist: &EntryDistribution, kappa: f64, grid: &KappaGrid) -> Result<KappaReport> {
    if !(kappa.is_finite() && kappa >= 1.0) {
        return Err(Error::Input(format!("kappa must be >= 1, got {kappa}")));
    }
    grid.validate()?;
    let support = Support::of(dist, grid)?;
    let second = support.second_moment();
    if !second.is_finite() {
        return Err(Error::Evaluation(format!(
            "second moment estimate of {} is not finite",
            dist.name()
        )));
    }
    let moments = support.truncated(kappa);
    Ok(evaluate_grid(&moments, second, kappa, Complex64::new(1.0, 0.0), grid))
}

/// Candidate kappa values tried by [`find_controlling_phase`], ascending.
pub const KAPPA_LADDER: [f64; 19] = [
    1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 16.0, 20.0, 24.0, 32.0, 40.0, 48.0,
    64.0,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub theta: f64,
    pub kappa: f64,
    pub report: KappaReport,
}

/// Grid search for a phase `e^{i theta}` and the smallest ladder kappa such
/// that `e^{i theta} alpha` is kappa-controlled.
///
/// Phases are `theta_k = -pi/2 + pi (k+1) / resolution`, covering the
/// half-turn `(-pi/2, pi/2]`; a half turn suffices because negating the
/// law does not change the condition. Among passing phases at the smallest
/// kappa the one with the largest margin wins.
pub fn find_controlling_phase(
    dist: &EntryDistribution,
    resolution: usize,
    grid: &KappaGrid,
) -> Result<PhaseReport> {
    if resolution == 0 {
        return Err(Error::Input("phase resolution must be positive".into()));
    }
    let var = dist.variance();
    if !(var.is_finite() && var > 0.0) {
        return Err(Error::Input(format!(
            "law {} must have finite non-zero variance, got {var}",
            dist.name()
        )));
    }
    grid.validate()?;
    let support = Support::of(dist, grid)?;
    let second = support.second_moment();
    if !second.is_finite() {
        return Err(Error::Evaluation("second moment estimate is not finite".into()));
    }
    let thetas: Vec<f64> = (0..resolution)
        .map(|k| -FRAC_PI_2 + PI * (k + 1) as f64 / resolution as f64)
        .collect();

    let mut best_fail: Option<(f64, f64, f64)> = None;
    for &kappa in KAPPA_LADDER.iter() {
        let moments = support.truncated(kappa);
        let mut winner: Option<PhaseReport> = None;
        for &theta in &thetas {
            let report = evaluate_grid(&moments, second, kappa, Complex64::from_polar(1.0, theta), grid);
            if report.passed {
                if winner.as_ref().map_or(true, |w| report.margin > w.report.margin) {
                    winner = Some(PhaseReport { theta, kappa, report });
                }
            } else if best_fail.map_or(true, |(_, _, m)| report.margin > m) {
                best_fail = Some((theta, kappa, report.margin));
            }
        }
        if let Some(w) = winner {
            return Ok(w);
        }
    }
    let (best_theta, best_kappa, best_margin) = best_fail.unwrap_or((0.0, f64::NAN, f64::NAN));
    Err(Error::SearchFailure {
        best_theta,
        best_kappa,
        best_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn bernoulli_support() {
        let xs = sample(&EntryDistribution::bernoulli(), 1, 4).unwrap();
        assert!(xs.iter().all(|&x| x == 1.0 || x == -1.0));
    }

    #[test]
    fn gaussian_variance_lln() {
        let xs = sample(&EntryDistribution::gaussian(), 11, 1_000_000).unwrap();
        let (_, v) = mean_var(&xs);
        assert!((0.99..=1.01).contains(&v), "variance {v}");
    }

    #[test]
    fn two_point_mean_is_zero() {
        let d = EntryDistribution::new(DistributionKind::TwoPoint { a: 3.0, b: -1.0, p: 0.25 }).unwrap();
        assert_eq!(d.mean(), 0.0);
        let xs = sample(&d, 5, 1_000_000).unwrap();
        let (m, _) = mean_var(&xs);
        assert!((-0.01..=0.01).contains(&m), "mean {m}");
    }

    #[test]
    fn declared_moments_match_samples() {
        let laws = [
            DistributionKind::Gaussian,
            DistributionKind::Bernoulli,
            DistributionKind::ZeroPmOne { p: 1.0 / 3.0 },
            DistributionKind::Uniform { lo: -1.0, hi: 2.0 },
            DistributionKind::TruncatedGaussian { cutoff: 1.5 },
            DistributionKind::TwoPoint { a: 3.0, b: -1.0, p: 0.25 },
        ];
        let count = 200_000;
        for kind in laws {
            let d = EntryDistribution::new(kind).unwrap();
            let xs = sample(&d, 3, count).unwrap();
            let (m, v) = mean_var(&xs);
            let bound = 4.0 * d.variance().sqrt() / (count as f64).sqrt();
            assert!((m - d.mean()).abs() <= bound, "{}: mean {m} vs {}", d.name(), d.mean());
            assert!((v - d.variance()).abs() <= 0.02 * d.variance(), "{}: var {v}", d.name());
        }
    }

    #[test]
    fn truncated_gaussian_stays_inside() {
        let d = EntryDistribution::new(DistributionKind::TruncatedGaussian { cutoff: 0.7 }).unwrap();
        assert!(sample(&d, 2, 10_000).unwrap().iter().all(|x| x.abs() <= 0.7));
    }

    #[test]
    fn invalid_laws_are_config_errors() {
        let bad = [
            DistributionKind::ZeroPmOne { p: 1.5 },
            DistributionKind::Uniform { lo: 1.0, hi: 1.0 },
            DistributionKind::TruncatedGaussian { cutoff: 0.0 },
            DistributionKind::Atoms { atoms: vec![Atom::real(1.0, 0.4)] },
            DistributionKind::Atoms { atoms: vec![Atom::real(1.0, 1.5), Atom::real(0.0, -0.5)] },
        ];
        for kind in bad {
            assert!(matches!(EntryDistribution::new(kind), Err(Error::Config(_))));
        }
    }

    #[test]
    fn complex_atoms_cannot_be_sampled_as_reals() {
        let d = EntryDistribution::atoms(vec![
            Atom { re: 0.0, im: 1.0, p: 0.5 },
            Atom { re: 0.0, im: -1.0, p: 0.5 },
        ])
        .unwrap();
        assert!(matches!(sample(&d, 1, 3), Err(Error::Config(_))));
        assert!(matches!(sample(&EntryDistribution::bernoulli(), 1, 0), Err(Error::Input(_))));
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = EntryDistribution::gaussian();
        assert_eq!(sample(&d, 99, 1000).unwrap(), sample(&d, 99, 1000).unwrap());
    }

    #[test]
    fn bernoulli_is_one_controlled() {
        let r = check_kappa_control(&EntryDistribution::bernoulli(), 1.0, &KappaGrid::default()).unwrap();
        assert!(r.passed, "{r:?}");
        assert!((r.min_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_zero_fails() {
        let d = EntryDistribution::atoms(vec![Atom::real(0.0, 1.0)]).unwrap();
        let r = check_kappa_control(&d, 10.0, &KappaGrid::default()).unwrap();
        assert!(!r.passed);
        assert_eq!(r.min_ratio, 0.0);
    }

    // Brute-force oracle: enumerate atoms and a dense (z, w) grid directly
    // from the defining expectation, no moment algebra.
    fn brute_force_min_ratio(atoms: &[Atom], kappa: f64) -> f64 {
        let mut best = f64::INFINITY;
        for k in 0..720 {
            let z = Complex64::from_polar(1.0, TAU * k as f64 / 720.0);
            if z.re.abs() < 1e-3 {
                continue;
            }
            for j in 0..=400 {
                let w = Complex64::new(-2.0 * kappa + 4.0 * kappa * j as f64 / 400.0, 0.3);
                let lhs: f64 = atoms
                    .iter()
                    .filter(|a| a.value().norm() <= kappa)
                    .map(|a| a.p * (z * a.value() - w).re.powi(2))
                    .sum();
                best = best.min(lhs / (z.re * z.re));
            }
        }
        best
    }

    #[test]
    fn zero_pm_one_third_is_two_controlled() {
        let d = EntryDistribution::new(DistributionKind::ZeroPmOne { p: 1.0 / 3.0 }).unwrap();
        let oracle = brute_force_min_ratio(d.discrete_atoms().unwrap(), 2.0);
        assert!(oracle >= 0.5, "oracle minimum {oracle}");
        let r = check_kappa_control(&d, 2.0, &KappaGrid::default()).unwrap();
        assert!(r.passed);
        assert!((r.min_ratio - oracle).abs() < 1e-9, "{} vs {oracle}", r.min_ratio);
    }

    #[test]
    fn kappa_precondition() {
        let g = KappaGrid::default();
        assert!(matches!(
            check_kappa_control(&EntryDistribution::bernoulli(), 0.5, &g),
            Err(Error::Input(_))
        ));
        let empty = KappaGrid { scales: vec![], ..KappaGrid::default() };
        assert!(check_kappa_control(&EntryDistribution::bernoulli(), 1.0, &empty).is_err());
    }

    #[test]
    fn bernoulli_phase_is_zero() {
        let r = find_controlling_phase(&EntryDistribution::bernoulli(), 128, &KappaGrid::default()).unwrap();
        assert_eq!(r.kappa, 1.0);
        assert!(r.theta.abs() < 1e-12, "theta {}", r.theta);
    }

    #[test]
    fn imaginary_bernoulli_rotates_by_quarter_turn() {
        let d = EntryDistribution::atoms(vec![
            Atom { re: 0.0, im: 1.0, p: 0.5 },
            Atom { re: 0.0, im: -1.0, p: 0.5 },
        ])
        .unwrap();
        let r = find_controlling_phase(&d, 128, &KappaGrid::default()).unwrap();
        assert!((r.theta - FRAC_PI_2).abs() <= PI / 128.0, "theta {}", r.theta);
        assert_eq!(r.kappa, 1.0);
    }

    #[test]
    fn diagonal_atoms_rotate_onto_real_axis() {
        let d = EntryDistribution::atoms(vec![
            Atom { re: 1.0, im: 1.0, p: 0.5 },
            Atom { re: -1.0, im: -1.0, p: 0.5 },
        ])
        .unwrap();
        let r = find_controlling_phase(&d, 128, &KappaGrid::default()).unwrap();
        assert!((r.theta + PI / 4.0).abs() <= PI / 128.0, "theta {}", r.theta);
        // Independent confirmation via the rotated law.
        let rotated = d.rotated(r.theta).unwrap();
        assert!(check_kappa_control(&rotated, r.kappa, &KappaGrid::default()).unwrap().passed);
    }

    #[test]
    fn zero_variance_has_no_phase() {
        let d = EntryDistribution::atoms(vec![Atom::real(0.0, 1.0)]).unwrap();
        assert!(matches!(
            find_controlling_phase(&d, 16, &KappaGrid::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn shipped_laws_are_controlled() {
        let grid = KappaGrid { mc_samples: 200_000, ..KappaGrid::default() };
        let laws = [
            EntryDistribution::gaussian(),
            EntryDistribution::bernoulli(),
            EntryDistribution::new(DistributionKind::Uniform { lo: -3f64.sqrt(), hi: 3f64.sqrt() }).unwrap(),
            EntryDistribution::new(DistributionKind::TwoPoint { a: 3.0, b: -1.0, p: 0.25 }).unwrap(),
        ];
        for d in laws {
            let r = find_controlling_phase(&d, 32, &grid).unwrap();
            assert!(r.kappa <= 64.0, "{}: {r:?}", d.name());
        }
    }
}
