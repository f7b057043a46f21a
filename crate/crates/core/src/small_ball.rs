//! Anti-concentration of weighted sums `S = xi_1 v_1 + ... + xi_n v_n` with
//! iid entries `xi_j`: the small-ball probability
//! `sup_z P(|S - z| <= eps)` computed exactly (discrete laws), by Monte
//! Carlo, and bounded above through the characteristic function.
//!
//! Weights may be complex; the product `xi_j v_j` is the plain bilinear one.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::distributions::{Atom, DistributionKind, EntryDistribution};
use crate::error::{Error, Result};
use crate::rng::{Stream, Substream};
use crate::stats::clopper_pearson;

/// Largest support (after merging equal sums) the exact enumeration accepts.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 1 << 24;

/// Constant in front of the Fourier integral. Calibrated once on the frozen
/// instance set from [`calibration_instances`] with seed
/// [`CALIBRATION_SEED`]: 1.25 times the largest observed ratio
/// `exact / (r^2 Q)`.
pub const DEFAULT_ESSEEN_C: f64 = 1.47;

pub const CALIBRATION_SEED: u64 = 0xCA11_B8A7E;

/// Sums closer than this (relative to `sum |v_j| max|atom|`) are the same point.
const MERGE_TOL: f64 = 1e-12;
const LEVY_MC_PAIRS: usize = 100_000;
const LEVY_AUDIT_SEED: u64 = 0x1E_5700;
const MC_LEVEL: f64 = 0.95;
const QUAD_REL_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Mc,
    FourierBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallBallResult {
    pub v: Vec<Complex64>,
    pub eps: f64,
    pub rho: f64,
    pub z_star: Complex64,
    pub method: Method,
    /// Interval for the supremum. Collapses to `rho` for exact results.
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: Option<usize>,
    /// Fourier only: the bound exceeded one and `rho` was clamped.
    pub clamped: bool,
    /// Fourier only: `esseen_c r^2 Q` before clamping.
    pub raw_bound: Option<f64>,
    /// Fourier only: the same integral with the Gaussian-type majorant
    /// `exp(-4 sum ||w v_j||_j^2)` in place of the characteristic functions.
    pub surrogate: Option<f64>,
}

impl SmallBallResult {
    fn exact(v: &[Complex64], eps: f64, rho: f64, z_star: Complex64) -> Self {
        let rho = rho.clamp(0.0, 1.0);
        SmallBallResult {
            v: v.to_vec(),
            eps,
            rho,
            z_star,
            method: Method::Exact,
            ci_low: rho,
            ci_high: rho,
            trials: None,
            clamped: false,
            raw_bound: None,
            surrogate: None,
        }
    }
}

/// Real weights as complex ones.
pub fn real_weights(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

fn check_weights(v: &[Complex64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Input("weight vector is empty".into()));
    }
    if v.iter().any(|w| !(w.re.is_finite() && w.im.is_finite())) {
        return Err(Error::Input("weight vector has non-finite entries".into()));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::Input(format!("radius must be >= 0, got {eps}")));
    }
    Ok(())
}

fn real_problem(dist: &EntryDistribution, v: &[Complex64]) -> bool {
    dist.is_real() && v.iter().all(|w| w.im == 0.0)
}

fn atom_scale(atoms: &[Atom], v: &[Complex64]) -> f64 {
    let amax = atoms.iter().map(|a| a.value().norm()).fold(0.0, f64::max);
    let s = amax * v.iter().map(|w| w.norm()).sum::<f64>();
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Sort by real part, then collapse points within `tol` of each other.
/// Probabilities are summed in sorted order, so the result is deterministic.
fn merge_points(mut pts: Vec<(Complex64, f64)>, tol: f64) -> Vec<(Complex64, f64)> {
    let key = |a: &(Complex64, f64), b: &(Complex64, f64)| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im));
    pts.sort_by(key);
    let mut out = Vec::with_capacity(pts.len());
    let mut i = 0;
    while i < pts.len() {
        let mut j = i + 1;
        while j < pts.len() && pts[j].0.re - pts[j - 1].0.re <= tol {
            j += 1;
        }
        let band = &mut pts[i..j];
        if band.len() > 1 {
            band.sort_by(|a, b| a.0.im.total_cmp(&b.0.im).then(a.0.re.total_cmp(&b.0.re)));
        }
        let mut cur = band[0];
        let mut prev_im = cur.0.im;
        for q in &band[1..] {
            if q.0.im - prev_im <= tol {
                cur.1 += q.1;
            } else {
                out.push(cur);
                cur = *q;
            }
            prev_im = q.0.im;
        }
        out.push(cur);
        i = j;
    }
    out.sort_by(key);
    out
}

/// Law of `S` for a discrete entry law, with equal sums merged.
fn sum_distribution(atoms: &[Atom], v: &[Complex64], budget: u64) -> Result<Vec<(Complex64, f64)>> {
    let live: Vec<&Atom> = atoms.iter().filter(|a| a.p > 0.0).collect();
    let k = live.len() as u64;
    let nonzero = v.iter().filter(|w| **w != Complex64::new(0.0, 0.0)).count();
    let refuse = || Error::BudgetExceeded {
        required: (k as f64).powi(nonzero as i32),
        budget,
    };
    let tol = MERGE_TOL * atom_scale(atoms, v);
    let mut sums = vec![(Complex64::new(0.0, 0.0), 1.0)];
    for &w in v {
        if w == Complex64::new(0.0, 0.0) {
            continue;
        }
        if sums.len() as u64 * k > budget {
            return Err(refuse());
        }
        let mut next = Vec::with_capacity(sums.len() * live.len());
        for &(s, p) in &sums {
            for a in &live {
                next.push((s + a.value() * w, p * a.p));
            }
        }
        sums = merge_points(next, tol);
    }
    Ok(sums)
}

/// Heaviest closed interval of length `2 eps` over points sorted by real part.
fn best_interval(pts: &[(f64, f64)], eps: f64, tol: f64) -> (f64, f64) {
    let mut prefix = Vec::with_capacity(pts.len() + 1);
    prefix.push(0.0);
    for &(_, p) in pts {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + p);
    }
    let width = 2.0 * eps + tol;
    let (mut best, mut center) = (-1.0, pts[0].0);
    let mut r = 0;
    for i in 0..pts.len() {
        r = r.max(i + 1);
        while r < pts.len() && pts[r].0 - pts[i].0 <= width {
            r += 1;
        }
        let mass = prefix[r] - prefix[i];
        if mass > best {
            best = mass;
            center = 0.5 * (pts[i].0 + pts[r - 1].0);
        }
    }
    (best, center)
}

/// Heaviest closed disk of radius `eps`. Centers: every point, plus the two
/// centers through each pair of points at distance at most `2 eps`.
fn best_disk(pts: &[(Complex64, f64)], eps: f64, tol: f64) -> (f64, Complex64) {
    let radius = eps + tol;
    let mass_at = |c: Complex64| -> f64 {
        let lo = pts.partition_point(|q| q.0.re < c.re - radius);
        pts[lo..]
            .iter()
            .take_while(|q| q.0.re <= c.re + radius)
            .filter(|q| (q.0 - c).norm() <= radius)
            .map(|q| q.1)
            .sum()
    };
    let (mut best, mut center) = (-1.0, pts[0].0);
    let mut consider = |c: Complex64| {
        let m = mass_at(c);
        if m > best {
            best = m;
            center = c;
        }
    };
    for (i, p) in pts.iter().enumerate() {
        consider(p.0);
        if eps == 0.0 {
            continue;
        }
        for q in pts[i + 1..].iter().take_while(|q| q.0.re - p.0.re <= 2.0 * eps) {
            let d = q.0 - p.0;
            let dn = d.norm();
            if dn == 0.0 || dn > 2.0 * eps {
                continue;
            }
            let mid = p.0 + d * 0.5;
            let h = (eps * eps - 0.25 * dn * dn).max(0.0).sqrt();
            let perp = Complex64::new(-d.im, d.re) / dn * h;
            consider(mid + perp);
            consider(mid - perp);
        }
    }
    (best, center)
}

/// Exact small-ball probability for a discrete law, with the default budget.
pub fn small_ball_exact(dist: &EntryDistribution, v: &[Complex64], eps: f64) -> Result<SmallBallResult> {
    small_ball_exact_with_budget(dist, v, eps, DEFAULT_ENUMERATION_BUDGET)
}

pub fn small_ball_exact_with_budget(
    dist: &EntryDistribution,
    v: &[Complex64],
    eps: f64,
    budget: u64,
) -> Result<SmallBallResult> {
    check_weights(v)?;
    check_eps(eps)?;
    let atoms = dist.discrete_atoms().ok_or_else(|| {
        Error::Input(format!(
            "exact small-ball needs a discrete law; {} is continuous (use the Monte Carlo estimate)",
            dist.name()
        ))
    })?;
    if eps == f64::INFINITY {
        return Ok(SmallBallResult::exact(v, eps, 1.0, Complex64::new(0.0, 0.0)));
    }
    let sums = sum_distribution(atoms, v, budget)?;
    let tol = MERGE_TOL * atom_scale(atoms, v);
    let (rho, z) = if sums.iter().all(|s| s.0.im.abs() <= tol) {
        let line: Vec<(f64, f64)> = sums.iter().map(|s| (s.0.re, s.1)).collect();
        let (m, c) = best_interval(&line, eps, tol);
        (m, Complex64::new(c, 0.0))
    } else {
        best_disk(&sums, eps, tol)
    };
    Ok(SmallBallResult::exact(v, eps, rho, z))
}

/// Monte Carlo estimate of the supremum.
///
/// Real sums: every closed interval of length `2 eps` anchored at a sample is
/// scanned (this contains any finite center grid), and the interval is the
/// Dvoretzky-Kiefer-Wolfowitz band, valid uniformly over intervals.
/// Complex sums: the most frequent sample clusters plus a pitch `eps/4` grid
/// around the best of them, with Bonferroni-corrected Clopper-Pearson.
pub fn small_ball_mc(
    dist: &EntryDistribution,
    v: &[Complex64],
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<SmallBallResult> {
    check_weights(v)?;
    check_eps(eps)?;
    if trials == 0 {
        return Err(Error::Input("small-ball Monte Carlo needs at least one trial".into()));
    }
    let mut result = SmallBallResult {
        v: v.to_vec(),
        eps,
        rho: 1.0,
        z_star: Complex64::new(0.0, 0.0),
        method: Method::Mc,
        ci_low: 1.0,
        ci_high: 1.0,
        trials: Some(trials),
        clamped: false,
        raw_bound: None,
        surrogate: None,
    };
    if eps == f64::INFINITY {
        return Ok(result);
    }

    let mut stream = Stream::new(seed, Substream::SEQUENCE);
    let mut xi_max: f64 = 0.0;
    let samples: Vec<Complex64> = (0..trials)
        .map(|_| {
            v.iter().fold(Complex64::new(0.0, 0.0), |acc, &w| {
                let x = dist.draw_complex(&mut stream);
                xi_max = xi_max.max(x.norm());
                acc + x * w
            })
        })
        .collect();
    let tol = MERGE_TOL * v.iter().map(|w| w.norm()).sum::<f64>() * xi_max.max(1.0);
    let n = trials as f64;

    if real_problem(dist, v) {
        let mut line: Vec<(f64, f64)> = samples.iter().map(|s| (s.re, 1.0)).collect();
        line.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (count, c) = best_interval(&line, eps, tol);
        let band = 2.0 * ((2.0 / (1.0 - MC_LEVEL)).ln() / (2.0 * n)).sqrt();
        result.rho = count / n;
        result.z_star = Complex64::new(c, 0.0);
        result.ci_low = (result.rho - band).max(0.0);
        result.ci_high = (result.rho + band).min(1.0);
        return Ok(result);
    }

    let clusters = merge_points(samples.iter().map(|&s| (s, 1.0)).collect(), tol);
    let mut candidates: Vec<(Complex64, f64)> = clusters.clone();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut centers: Vec<Complex64> = candidates.iter().take(256).map(|c| c.0).collect();
    if eps > 0.0 {
        let head = centers[0];
        for a in -4..=4 {
            for b in -4..=4 {
                if (a, b) != (0, 0) {
                    centers.push(head + Complex64::new(a as f64, b as f64) * (eps / 4.0));
                }
            }
        }
    }
    let radius = eps + tol;
    let (mut best, mut z) = (0.0, centers[0]);
    for &c in &centers {
        let lo = clusters.partition_point(|q| q.0.re < c.re - radius);
        let m: f64 = clusters[lo..]
            .iter()
            .take_while(|q| q.0.re <= c.re + radius)
            .filter(|q| (q.0 - c).norm() <= radius)
            .map(|q| q.1)
            .sum();
        if m > best {
            best = m;
            z = c;
        }
    }
    let hits = best.round() as u64;
    let level = 1.0 - (1.0 - MC_LEVEL) / centers.len() as f64;
    let (lo, hi) = clopper_pearson(hits, trials as u64, level);
    result.rho = best / n;
    result.z_star = z;
    result.ci_low = lo;
    result.ci_high = hi;
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevyNorm {
    pub z: Complex64,
    pub value: f64,
}

fn dist_to_integer(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Law of `xi - xi'` for independent copies, merged.
fn pair_differences(atoms: &[Atom]) -> Vec<(Complex64, f64)> {
    let mut pts = Vec::with_capacity(atoms.len() * atoms.len());
    for a in atoms.iter().filter(|a| a.p > 0.0) {
        for b in atoms.iter().filter(|b| b.p > 0.0) {
            pts.push((a.value() - b.value(), a.p * b.p));
        }
    }
    let scale = atoms.iter().map(|a| a.value().norm()).fold(1.0, f64::max);
    merge_points(pts, MERGE_TOL * scale)
}

fn levy_sq(diffs: &[(Complex64, f64)], z: Complex64) -> f64 {
    diffs
        .iter()
        .map(|&(d, p)| p * dist_to_integer((z * d).re).powi(2))
        .sum()
}

/// `||z|| = (E ||Re(z (xi - xi'))||^2_{R/Z})^{1/2}`: exact over atom pairs,
/// fixed-seed Monte Carlo over pairs for continuous laws.
pub fn levy_norm(dist: &EntryDistribution, z: Complex64) -> LevyNorm {
    let value = match dist.discrete_atoms() {
        Some(atoms) => levy_sq(&pair_differences(atoms), z).max(0.0).sqrt(),
        None => {
            let mut s = Stream::new(LEVY_AUDIT_SEED, Substream::AUDIT);
            let total: f64 = (0..LEVY_MC_PAIRS)
                .map(|_| {
                    let d = dist.draw_complex(&mut s) - dist.draw_complex(&mut s);
                    dist_to_integer((z * d).re).powi(2)
                })
                .sum();
            (total / LEVY_MC_PAIRS as f64).sqrt()
        }
    };
    LevyNorm { z, value }
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite rule with `panels` equal panels on [a, b].
fn composite(rule: &[(f64, f64)], a: f64, b: f64, panels: usize, f: &mut impl FnMut(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let mut acc = 0.0;
        for &(x, w) in rule {
            acc += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * acc;
    }
    total
}

/// `|E e(Re(xi u))|` where `e(x) = exp(2 pi i x)`.
struct CharModulus {
    kind: DistributionKind,
    atoms: Option<Vec<Atom>>,
    rule: Vec<(f64, f64)>,
}

impl CharModulus {
    fn new(dist: &EntryDistribution) -> Self {
        CharModulus {
            kind: dist.kind().clone(),
            atoms: dist.discrete_atoms().map(<[Atom]>::to_vec),
            rule: gauss_legendre(16),
        }
    }

    fn eval(&self, u: Complex64) -> f64 {
        if let Some(atoms) = &self.atoms {
            let s: Complex64 = atoms
                .iter()
                .map(|a| Complex64::from_polar(a.p, TAU * (a.value() * u).re))
                .sum();
            return s.norm().min(1.0);
        }
        let t = u.re;
        match self.kind {
            DistributionKind::Gaussian => (-2.0 * PI * PI * t * t).exp(),
            DistributionKind::Uniform { lo, hi } => {
                let x = PI * (hi - lo) * t;
                if x == 0.0 {
                    1.0
                } else {
                    (x.sin() / x).abs()
                }
            }
            DistributionKind::TruncatedGaussian { cutoff } => {
                let normal = Normal::standard();
                let mass = normal.cdf(cutoff) - normal.cdf(-cutoff);
                let panels = ((4.0 * t.abs() * cutoff).ceil() as usize).max(4);
                let mut f = |x: f64| (-0.5 * x * x).exp() * (TAU * t * x).cos();
                let val = composite(&self.rule, -cutoff, cutoff, panels, &mut f) / (TAU.sqrt() * mass);
                val.abs().min(1.0)
            }
            _ => unreachable!("discrete kinds carry atoms"),
        }
    }
}

/// Integrate `g` over the disk `|w| <= radius` to relative tolerance
/// `QUAD_REL_TOL`. `one_dim` means `g` only depends on `Re(w)`.
fn disk_integral(mut g: impl FnMut(Complex64) -> f64, radius: f64, one_dim: bool, freq: f64) -> Result<f64> {
    let rule = gauss_legendre(8);
    let start = ((freq.ceil() as usize).max(8)).next_power_of_two();
    if one_dim {
        // w = x + iy, x = R sin(theta): the chord length gives 2 R^2 cos^2(theta).
        let mut f = |th: f64| {
            let c = th.cos();
            2.0 * radius * radius * c * c * g(Complex64::new(radius * th.sin(), 0.0))
        };
        let mut panels = start;
        let mut prev = composite(&rule, -PI / 2.0, PI / 2.0, panels, &mut f);
        while panels < 1 << 20 {
            panels *= 2;
            let cur = composite(&rule, -PI / 2.0, PI / 2.0, panels, &mut f);
            let change = (cur - prev).abs();
            if change <= QUAD_REL_TOL * cur.abs() || cur == 0.0 {
                return Ok(cur);
            }
            prev = cur;
        }
        return Err(Error::Numerical(format!(
            "disk quadrature did not reach relative tolerance {QUAD_REL_TOL} with {panels} panels; last value {prev}"
        )));
    }
    let mut panels = start.min(64);
    let polar = |panels: usize, g: &mut dyn FnMut(Complex64) -> f64| {
        let mut outer = |rho: f64| {
            let mut inner = |phi: f64| g(Complex64::from_polar(rho, phi));
            rho * composite(&rule, 0.0, TAU, 2 * panels, &mut inner)
        };
        composite(&rule, 0.0, radius, panels, &mut outer)
    };
    let mut prev = polar(panels, &mut g);
    let mut change = f64::INFINITY;
    while panels < 1 << 9 {
        panels *= 2;
        let cur = polar(panels, &mut g);
        change = (cur - prev).abs();
        if change <= QUAD_REL_TOL * cur.abs() || cur == 0.0 {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Numerical(format!(
        "disk quadrature did not converge: relative change {} above {QUAD_REL_TOL}",
        change / prev.abs()
    )))
}

/// Esseen-type upper bound `esseen_c r^2 Q` with
/// `Q = int_{|w| <= 1/r} prod_j |E e(Re(xi w v_j))| dw`, clamped to one.
pub fn fourier_upper_bound(
    dist: &EntryDistribution,
    v: &[Complex64],
    r: f64,
    esseen_c: f64,
) -> Result<SmallBallResult> {
    check_weights(v)?;
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Input(format!("radius must be positive and finite, got {r}")));
    }
    if !(esseen_c.is_finite() && esseen_c > 0.0) {
        return Err(Error::Input(format!("esseen_c must be positive, got {esseen_c}")));
    }
    let radius = 1.0 / r;
    let one_dim = real_problem(dist, v);
    let spread = match dist.discrete_atoms() {
        Some(atoms) => atoms.iter().map(|a| a.value().norm()).fold(0.0, f64::max),
        None => 4.0 * dist.second_moment().sqrt(),
    };
    let freq = radius * spread * v.iter().map(|w| w.norm()).sum::<f64>();

    let phi = CharModulus::new(dist);
    let q = disk_integral(|w| v.iter().map(|&vj| phi.eval(w * vj)).product(), radius, one_dim, freq)?;
    let surrogate = match dist.discrete_atoms() {
        Some(atoms) => {
            let diffs = pair_differences(atoms);
            let qs = disk_integral(
                |w| (-4.0 * v.iter().map(|&vj| levy_sq(&diffs, w * vj)).sum::<f64>()).exp(),
                radius,
                one_dim,
                freq,
            )?;
            Some(esseen_c * r * r * qs)
        }
        None => None,
    };
    let raw = esseen_c * r * r * q;
    Ok(SmallBallResult {
        v: v.to_vec(),
        eps: r,
        rho: raw.min(1.0),
        z_star: Complex64::new(0.0, 0.0),
        method: Method::FourierBound,
        ci_low: raw.min(1.0),
        ci_high: raw.min(1.0),
        trials: None,
        clamped: raw > 1.0,
        raw_bound: Some(raw),
        surrogate,
    })
}

/// A reproducible set of `(v, r)` pairs: Gaussian, small-integer, spike and
/// flat unit vectors with `n <= 16` and `r` in {0.01, 0.1, 0.5}.
pub fn calibration_instances(seed: u64, count: usize) -> Vec<(Vec<Complex64>, f64)> {
    const RADII: [f64; 3] = [0.01, 0.1, 0.5];
    let mut s = Stream::new(seed, Substream::SEQUENCE);
    (0..count)
        .map(|t| {
            let n = 1 + (s.next_u32() % 16) as usize;
            let raw: Vec<f64> = match t % 4 {
                0 => (0..n).map(|_| s.standard_normal()).collect(),
                1 => (0..n).map(|_| (s.next_u32() % 7) as f64 - 3.0).collect(),
                2 => {
                    let k = 1 + (s.next_u32() as usize % n);
                    (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect()
                }
                _ => (0..n).map(|_| 1.0 + 0.1 * s.standard_normal()).collect(),
            };
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let v = if norm > 0.0 {
                raw.iter().map(|x| x / norm).collect()
            } else {
                let mut e = vec![0.0; n];
                e[0] = 1.0;
                e
            };
            let r = RADII[(s.next_u32() % 3) as usize];
            (real_weights(&v), r)
        })
        .collect()
}

/// Largest `exact / (r^2 Q)` over the instances, for the law `dist`.
pub fn esseen_ratio(dist: &EntryDistribution, instances: &[(Vec<Complex64>, f64)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (v, r) in instances {
        let exact = small_ball_exact(dist, v, *r)?.rho;
        let unit = fourier_upper_bound(dist, v, *r, 1.0)?.raw_bound.unwrap_or(f64::INFINITY);
        worst = worst.max(exact / unit);
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompressibilityVerdict {
    pub a: f64,
    pub b: f64,
    pub compressible: bool,
    /// Best approximant supported on `support` coordinates, when compressible.
    pub witness: Option<Vec<Complex64>>,
    pub support: usize,
    pub distance: f64,
}

/// Is the unit vector `v` within `b` of some vector with at most `a n`
/// nonzero coordinates? The best such vector keeps the largest entries.
pub fn classify_compressible(v: &[Complex64], a: f64, b: f64) -> Result<CompressibilityVerdict> {
    check_weights(v)?;
    let norm = v.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Input(format!("v must be a unit vector, has norm {norm}")));
    }
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::Input(format!("a must lie in (0, 1], got {a}")));
    }
    if !(b.is_finite() && b >= 0.0) {
        return Err(Error::Input(format!("b must be >= 0, got {b}")));
    }
    let n = v.len();
    let k = ((a * n as f64 + 1e-9).floor() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| v[j].norm().total_cmp(&v[i].norm()).then(i.cmp(&j)));
    let distance = order[k..].iter().map(|&i| v[i].norm_sqr()).sum::<f64>().sqrt();
    let compressible = distance <= b + 1e-12;
    let witness = compressible.then(|| {
        let mut w = vec![Complex64::new(0.0, 0.0); n];
        for &i in &order[..k] {
            w[i] = v[i];
        }
        w
    });
    Ok(CompressibilityVerdict {
        a,
        b,
        compressible,
        witness,
        support: k,
        distance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    /// Exact evaluation or a trivial threshold.
    Certain,
    /// The 95% interval lies entirely on one side of the threshold.
    Confident,
    /// The interval straddles the threshold; the verdict is the point estimate.
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RichMembership {
    pub member: bool,
    pub confidence: Confidence,
    pub estimate: Option<SmallBallResult>,
}

/// Whether `sup_z P(|S - z| <= eps) >= rho`. Exact when the law is discrete
/// and the enumeration fits the budget, Monte Carlo otherwise.
pub fn rich_membership(
    dist: &EntryDistribution,
    v: &[Complex64],
    eps: f64,
    rho: f64,
    trials: usize,
    seed: u64,
) -> Result<RichMembership> {
    check_weights(v)?;
    check_eps(eps)?;
    if rho <= 0.0 {
        return Ok(RichMembership {
            member: true,
            confidence: Confidence::Certain,
            estimate: None,
        });
    }
    if dist.is_discrete() {
        match small_ball_exact(dist, v, eps) {
            Ok(est) => {
                return Ok(RichMembership {
                    member: est.rho >= rho,
                    confidence: Confidence::Certain,
                    estimate: Some(est),
                })
            }
            Err(Error::BudgetExceeded { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let est = small_ball_mc(dist, v, eps, trials, seed)?;
    let confidence = if est.ci_low >= rho || est.ci_high < rho {
        Confidence::Confident
    } else {
        Confidence::Inconclusive
    };
    Ok(RichMembership {
        member: est.rho >= rho,
        confidence,
        estimate: Some(est),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::central_binomial_probability;

    fn flat(n: usize) -> Vec<Complex64> {
        real_weights(&vec![1.0 / (n as f64).sqrt(); n])
    }

    fn spike(k: usize, n: usize) -> Vec<Complex64> {
        let h = 1.0 / (k as f64).sqrt();
        real_weights(&(0..n).map(|i| if i < k { h } else { 0.0 }).collect::<Vec<_>>())
    }

    fn bern() -> EntryDistribution {
        EntryDistribution::bernoulli()
    }

    /// Brute force over all sign patterns, real sums only.
    fn brute_force(v: &[f64], eps: f64) -> f64 {
        let n = v.len();
        let mut sums: Vec<f64> = (0..1u32 << n)
            .map(|mask| (0..n).map(|j| if mask >> j & 1 == 1 { v[j] } else { -v[j] }).sum())
            .collect();
        sums.sort_by(f64::total_cmp);
        let p = 1.0 / sums.len() as f64;
        let mut best = 0usize;
        for i in 0..sums.len() {
            let c = sums[i..].iter().take_while(|&&s| s - sums[i] <= 2.0 * eps + 1e-12).count();
            best = best.max(c);
        }
        best as f64 * p
    }

    #[test]
    fn exact_examples() {
        let r = small_ball_exact(&bern(), &flat(2), 0.0).unwrap();
        assert_eq!(r.rho, 0.5);
        assert!(r.z_star.norm() < 1e-15);
        assert_eq!(small_ball_exact(&bern(), &flat(4), 0.0).unwrap().rho, 0.375);
        let e1 = real_weights(&[1.0, 0.0, 0.0]);
        assert_eq!(small_ball_exact(&bern(), &e1, 4.0).unwrap().rho, 1.0);
        for n in (2..=16).step_by(2) {
            assert_eq!(
                small_ball_exact(&bern(), &flat(n), 0.0).unwrap().rho,
                central_binomial_probability(n),
                "n={n}"
            );
        }
    }

    #[test]
    fn exact_matches_brute_force() {
        let mut s = Stream::new(11, Substream::SEQUENCE);
        for t in 0..40 {
            let n = 1 + t % 10;
            let v: Vec<f64> = (0..n).map(|_| s.standard_normal()).collect();
            for eps in [0.0, 0.05, 0.3, 1.0] {
                let got = small_ball_exact(&bern(), &real_weights(&v), eps).unwrap().rho;
                assert_eq!(got, brute_force(&v, eps), "v={v:?} eps={eps}");
            }
        }
    }

    #[test]
    fn exact_refusals() {
        let g = EntryDistribution::gaussian();
        assert!(matches!(small_ball_exact(&g, &flat(3), 0.1), Err(Error::Input(_))));
        let v: Vec<f64> = (0..30).map(|i| 1.0 + i as f64 * 1e-3).collect();
        match small_ball_exact_with_budget(&bern(), &real_weights(&v), 0.0, 1 << 10) {
            Err(Error::BudgetExceeded { required, budget }) => {
                assert_eq!(required, 2f64.powi(30));
                assert_eq!(budget, 1 << 10);
            }
            other => panic!("{other:?}"),
        }
        assert!(small_ball_exact(&bern(), &flat(2), -1.0).is_err());
    }

    #[test]
    fn complex_sums() {
        // xi_1 + i xi_2: four equally likely corners of a square of side 2.
        let v = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        assert_eq!(small_ball_exact(&bern(), &v, 0.0).unwrap().rho, 0.25);
        assert_eq!(small_ball_exact(&bern(), &v, 0.99).unwrap().rho, 0.25);
        // A disk of radius 1 through two adjacent corners.
        assert_eq!(small_ball_exact(&bern(), &v, 1.0).unwrap().rho, 0.5);
        // Radius sqrt(2) centered at the origin takes all four.
        assert_eq!(small_ball_exact(&bern(), &v, 2f64.sqrt()).unwrap().rho, 1.0);
    }

    #[test]
    fn monotone_in_eps() {
        let mut s = Stream::new(5, Substream::SEQUENCE);
        for _ in 0..20 {
            let v: Vec<f64> = (0..8).map(|_| s.standard_normal()).collect();
            let mut last = 0.0;
            for eps in [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
                let rho = small_ball_exact(&bern(), &real_weights(&v), eps).unwrap().rho;
                assert!(rho >= last);
                last = rho;
            }
        }
    }

    #[test]
    fn mc_examples() {
        let g = EntryDistribution::gaussian();
        let e1 = real_weights(&[1.0]);
        let r = small_ball_mc(&g, &e1, 0.1, 100_000, 3).unwrap();
        // 2 Phi(0.1) - 1
        let truth = 0.079_655_674_554_057_6;
        assert!(r.ci_low <= truth && truth <= r.ci_high, "{r:?}");

        let r = small_ball_mc(&bern(), &flat(2), 0.01, 20_000, 4).unwrap();
        assert!(r.ci_low <= 0.5 && 0.5 <= r.ci_high);

        let r = small_ball_mc(&bern(), &flat(3), f64::INFINITY, 10, 4).unwrap();
        assert_eq!(r.rho, 1.0);
        assert!(small_ball_mc(&bern(), &flat(3), 0.1, 0, 4).is_err());

        let v = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let r = small_ball_mc(&bern(), &v, 1.0, 20_000, 9).unwrap();
        assert!(r.ci_low <= 0.5 && 0.5 <= r.ci_high, "{r:?}");
    }

    #[test]
    fn levy_norm_examples() {
        assert!((levy_norm(&bern(), Complex64::new(0.25, 0.0)).value - 0.125f64.sqrt()).abs() < 1e-15);
        assert_eq!(levy_norm(&bern(), Complex64::new(0.5, 0.0)).value, 0.0);
        assert_eq!(levy_norm(&bern(), Complex64::new(0.0, 0.0)).value, 0.0);
        assert_eq!(levy_norm(&EntryDistribution::gaussian(), Complex64::new(0.0, 0.0)).value, 0.0);
    }

    #[test]
    fn levy_norm_properties() {
        let b = bern();
        let grid: Vec<Complex64> = (0..10)
            .flat_map(|i| (0..10).map(move |j| Complex64::new(-1.3 + 0.29 * i as f64, -0.7 + 0.17 * j as f64)))
            .collect();
        for &z in &grid {
            let nz = levy_norm(&b, z).value;
            assert!((0.0..=1.0).contains(&nz));
            assert_eq!(nz, levy_norm(&b, -z).value);
            for &w in grid.iter().step_by(7) {
                assert!(levy_norm(&b, z + w).value <= nz + levy_norm(&b, w).value + 1e-12);
            }
            // Lower bound near the origin with (c0, c1) = (0.2, 1.0).
            if z.norm() <= 0.2 {
                assert!(nz >= z.re.abs());
            }
        }
        for k in 0..=40 {
            let z = Complex64::new(-0.2 + 0.01 * k as f64, 0.05);
            assert!(levy_norm(&b, z).value >= z.re.abs());
        }
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        let rule = gauss_legendre(8);
        let total: f64 = rule.iter().map(|p| p.1).sum();
        assert!((total - 2.0).abs() < 1e-14);
        let m14: f64 = rule.iter().map(|&(x, w)| w * x.powi(14)).sum();
        assert!((m14 - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn fourier_gaussian_closed_form() {
        // |phi(x)| = exp(-2 pi^2 x^2): the chord integral has a closed form
        // up to a one-dimensional quadrature done here with many points.
        let g = EntryDistribution::gaussian();
        let r = 0.5;
        let got = fourier_upper_bound(&g, &real_weights(&[1.0]), r, 1.0).unwrap().raw_bound.unwrap();
        let big = 200_000;
        let h = 4.0 / big as f64;
        let oracle: f64 = (0..big)
            .map(|i| {
                let x = -2.0 + (i as f64 + 0.5) * h;
                2.0 * (4.0 - x * x).sqrt() * (-2.0 * PI * PI * x * x).exp() * h
            })
            .sum::<f64>()
            * r
            * r;
        assert!((got - oracle).abs() < 1e-4 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn fourier_flags_and_surrogate() {
        let r = fourier_upper_bound(&bern(), &flat(4), 10.0, 1.0).unwrap();
        assert!(r.clamped && r.rho == 1.0 && r.raw_bound.unwrap() > 1.0);
        for (v, rad) in calibration_instances(77, 12) {
            let res = fourier_upper_bound(&bern(), &v, rad, 1.0).unwrap();
            assert!(res.surrogate.unwrap() >= res.raw_bound.unwrap() * (1.0 - 1e-3));
        }
        assert!(fourier_upper_bound(&bern(), &flat(2), 0.0, 1.0).is_err());
        assert!(fourier_upper_bound(&bern(), &flat(2), 0.1, 0.0).is_err());
    }

    #[test]
    fn fourier_examples() {
        let e1 = real_weights(&[1.0]);
        let b = fourier_upper_bound(&bern(), &e1, 0.1, DEFAULT_ESSEEN_C).unwrap();
        assert!(b.rho >= 0.5);
        let exact = central_binomial_probability(16);
        let b = fourier_upper_bound(&bern(), &flat(16), 0.1, DEFAULT_ESSEEN_C).unwrap();
        assert!(b.rho >= exact);
    }

    #[test]
    fn calibration_constant_covers_its_set() {
        let ratio = esseen_ratio(&bern(), &calibration_instances(CALIBRATION_SEED, 100)).unwrap();
        assert!(DEFAULT_ESSEEN_C >= ratio, "ratio {ratio}");
        assert!((DEFAULT_ESSEEN_C - 1.25 * ratio).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn dominance_on_fresh_instances() {
        for (v, r) in calibration_instances(2024, 60) {
            let exact = small_ball_exact(&bern(), &v, r).unwrap().rho;
            let bound = fourier_upper_bound(&bern(), &v, r, DEFAULT_ESSEEN_C).unwrap().rho;
            assert!(bound >= exact, "v={v:?} r={r}: {bound} < {exact}");
        }
    }

    #[test]
    fn variance_corollary_at_desk_scale() {
        let c = 0.1;
        let mut vs = calibration_instances(99, 80);
        vs.extend((1..=16).map(|k| (spike(k, 16), c)));
        for (v, _) in vs {
            assert!(small_ball_exact(&bern(), &v, c).unwrap().rho <= 1.0 - c);
        }
    }

    #[test]
    fn compressibility() {
        let n = 10;
        let mut e1 = vec![Complex64::new(0.0, 0.0); n];
        e1[0] = Complex64::new(1.0, 0.0);
        let v = classify_compressible(&e1, 1.0 / n as f64, 0.0).unwrap();
        assert!(v.compressible && v.distance == 0.0);
        assert_eq!(v.witness.unwrap(), e1);

        for n in 2..20 {
            let v = classify_compressible(&flat(n), 0.5, 0.1).unwrap();
            let kept = n / 2;
            assert!(!v.compressible);
            assert!((v.distance - (1.0 - kept as f64 / n as f64).sqrt()).abs() < 1e-12);
        }
        for k in 1..=8 {
            for m in 1..=32 {
                let a = m as f64 / 32.0;
                let v = classify_compressible(&spike(k, 32), a, 0.0).unwrap();
                assert_eq!(v.compressible, m >= k);
                if let Some(w) = v.witness {
                    assert!(w.iter().filter(|x| x.norm() > 0.0).count() <= v.support);
                }
            }
        }
        assert!(classify_compressible(&real_weights(&[1.0, 1.0]), 0.5, 0.0).is_err());
        assert!(classify_compressible(&flat(2), 0.0, 0.0).is_err());
    }

    #[test]
    fn rich_membership_examples() {
        let k = 8;
        let rho = 0.5 * central_binomial_probability(k);
        let r = rich_membership(&bern(), &spike(k, 20), 0.0, rho, 1000, 1).unwrap();
        assert!(r.member && r.confidence == Confidence::Certain);

        let g = EntryDistribution::gaussian();
        let r = rich_membership(&g, &flat(10), 1e-6, 0.5, 20_000, 1).unwrap();
        assert!(!r.member && r.confidence == Confidence::Confident);

        let r = rich_membership(&g, &flat(10), 1e-6, 0.0, 10, 1).unwrap();
        assert!(r.member && r.confidence == Confidence::Certain);
    }

    /// Vectors with `sup P >= 10/sqrt(n)` are compressible with
    /// `a = K/(n rho^2)`, `b = K eps/rho`. Returns the smallest such `K`.
    fn lastcase_constant(v: &[Complex64], eps: f64, rho: f64) -> f64 {
        let n = v.len() as f64;
        let ok = |kk: f64| {
            let a = (kk / (n * rho * rho)).min(1.0);
            classify_compressible(v, a, kk * eps / rho).unwrap().compressible
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        while !ok(hi) {
            hi *= 2.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    #[test]
    fn very_rich_vectors_are_compressible() {
        let n = 2500;
        let threshold = 10.0 / (n as f64).sqrt();
        let mut s = Stream::new(31, Substream::SEQUENCE);
        let mut cases = Vec::new();
        for k in 1..=16 {
            cases.push((spike(k, n), 0.0));
            // Spike plus a small perturbation on a few further coordinates.
            for delta in [1e-3, 1e-2] {
                let mut raw: Vec<f64> = (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect();
                for x in raw.iter_mut().skip(k).take(6) {
                    *x = delta * s.standard_normal();
                }
                let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
                let v = real_weights(&raw.iter().map(|x| x / norm).collect::<Vec<_>>());
                cases.push((v, 10.0 * delta));
            }
        }
        let mut tested = 0;
        let mut worst: f64 = 0.0;
        for (v, eps) in cases {
            let rho = small_ball_exact(&bern(), &v, eps).unwrap().rho;
            if rho < threshold {
                continue;
            }
            tested += 1;
            worst = worst.max(lastcase_constant(&v, eps, rho));
        }
        assert!(tested >= 20, "{tested}");
        assert!(worst <= 16.0, "K = {worst}");
    }
}
