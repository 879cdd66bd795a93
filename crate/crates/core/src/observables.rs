//! Statistics over chain snapshots and the CSV layouts they are written in.
//!
//! CSV files are UTF-8 with a header row and LF line endings:
//!
//! | file            | columns                                                                            |
//! |-----------------|------------------------------------------------------------------------------------|
//! | `positions.csv` | `step,particle,coord0,…,coord{d−1}`                                                |
//! | `scalars.csv`   | `step,barycenter_dot_v,second_moment,constraint_residual_max,hamiltonian`          |
//! | `stats.csv`     | `accepted,newton_forward_fail,newton_backward_fail,reversibility_fail,metropolis_reject,total` |
//! | `rate_scan.csv` | `dt,metropolis_reject_fraction`                                                    |

use crate::model::Configuration;
use crate::sampler::{RejectionStats, ScalarRow, Snapshot};
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("histogram needs at least one bin")]
    ZeroBins,
    #[error("histogram range [{lo}, {hi}) is empty")]
    EmptyRange { lo: f64, hi: f64 },
    #[error("no samples")]
    Empty,
    #[error("non-finite sample")]
    NonFinite,
}

pub fn barycenter(config: &Configuration) -> Vec<f64> {
    crate::constraints::barycenter_flat(config.as_slice(), config.dim())
}

/// `(1/n) Σ |x_i − center|²`
pub fn second_moment_about(config: &Configuration, center: &[f64]) -> f64 {
    let total: f64 = config
        .points()
        .map(|p| p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    total / config.len() as f64
}

/// Sorted sample with its empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self, ObservableError> {
        if samples.is_empty() {
            return Err(ObservableError::Empty);
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(ObservableError::NonFinite);
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of samples `≤ t`.
    pub fn eval(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= t) as f64 / self.sorted.len() as f64
    }

    /// `(value, F(value))` rows, one per sample.
    pub fn table(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        self.sorted.iter().enumerate().map(|(i, &s)| (s, (i + 1) as f64 / n)).collect()
    }

    /// One-sample Kolmogorov–Smirnov distance to a continuous CDF.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let f = cdf(s);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &EmpiricalCdf, b: &EmpiricalCdf) -> f64 {
    let (xa, xb) = (a.values(), b.values());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let t = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= t {
            i += 1;
        }
        while j < xb.len() && xb[j] <= t {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// Distances of all pooled particles to `center`.
pub fn pooled_radii<'a>(configs: impl IntoIterator<Item = &'a Configuration>, center: &[f64]) -> Vec<f64> {
    configs
        .into_iter()
        .flat_map(|c| {
            c.points()
                .map(|p| p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Empirical CDF of the distances of pooled particles to `center`.
pub fn radial_cdf<'a>(
    configs: impl IntoIterator<Item = &'a Configuration>,
    center: &[f64],
) -> Result<EmpiricalCdf, ObservableError> {
    EmpiricalCdf::new(pooled_radii(configs, center))
}

/// Uniform bins over `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl BinSpec {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self, ObservableError> {
        if bins == 0 {
            return Err(ObservableError::ZeroBins);
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(ObservableError::EmptyRange { lo, hi });
        }
        Ok(Self { lo, hi, bins })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins).map(|i| self.lo + self.width() * i as f64).collect()
    }

    fn locate(&self, v: f64) -> Option<usize> {
        if !(v >= self.lo && v < self.hi) {
            return None;
        }
        let idx = ((v - self.lo) / (self.hi - self.lo) * self.bins as f64) as usize;
        Some(idx.min(self.bins - 1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram1D {
    pub spec: BinSpec,
    pub counts: Vec<u64>,
    pub underflow: u64,
    /// Samples at or above `hi`, plus non-finite ones.
    pub overflow: u64,
}

impl Histogram1D {
    pub fn new(spec: BinSpec) -> Self {
        Self { counts: vec![0; spec.bins], spec, underflow: 0, overflow: 0 }
    }

    pub fn add(&mut self, v: f64) {
        match self.spec.locate(v) {
            Some(i) => self.counts[i] += 1,
            None if v < self.spec.lo => self.underflow += 1,
            None => self.overflow += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn merge(&mut self, other: &Histogram1D) {
        assert_eq!(self.spec, other.spec, "cannot merge histograms with different bins");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
    }
}

pub fn histogram1d(samples: &[f64], spec: BinSpec) -> Histogram1D {
    let mut h = Histogram1D::new(spec);
    samples.iter().for_each(|&s| h.add(s));
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    pub x: BinSpec,
    pub y: BinSpec,
    /// Row-major, `counts[ix * y.bins + iy]`.
    pub counts: Vec<u64>,
    pub out_of_range: u64,
}

impl Histogram2D {
    pub fn new(x: BinSpec, y: BinSpec) -> Self {
        Self { counts: vec![0; x.bins * y.bins], x, y, out_of_range: 0 }
    }

    pub fn add(&mut self, px: f64, py: f64) {
        match (self.x.locate(px), self.y.locate(py)) {
            (Some(i), Some(j)) => self.counts[i * self.y.bins + j] += 1,
            _ => self.out_of_range += 1,
        }
    }

    pub fn get(&self, ix: usize, iy: usize) -> u64 {
        self.counts[ix * self.y.bins + iy]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.out_of_range
    }

    pub fn merge(&mut self, other: &Histogram2D) {
        assert!(self.x == other.x && self.y == other.y, "cannot merge histograms with different bins");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.out_of_range += other.out_of_range;
    }
}

/// Bins the first two coordinates of every pooled particle.
pub fn histogram2d<'a>(
    configs: impl IntoIterator<Item = &'a Configuration>,
    x: BinSpec,
    y: BinSpec,
) -> Histogram2D {
    let mut h = Histogram2D::new(x, y);
    for c in configs {
        for p in c.points() {
            h.add(p[0], p.get(1).copied().unwrap_or(0.0));
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialHistogram {
    pub center: Vec<f64>,
    pub hist: Histogram1D,
}

impl RadialHistogram {
    pub fn new(center: Vec<f64>, max_radius: f64, bins: usize) -> Result<Self, ObservableError> {
        Ok(Self { center, hist: Histogram1D::new(BinSpec::new(0.0, max_radius, bins)?) })
    }

    pub fn add_config(&mut self, config: &Configuration) {
        for r in pooled_radii(std::iter::once(config), &self.center) {
            self.hist.add(r);
        }
    }
}

/// Sample mean and (unbiased) variance.
pub fn mean_variance(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

/// Least-squares slope and intercept of `log y` against `log x`, over the
/// points with `0 < y < 1`. Returns `None` with fewer than two usable points.
pub fn loglog_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let usable: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0 && *y < 1.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if usable.len() < 2 {
        return None;
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

pub fn write_positions_csv<W: Write>(
    mut w: W,
    dim: usize,
    snapshots: &[Snapshot],
    particle_offset: usize,
    header: bool,
) -> io::Result<()> {
    if header {
        write!(w, "step,particle")?;
        for k in 0..dim {
            write!(w, ",coord{k}")?;
        }
        writeln!(w)?;
    }
    for s in snapshots {
        for (i, p) in s.config.points().enumerate() {
            write!(w, "{},{}", s.step, i + particle_offset)?;
            for v in p {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn write_scalars_csv<W: Write>(mut w: W, rows: &[ScalarRow], header: bool) -> io::Result<()> {
    if header {
        writeln!(w, "step,barycenter_dot_v,second_moment,constraint_residual_max,hamiltonian")?;
    }
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.step, r.barycenter_dot_v, r.second_moment, r.constraint_residual_max, r.hamiltonian
        )?;
    }
    Ok(())
}

pub fn write_stats_csv<W: Write>(mut w: W, stats: &RejectionStats) -> io::Result<()> {
    writeln!(w, "accepted,newton_forward_fail,newton_backward_fail,reversibility_fail,metropolis_reject,total")?;
    writeln!(
        w,
        "{},{},{},{},{},{}",
        stats.accepted,
        stats.newton_forward_fail,
        stats.newton_backward_fail,
        stats.reversibility_fail,
        stats.metropolis_reject,
        stats.total()
    )
}

pub fn write_rate_scan_csv<W: Write>(mut w: W, rows: &[(f64, f64)]) -> io::Result<()> {
    writeln!(w, "dt,metropolis_reject_fraction")?;
    for (dt, f) in rows {
        writeln!(w, "{dt},{f}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(points: &[&[f64]]) -> Configuration {
        Configuration::from_points(&points.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn barycenter_and_moment() {
        let x = cfg(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        assert_eq!(barycenter(&x), vec![0.0, 0.0]);
        assert_eq!(second_moment_about(&x, &[0.0, 0.0]), 1.0);
        let same = cfg(&[&[0.3, 0.4], &[0.3, 0.4], &[0.3, 0.4]]);
        let b = barycenter(&same);
        assert!((b[0] - 0.3).abs() < 1e-15 && (b[1] - 0.4).abs() < 1e-15);
        assert!(second_moment_about(&same, &[0.3, 0.4]) < 1e-30);
    }

    #[test]
    fn cdf_single_point_steps() {
        let x = cfg(&[&[3.0, 4.0]]);
        let cdf = radial_cdf([&x], &[0.0, 0.0]).unwrap();
        assert_eq!(cdf.eval(4.999), 0.0);
        assert_eq!(cdf.eval(5.0), 1.0);
        assert!(radial_cdf(std::iter::empty(), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn ks_two_sample_basics() {
        let a = EmpiricalCdf::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b = EmpiricalCdf::new(vec![10.0, 11.0]).unwrap();
        assert_eq!(ks_two_sample(&a, &b), 1.0);
        let c = EmpiricalCdf::new(vec![2.5, 3.5]).unwrap();
        assert_eq!(ks_two_sample(&a, &c), 0.5);
    }

    #[test]
    fn histogram_accounting() {
        let spec = BinSpec::new(0.0, 1.0, 4).unwrap();
        let h = histogram1d(&[0.125, -1.0, 2.0, 1.0, 0.99, f64::NAN], spec);
        assert_eq!(h.counts, vec![1, 0, 0, 1]);
        assert_eq!(h.underflow, 1);
        assert_eq!(h.overflow, 3);
        assert_eq!(h.total(), 6);
        assert_eq!(BinSpec::new(0.0, 1.0, 0), Err(ObservableError::ZeroBins));
        assert!(BinSpec::new(1.0, 1.0, 3).is_err());
        let e = spec.edges();
        assert!(e.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn histogram2d_bin_center() {
        let x = BinSpec::new(-1.0, 1.0, 2).unwrap();
        let mut h = Histogram2D::new(x, x);
        h.add(0.5, -0.5);
        h.add(5.0, 0.0);
        assert_eq!(h.get(1, 0), 1);
        assert_eq!(h.out_of_range, 1);
        assert_eq!(h.total(), 2);
    }

    #[test]
    fn loglog_slope() {
        let pts: Vec<(f64, f64)> = [0.05, 0.1, 0.2, 0.4].iter().map(|&x: &f64| (x, 0.3 * x.powi(3))).collect();
        let (slope, _) = loglog_fit(&pts).unwrap();
        assert!((slope - 3.0).abs() < 1e-12);
        let saturated = [(0.05, 1e-3), (0.1, 8e-3), (5.0, 1.0)];
        let (slope, _) = loglog_fit(&saturated).unwrap();
        assert!((slope - 3.0).abs() < 1e-12);
        assert!(loglog_fit(&[(1.0, 1.0), (2.0, 0.0)]).is_none());
    }

    #[test]
    fn csv_layouts() {
        let snap = Snapshot { step: 7, config: cfg(&[&[0.5, -1.0], &[2.0, 0.25]]) };
        let mut buf = Vec::new();
        write_positions_csv(&mut buf, 2, &[snap], 0, true).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,particle,coord0,coord1\n7,0,0.5,-1\n7,1,2,0.25\n");

        let stats = RejectionStats { accepted: 3, metropolis_reject: 1, ..Default::default() };
        let mut buf = Vec::new();
        write_stats_csv(&mut buf, &stats).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "accepted,newton_forward_fail,newton_backward_fail,reversibility_fail,metropolis_reject,total\n3,0,0,0,1,4\n"
        );
    }
}
