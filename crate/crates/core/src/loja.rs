//! Diagnostics for the convergence argument: normal graphs over the limit,
//! the Łojasiewicz exponent along a trajectory, the decay of
//! `H(t) = |F(t) - F_∞|^α`, and the Cauchy and compact-set criteria.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::curve::{curvature_jet, line_crossing, measure, ClosedCurve, GeometricData};
use crate::error::{Error, Result};
use crate::flow::{FlowTrace, TraceSample};

/// Regression window: samples with `‖E‖` below this.
pub const WINDOW_GRAD: f64 = 1e-2;
/// Samples with `‖E‖` below this are excluded as degenerate.
pub const GRAD_FLOOR: f64 = 1e-12;
pub const MIN_SAMPLES: usize = 30;
pub const MIN_DECADES: f64 = 3.0;

/// Signed normal offsets of a curve over `base`.
#[derive(Debug, Clone)]
pub struct HeightFunction {
    pub values: Vec<f64>,
    pub base: ClosedCurve,
    geometry: GeometricData,
}

impl HeightFunction {
    /// `L²(ds_base)` distance to another height function over the same base.
    pub fn distance(&self, other: &HeightFunction) -> f64 {
        let d: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        self.geometry.l2_norm(&d)
    }

    pub fn l2_norm(&self) -> f64 {
        self.geometry.l2_norm(&self.values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// `1 / max |k|` of `c`.
pub fn reach(c: &ClosedCurve) -> Result<f64> {
    let k = curvature_jet(c, 0)?;
    let kmax = k.level(0).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok(1.0 / kmax)
}

/// For each base vertex, the signed distance along the base normal to the
/// crossing with the trigonometric interpolant of `c`.
pub fn height_over(base: &ClosedCurve, c: &ClosedCurve) -> Result<HeightFunction> {
    let geometry = measure(base)?;
    let half_reach = 0.5 * reach(base)?;
    let op = c.op();
    let xi = op.interpolant(&c.xs());
    let yi = op.interpolant(&c.ys());
    let m = c.n();
    let mut values = Vec::with_capacity(base.n());
    for (p, nu) in base.vertices().iter().zip(&geometry.normal) {
        let nearest = c
            .vertices()
            .iter()
            .enumerate()
            .map(|(j, q)| (j, (q[0] - p[0]).hypot(q[1] - p[1])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(j, _)| j)
            .unwrap_or(0);
        let guess = TAU * nearest as f64 / m as f64;
        let theta = line_crossing(&xi, &yi, *p, *nu, guess).ok_or_else(|| {
            Error::OutOfTubularNeighborhood("normal line does not meet the curve".into())
        })?;
        let q = [xi.eval(theta), yi.eval(theta)];
        let h = (q[0] - p[0]) * nu[0] + (q[1] - p[1]) * nu[1];
        if !(h.abs() < half_reach) {
            return Err(Error::OutOfTubularNeighborhood(format!(
                "offset {h:e} exceeds half the reach {half_reach:e}"
            )));
        }
        values.push(h);
    }
    Ok(HeightFunction {
        values,
        base: base.clone(),
        geometry,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LojaReport {
    pub alpha: f64,
    /// Smallest `C` with `|ΔF|^{1-α} ≤ C ‖E‖` on the window.
    pub c: f64,
    pub window: (f64, f64),
    pub r2: f64,
    pub violations: usize,
    pub slope: f64,
    pub n_samples: usize,
    pub decades: f64,
    pub f_inf: f64,
}

/// `(t, ΔF, ‖E‖)` on the tail window: the longest suffix with
/// `‖E‖ < WINDOW_GRAD`, keeping samples with `ΔF` above the rounding level
/// of the energy and `‖E‖ ≥ GRAD_FLOOR`.
fn tail_window(trace: &FlowTrace, f_inf: f64) -> Vec<(f64, f64, f64)> {
    let s = &trace.samples;
    let start = s
        .iter()
        .rposition(|x| x.grad_norm >= WINDOW_GRAD)
        .map_or(0, |i| i + 1);
    let noise = 100.0 * f64::EPSILON * f_inf.abs().max(1.0);
    s[start..]
        .iter()
        .filter(|x| x.grad_norm >= GRAD_FLOOR && x.energy - f_inf > noise)
        .map(|x| (x.t, x.energy - f_inf, x.grad_norm))
        .collect()
}

fn check_window(w: &[(f64, f64, f64)]) -> Result<f64> {
    if w.len() < MIN_SAMPLES {
        return Err(Error::InsufficientDecay(format!(
            "{} usable tail samples, need {MIN_SAMPLES}",
            w.len()
        )));
    }
    let (lo, hi) = w
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(a, b), x| (a.min(x.1), b.max(x.1)));
    let decades = (hi / lo).log10();
    if decades < MIN_DECADES {
        return Err(Error::InsufficientDecay(format!(
            "|F - F_inf| spans {decades:.2} decades, need {MIN_DECADES}"
        )));
    }
    Ok(decades)
}

/// Least-squares fit of `log ‖E‖` against `log |F - F_∞|` on the tail.
pub fn fit_exponent(trace: &FlowTrace, f_inf: f64) -> Result<LojaReport> {
    let min_energy = trace
        .samples
        .iter()
        .fold(f64::INFINITY, |a, s| a.min(s.energy));
    if f_inf > min_energy + 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "F_inf = {f_inf} exceeds the smallest energy {min_energy}"
        )));
    }
    let w = tail_window(trace, f_inf);
    let decades = check_window(&w)?;
    let xs: Vec<f64> = w.iter().map(|p| p.1.ln()).collect();
    let ys: Vec<f64> = w.iter().map(|p| p.2.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    let alpha = 1.0 - slope;
    let c = w
        .iter()
        .map(|p| p.1.powf(1.0 - alpha) / p.2)
        .fold(0.0_f64, f64::max);
    let violations = count_violations(trace, f_inf, alpha, c);
    Ok(LojaReport {
        alpha,
        c,
        window: (w[0].0, w[w.len() - 1].0),
        r2,
        violations,
        slope,
        n_samples: w.len(),
        decades,
        f_inf,
    })
}

/// Window samples where `|ΔF|^{1-α} > C ‖E‖`.
pub fn count_violations(trace: &FlowTrace, f_inf: f64, alpha: f64, c: f64) -> usize {
    tail_window(trace, f_inf)
        .iter()
        .filter(|p| p.1.powf(1.0 - alpha) > c * p.2 * (1.0 + 1e-12))
        .count()
}

/// `α` refitted with `F_∞ ∓ delta`.
pub fn alpha_sensitivity(trace: &FlowTrace, f_inf: f64, delta: f64) -> Result<(f64, f64)> {
    let lo = fit_exponent(trace, f_inf - delta)?.alpha;
    let hi = fit_exponent(trace, f_inf + delta).map(|r| r.alpha).unwrap_or(f64::NAN);
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HDecayReport {
    /// Largest `∂_t H / ‖∂_t φ‖` over the window; negative when `H` decays.
    pub worst_ratio: f64,
    pub ratios: Vec<(f64, f64)>,
    pub all_negative: bool,
}

/// Difference quotients of `H = |F - F_∞|^α` between consecutive window
/// samples, divided by the speed `‖E‖` at the interval midpoint.
pub fn check_h_decay(trace: &FlowTrace, f_inf: f64, alpha: f64) -> Result<HDecayReport> {
    let w = tail_window(trace, f_inf);
    check_window(&w)?;
    let ratios: Vec<(f64, f64)> = w
        .windows(2)
        .map(|p| {
            let dh = (p[1].1.powf(alpha) - p[0].1.powf(alpha)) / (p[1].0 - p[0].0);
            let speed = 0.5 * (p[0].2 + p[1].2);
            (0.5 * (p[0].0 + p[1].0), dh / speed)
        })
        .collect();
    let worst_ratio = ratios.iter().fold(f64::NEG_INFINITY, |a, r| a.max(r.1));
    Ok(HDecayReport {
        worst_ratio,
        all_negative: ratios.iter().all(|r| r.1 < 0.0),
        ratios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLengthCheck {
    /// `∫ ‖∂_t φ‖ dt` over the window.
    pub path_length: f64,
    /// `H(t_0) / c` with `c = -worst_ratio`.
    pub bound: f64,
    pub holds: bool,
}

/// Integrated form of the H-decay inequality: the path length over the
/// window is at most `|F(t_0) - F_∞|^α / c`, here allowed within a factor 2.
pub fn path_length_check(
    trace: &FlowTrace,
    f_inf: f64,
    alpha: f64,
    worst_ratio: f64,
) -> Result<PathLengthCheck> {
    let w = tail_window(trace, f_inf);
    check_window(&w)?;
    let path_length: f64 = w
        .windows(2)
        .map(|p| 0.5 * (p[0].2 + p[1].2) * (p[1].0 - p[0].0))
        .sum();
    let bound = w[0].1.powf(alpha) / (-worst_ratio);
    Ok(PathLengthCheck {
        path_length,
        bound,
        holds: worst_ratio < 0.0 && path_length <= 2.0 * bound,
    })
}

/// Limit energy: Aitken extrapolation on the latest equally spaced triple of
/// samples whose differences clear the rounding level, capped by the
/// smallest energy seen.
pub fn estimate_f_inf(trace: &FlowTrace) -> f64 {
    let s = &trace.samples;
    let min_energy = s.iter().fold(f64::INFINITY, |a, x| a.min(x.energy));
    let noise = 1e3 * f64::EPSILON * min_energy.abs().max(1.0);
    for i in (0..s.len()).rev() {
        for d in 1..=i / 2 {
            let (a, b, c) = (&s[i - 2 * d], &s[i - d], &s[i]);
            let even = ((b.t - a.t) - (c.t - b.t)).abs() <= 1e-9 * (c.t - a.t);
            let (d1, d2) = (b.energy - a.energy, c.energy - b.energy);
            if even && d1 < -noise && d2 < -noise && d2 > d1 {
                let est = c.energy - d2 * d2 / (d2 - d1);
                return est.min(min_energy);
            }
            if a.energy - c.energy > 1e6 * noise {
                break;
            }
        }
    }
    min_energy
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    pub times: Vec<f64>,
    /// `‖h_{k+1} - h_k‖` for consecutive snapshots.
    pub consecutive: Vec<f64>,
    /// `sup_{j > i ≥ k} ‖h_j - h_i‖`.
    pub tail_sup: Vec<f64>,
    /// Non-increasing tail sup that reaches its final value.
    pub monotone: bool,
}

impl CauchyReport {
    /// Tail sup over snapshots at times `≥ t`.
    pub fn tail_sup_after(&self, t: f64) -> f64 {
        self.times
            .iter()
            .position(|&s| s >= t)
            .map_or(0.0, |k| self.tail_sup[k])
    }
}

/// Height-function distances of snapshots over `base`. `times` labels the
/// snapshots; pass indices if no times are known.
pub fn cauchy_tracker(
    snapshots: &[ClosedCurve],
    times: &[f64],
    base: &ClosedCurve,
) -> Result<CauchyReport> {
    if snapshots.len() != times.len() {
        return Err(Error::InvalidArgument("one time per snapshot is required".into()));
    }
    let heights = snapshots
        .iter()
        .map(|c| height_over(base, c))
        .collect::<Result<Vec<_>>>()?;
    let k = heights.len();
    let consecutive: Vec<f64> = heights.windows(2).map(|h| h[0].distance(&h[1])).collect();
    let mut tail_sup = vec![0.0; k];
    for i in (0..k).rev() {
        let here = heights[i + 1..]
            .iter()
            .map(|h| heights[i].distance(h))
            .fold(0.0, f64::max);
        tail_sup[i] = if i + 1 < k { here.max(tail_sup[i + 1]) } else { 0.0 };
    }
    let monotone = tail_sup.windows(2).all(|w| w[1] <= w[0]);
    Ok(CauchyReport {
        times: times.to_vec(),
        consecutive,
        tail_sup,
        monotone,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactSetReport {
    /// Union bounding box `[xmin, ymin, xmax, ymax]`.
    pub final_box: [f64; 4],
    /// Trace index after which the union box no longer grows.
    pub stabilized_at: usize,
    /// `t` at that index over the final `t`.
    pub stabilized_time_fraction: f64,
    /// No growth over the last half of the trace.
    pub stabilized: bool,
}

pub fn compact_set_tracker(samples: &[TraceSample]) -> CompactSetReport {
    let mut boxed = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let mut stabilized_at = 0;
    for (i, s) in samples.iter().enumerate() {
        let b = s.bbox;
        let grown = [b[0].min(boxed[0]), b[1].min(boxed[1]), b[2].max(boxed[2]), b[3].max(boxed[3])];
        let scale = (grown[2] - grown[0]).max(grown[3] - grown[1]).max(f64::MIN_POSITIVE);
        let growth = (0..4).map(|j| (grown[j] - boxed[j]).abs()).fold(0.0, f64::max);
        if i == 0 || growth > 1e-12 * scale {
            stabilized_at = i;
        }
        boxed = grown;
    }
    let t_end = samples.last().map_or(0.0, |s| s.t);
    let t0 = samples.first().map_or(0.0, |s| s.t);
    let fraction = if t_end > t0 {
        (samples.get(stabilized_at).map_or(t0, |s| s.t) - t0) / (t_end - t0)
    } else {
        0.0
    };
    CompactSetReport {
        final_box: boxed,
        stabilized_at,
        stabilized_time_fraction: fraction,
        stabilized: 2 * stabilized_at <= samples.len(),
    }
}
