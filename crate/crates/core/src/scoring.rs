//! Forecast losses (RMSE, log score, CRPS and their tail-weighted versions) and
//! the relative-performance tables built from a backtest archive.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{realized, Archive};
use crate::gwtest::{self, TestResult};
use crate::model::{Dataset, Variant};
use crate::period::Quarter;
use crate::rv::{std_normal_cdf, std_normal_pdf, LN_SQRT_2PI};

/// Per-observation floor on log scores.
pub const LOG_SCORE_FLOOR: f64 = -30.0;
/// Minimum number of draws for a kernel density estimate.
pub const MIN_KDE_DRAWS: usize = 100;

/// Region emphasis of a weighted score, evaluated at standardized points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Uniform,
    /// `1 − φ(z)/φ(0)`
    BothTails,
    /// `1 − Φ(z)`
    LeftTail,
    /// `Φ(z)`
    RightTail,
}

impl WeightKind {
    pub fn weight(self, z: f64) -> f64 {
        match self {
            WeightKind::Uniform => 1.0,
            WeightKind::BothTails => -(-0.5 * z * z).exp_m1(),
            WeightKind::LeftTail => std_normal_cdf(-z),
            WeightKind::RightTail => std_normal_cdf(z),
        }
    }

    /// `∫ₐᵇ w(u) du` in standardized units.
    fn integral(self, a: f64, b: f64) -> f64 {
        // Antiderivative of Φ.
        let g = |u: f64| u * std_normal_cdf(u) + std_normal_pdf(u);
        match self {
            WeightKind::Uniform => b - a,
            WeightKind::BothTails => {
                (b - a) - (2.0 * std::f64::consts::PI).sqrt() * (std_normal_cdf(b) - std_normal_cdf(a))
            }
            WeightKind::LeftTail => (b - a) - (g(b) - g(a)),
            WeightKind::RightTail => g(b) - g(a),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            WeightKind::Uniform => "uniform",
            WeightKind::BothTails => "both",
            WeightKind::LeftTail => "left",
            WeightKind::RightTail => "right",
        }
    }
}

fn sorted(draws: &[f64]) -> Vec<f64> {
    let mut x = draws.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    x
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v.sqrt())
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(x: &[f64], p: f64) -> f64 {
    let pos = p * (x.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    x[lo] + (x[hi] - x[lo]) * (pos - lo as f64)
}

pub fn rmse(forecasts: &[f64], realized: &[f64]) -> Result<f64> {
    if forecasts.is_empty() {
        return Err(Error::invalid("rmse of an empty series"));
    }
    if forecasts.len() != realized.len() {
        return Err(Error::dim("rmse series", forecasts.len(), realized.len()));
    }
    let sse: f64 = forecasts.iter().zip(realized).map(|(f, y)| (f - y) * (f - y)).sum();
    Ok((sse / forecasts.len() as f64).sqrt())
}

/// Log of a Gaussian kernel density estimate (Silverman bandwidth) at `y`, floored.
///
/// Works on the sorted draws relative to their minimum, so the result is
/// invariant to permuting the draws and to shifting draws and `y` together.
pub fn log_score(draws: &[f64], y: f64) -> Result<f64> {
    if draws.len() < MIN_KDE_DRAWS {
        return Err(Error::invalid(format!(
            "log score needs at least {MIN_KDE_DRAWS} draws, got {}",
            draws.len()
        )));
    }
    if draws.iter().any(|v| !v.is_finite()) || !y.is_finite() {
        return Err(Error::NonFinite("log score input".into()));
    }
    let x = sorted(draws);
    let base = x[0];
    let d: Vec<f64> = x.iter().map(|v| v - base).collect();
    let n = d.len() as f64;
    let (_, sd) = mean_sd(&d);
    let iqr = quantile_sorted(&d, 0.75) - quantile_sorted(&d, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bw = 0.9 * spread * n.powf(-0.2);
    if !(bw > 0.0) {
        return Err(Error::invalid("kernel bandwidth is zero (degenerate predictive draws)"));
    }
    let u = y - base;
    let terms: Vec<f64> = d.iter().map(|di| -0.5 * ((u - di) / bw).powi(2)).collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    let ls = lse - n.ln() - bw.ln() - LN_SQRT_2PI;
    Ok(if ls.is_finite() {
        ls.max(LOG_SCORE_FLOOR)
    } else {
        LOG_SCORE_FLOOR
    })
}

/// `E|X − y| − ½E|X − X′|` under the empirical distribution of the draws.
pub fn crps(draws: &[f64], y: f64) -> Result<f64> {
    if draws.len() < 2 {
        return Err(Error::invalid("CRPS needs at least 2 draws"));
    }
    let x = sorted(draws);
    let n = x.len() as f64;
    let e1 = x.iter().map(|v| (v - y).abs()).sum::<f64>() / n;
    let e2 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (2.0 * (i as f64 + 1.0) - n - 1.0) * v)
        .sum::<f64>()
        * 2.0
        / (n * n);
    Ok(e1 - 0.5 * e2)
}

/// Threshold-weighted CRPS `∫ w((z − m)/s) (F̂(z) − 1{y ≤ z})² dz`, with `m`, `s` the
/// draw mean and standard deviation. The integrand is piecewise constant in
/// `F̂` and the indicator, so each piece is integrated in closed form.
pub fn weighted_crps(draws: &[f64], y: f64, kind: WeightKind) -> Result<f64> {
    if draws.len() < 2 {
        return Err(Error::invalid("weighted CRPS needs at least 2 draws"));
    }
    let (center, scale) = mean_sd(draws);
    if !(scale > 0.0) {
        return Err(Error::invalid("predictive draws have zero standard deviation"));
    }
    let mut pts: Vec<(f64, bool)> = draws.iter().map(|v| (*v, false)).collect();
    pts.push((y, true));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = draws.len() as f64;
    let mut below = 0usize;
    let mut y_passed = false;
    let mut total = 0.0;
    for k in 0..pts.len() - 1 {
        if pts[k].1 {
            y_passed = true;
        } else {
            below += 1;
        }
        let (a, b) = (pts[k].0, pts[k + 1].0);
        if b > a {
            let f = below as f64 / n - if y_passed { 1.0 } else { 0.0 };
            let w = kind.integral((a - center) / scale, (b - center) / scale) * scale;
            total += f * f * w;
        }
    }
    Ok(total)
}

/// `w(ỹ) · log_score(draws, y)` with `ỹ` standardized by the draw mean and sd.
pub fn weighted_log_score(draws: &[f64], y: f64, kind: WeightKind) -> Result<f64> {
    let ls = log_score(draws, y)?;
    if kind == WeightKind::Uniform {
        return Ok(ls);
    }
    let (center, scale) = mean_sd(draws);
    if !(scale > 0.0) {
        return Err(Error::invalid("predictive draws have zero standard deviation"));
    }
    Ok(kind.weight((y - center) / scale) * ls)
}

/// Loss or score reported in the tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse,
    LogScore(WeightKind),
    Crps(WeightKind),
}

impl Metric {
    pub fn all() -> Vec<Metric> {
        let kinds = [
            WeightKind::Uniform,
            WeightKind::BothTails,
            WeightKind::LeftTail,
            WeightKind::RightTail,
        ];
        let mut v = vec![Metric::Rmse];
        v.extend(kinds.iter().map(|k| Metric::LogScore(*k)));
        v.extend(kinds.iter().map(|k| Metric::Crps(*k)));
        v
    }

    pub fn name(self) -> String {
        match self {
            Metric::Rmse => "rmse".into(),
            Metric::LogScore(WeightKind::Uniform) => "log_score".into(),
            Metric::Crps(WeightKind::Uniform) => "crps".into(),
            Metric::LogScore(k) => format!("wls_{}", k.tag()),
            Metric::Crps(k) => format!("wcrps_{}", k.tag()),
        }
    }

    pub fn parse(name: &str) -> Option<Metric> {
        Metric::all().into_iter().find(|m| m.name() == name)
    }

    /// Parses `all` or a comma-separated list of metric names.
    pub fn parse_list(spec: &str) -> Result<Vec<Metric>> {
        if spec.trim() == "all" {
            return Ok(Metric::all());
        }
        spec.split(',')
            .map(|s| {
                Metric::parse(s.trim()).ok_or_else(|| {
                    Error::invalid(format!(
                        "unknown loss `{s}` (expected one of: all, {})",
                        Metric::all().iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
                    ))
                })
            })
            .collect()
    }

    fn higher_is_better(self) -> bool {
        matches!(self, Metric::LogScore(_))
    }
}

/// Per-(origin, horizon, variable) value of a metric; RMSE enters as the squared error.
fn metric_value(metric: Metric, draws: &[f64], y: f64) -> Result<f64> {
    match metric {
        Metric::Rmse => {
            let f = draws.iter().sum::<f64>() / draws.len() as f64;
            Ok((f - y) * (f - y))
        }
        Metric::LogScore(k) => weighted_log_score(draws, y, k),
        Metric::Crps(WeightKind::Uniform) => crps(draws, y),
        Metric::Crps(k) => weighted_crps(draws, y, k),
    }
}

/// Named inclusive window of forecast origins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodWindow {
    pub name: String,
    pub start: Quarter,
    pub end: Quarter,
}

impl PeriodWindow {
    pub fn contains(&self, q: Quarter) -> bool {
        self.start <= q && q <= self.end
    }
}

/// Scores keyed by (variant, metric, variable, horizon) → origin → value.
pub type ScoreSet = BTreeMap<(Variant, Metric, usize, usize), BTreeMap<Quarter, f64>>;

/// Scores every archived forecast whose realization is available.
pub fn compute_scores(archive: &Archive, data: &Dataset, variants: &[Variant], metrics: &[Metric]) -> Result<ScoreSet> {
    let plan = &archive.manifest.plan;
    let mask = plan.cumulate_mask(&archive.manifest.labels);
    if data.labels != archive.manifest.labels {
        return Err(Error::invalid(format!(
            "realized data variables {:?} differ from the archive's {:?}",
            data.labels, archive.manifest.labels
        )));
    }
    let jobs: Vec<(Variant, Quarter)> = variants
        .iter()
        .flat_map(|v| archive.origins(*v).into_iter().map(move |o| (*v, o)))
        .collect();
    type Cell = ((Variant, Metric, usize, usize), Quarter, f64);
    let parts: Vec<Result<Vec<Cell>>> = jobs
        .par_iter()
        .map(|&(variant, origin)| {
            let mut out = Vec::new();
            let Some(row) = data.row_of(origin) else { return Ok(out) };
            let pd = archive.load(variant, origin)?;
            for h in 1..=pd.horizons() {
                let Some(y) = realized(data, row, h, &mask) else {
                    continue;
                };
                for v in 0..data.n_vars() {
                    let col: Vec<f64> = pd.draws[h - 1].column(v).iter().cloned().collect();
                    for &m in metrics {
                        out.push(((variant, m, v, h), origin, metric_value(m, &col, y[v])?));
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut set = ScoreSet::new();
    for part in parts {
        for (key, origin, value) in part? {
            set.entry(key).or_default().insert(origin, value);
        }
    }
    Ok(set)
}

/// One cell of the per-horizon table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HorizonRow {
    pub competitor: Variant,
    pub period: String,
    pub metric: String,
    pub variable: String,
    pub horizon: usize,
    pub origins: usize,
    pub proposed: f64,
    pub competitor_value: f64,
    /// Ratio proposed/competitor (RMSE, CRPS) or percent difference (log scores).
    pub relative: f64,
    pub gw_stat: f64,
    pub gw_p: f64,
    pub stars: String,
}

/// One cell of the per-period table: gains summed over origins, each origin's
/// gain averaged over horizons.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodRow {
    pub competitor: Variant,
    pub period: String,
    pub metric: String,
    pub variable: String,
    pub origins: usize,
    /// Σ over origins of (proposed − competitor) for scores, (competitor − proposed) for losses.
    pub cumulative: f64,
    pub per_quarter: f64,
    pub gw_stat: f64,
    pub gw_p: f64,
    pub stars: String,
}

#[derive(Clone, Debug, Default)]
pub struct ScoreTables {
    pub horizon_rows: Vec<HorizonRow>,
    pub period_rows: Vec<PeriodRow>,
    /// Origins present for one model but not the other, per competitor.
    pub missing: Vec<String>,
}

fn relative(metric: Metric, prop: f64, comp: f64) -> f64 {
    match metric {
        Metric::LogScore(_) => 100.0 * (prop - comp) / comp.abs(),
        _ => prop / comp,
    }
}

fn gw_or_nan(diff: &[f64], h: usize) -> TestResult {
    gwtest::gw_unconditional(diff, h).unwrap_or(TestResult {
        statistic: f64::NAN,
        p_value: f64::NAN,
    })
}

/// Builds both tables for `proposed` against each competitor.
pub fn score_table(
    scores: &ScoreSet,
    labels: &[String],
    proposed: Variant,
    competitors: &[Variant],
    metrics: &[Metric],
    periods: &[PeriodWindow],
    horizon: usize,
) -> ScoreTables {
    let mut tables = ScoreTables::default();
    let empty = BTreeMap::new();
    for &comp in competitors {
        let mut missing: BTreeSet<Quarter> = BTreeSet::new();
        for &metric in metrics {
            for (v, label) in labels.iter().enumerate() {
                // Per-origin horizon averages for the period table.
                let mut per_origin: BTreeMap<Quarter, (f64, f64, usize)> = BTreeMap::new();
                for h in 1..=horizon {
                    let p = scores.get(&(proposed, metric, v, h)).unwrap_or(&empty);
                    let c = scores.get(&(comp, metric, v, h)).unwrap_or(&empty);
                    missing.extend(p.keys().filter(|o| !c.contains_key(o)));
                    missing.extend(c.keys().filter(|o| !p.contains_key(o)));
                    let common: Vec<Quarter> = p.keys().filter(|o| c.contains_key(o)).cloned().collect();
                    for o in &common {
                        let e = per_origin.entry(*o).or_insert((0.0, 0.0, 0));
                        e.0 += p[o];
                        e.1 += c[o];
                        e.2 += 1;
                    }
                    for w in periods {
                        let sel: Vec<Quarter> = common.iter().filter(|o| w.contains(**o)).cloned().collect();
                        if sel.is_empty() {
                            continue;
                        }
                        let pv: Vec<f64> = sel.iter().map(|o| p[o]).collect();
                        let cv: Vec<f64> = sel.iter().map(|o| c[o]).collect();
                        let k = sel.len() as f64;
                        let (mp, mc) = if metric == Metric::Rmse {
                            ((pv.iter().sum::<f64>() / k).sqrt(), (cv.iter().sum::<f64>() / k).sqrt())
                        } else {
                            (pv.iter().sum::<f64>() / k, cv.iter().sum::<f64>() / k)
                        };
                        let sign = if metric.higher_is_better() { -1.0 } else { 1.0 };
                        let diff: Vec<f64> = pv.iter().zip(&cv).map(|(a, b)| sign * (a - b)).collect();
                        let gw = gw_or_nan(&diff, h);
                        tables.horizon_rows.push(HorizonRow {
                            competitor: comp,
                            period: w.name.clone(),
                            metric: metric.name(),
                            variable: label.clone(),
                            horizon: h,
                            origins: sel.len(),
                            proposed: mp,
                            competitor_value: mc,
                            relative: relative(metric, mp, mc),
                            gw_stat: gw.statistic,
                            gw_p: gw.p_value,
                            stars: gwtest::stars(gw.p_value).to_string(),
                        });
                    }
                }
                for w in periods {
                    let gains: Vec<f64> = per_origin
                        .iter()
                        .filter(|(o, _)| w.contains(**o))
                        .map(|(_, (p, c, cnt))| {
                            let g = (p - c) / *cnt as f64;
                            if metric.higher_is_better() {
                                g
                            } else {
                                -g
                            }
                        })
                        .collect();
                    if gains.is_empty() {
                        continue;
                    }
                    let cumulative: f64 = gains.iter().sum();
                    let losses: Vec<f64> = gains.iter().map(|g| -g).collect();
                    let gw = gw_or_nan(&losses, 1);
                    tables.period_rows.push(PeriodRow {
                        competitor: comp,
                        period: w.name.clone(),
                        metric: metric.name(),
                        variable: label.clone(),
                        origins: gains.len(),
                        cumulative,
                        per_quarter: cumulative / gains.len() as f64,
                        gw_stat: gw.statistic,
                        gw_p: gw.p_value,
                        stars: gwtest::stars(gw.p_value).to_string(),
                    });
                }
            }
        }
        if !missing.is_empty() {
            tables.missing.push(format!(
                "{} vs {}: {}",
                proposed.tag(),
                comp.tag(),
                missing.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" ")
            ));
        }
    }
    tables
}

fn fmt(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else {
        String::new()
    }
}

/// Writes the long-form tables plus one wide panel per metric (rows = competitor ×
/// variable, columns = horizons) for the first period window.
pub fn write_tables(tables: &ScoreTables, out: &Path, horizon: usize) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("horizon_table.csv"))?;
    for r in &tables.horizon_rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("period_table.csv"))?;
    w.write_record([
        "competitor",
        "period",
        "metric",
        "variable",
        "origins",
        "cumulative",
        "per_quarter",
        "gw_stat",
        "gw_p",
        "stars",
        "display",
    ])?;
    for r in &tables.period_rows {
        w.write_record([
            r.competitor.tag().to_string(),
            r.period.clone(),
            r.metric.clone(),
            r.variable.clone(),
            r.origins.to_string(),
            format!("{}", r.cumulative),
            format!("{}", r.per_quarter),
            format!("{}", r.gw_stat),
            format!("{}", r.gw_p),
            r.stars.clone(),
            format!("{} ({}){}", fmt(r.cumulative, 1), fmt(r.per_quarter, 1), r.stars),
        ])?;
    }
    w.flush()?;

    let Some(first) = tables.horizon_rows.first().map(|r| r.period.clone()) else {
        fs::write(out.join("missing.txt"), tables.missing.join("\n"))?;
        return Ok(());
    };
    let mut panels: BTreeMap<String, BTreeMap<(String, String), Vec<String>>> = BTreeMap::new();
    for r in tables.horizon_rows.iter().filter(|r| r.period == first) {
        let cells = panels
            .entry(r.metric.clone())
            .or_default()
            .entry((r.competitor.tag().to_string(), r.variable.clone()))
            .or_insert_with(|| vec![String::new(); horizon]);
        let text = if r.metric.starts_with("wls") || r.metric == "log_score" {
            format!("{}%{}", fmt(r.relative, 1), r.stars)
        } else {
            format!("{}{}", fmt(r.relative, 3), r.stars)
        };
        cells[r.horizon - 1] = text;
    }
    for (metric, rows) in panels {
        let mut w = csv::Writer::from_path(out.join(format!("panel_{metric}.csv")))?;
        let mut header = vec!["versus".to_string(), "variable".to_string()];
        header.extend((1..=horizon).map(|h| format!("H{h}")));
        w.write_record(&header)?;
        for ((comp, var), cells) in rows {
            let mut rec = vec![comp, var];
            rec.extend(cells);
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    fs::write(out.join("missing.txt"), tables.missing.join("\n"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rv::{std_normal, RngHandle};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngHandle::new(seed, 0);
        (0..n).map(|_| std_normal(&mut rng)).collect()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn both_tails_weight_values() {
        let w = WeightKind::BothTails;
        assert_eq!(w.weight(0.0), 0.0);
        assert!((w.weight(1.0) - (1.0 - (-0.5f64).exp())).abs() < 1e-12);
        assert!((w.weight(2.0) - (1.0 - (-2.0f64).exp())).abs() < 1e-12);
        assert!((w.weight(-1.0) - 0.393_469_340_287_366_6).abs() < 1e-12);
    }

    #[test]
    fn crps_degenerate_and_gaussian() {
        assert_eq!(crps(&[1.5; 10], 1.5).unwrap(), 0.0);
        let d = normals(100_000, 1);
        let exact = 2.0 * std_normal_pdf(0.0) - 1.0 / std::f64::consts::PI.sqrt();
        assert!((crps(&d, 0.0).unwrap() - exact).abs() < 0.003);
    }

    #[test]
    fn log_score_gaussian_and_floor() {
        let d = normals(100_000, 2);
        assert!((log_score(&d, 0.0).unwrap() + 0.918_938_533).abs() < 0.02);
        assert_eq!(log_score(&d, 1e6).unwrap(), LOG_SCORE_FLOOR);
        assert!(log_score(&d[..50], 0.0).is_err());
        assert!(log_score(&[2.0; 200], 2.0).is_err());
    }

    #[test]
    fn uniform_weighted_crps_equals_crps() {
        let d = normals(2000, 3);
        for y in [-3.0, -0.2, 0.0, 1.7, 5.0] {
            let a = crps(&d, y).unwrap();
            let b = weighted_crps(&d, y, WeightKind::Uniform).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn weighted_crps_matches_fine_quadrature() {
        // Independent check of the closed-form pieces with a dense midpoint rule.
        let d = normals(200, 4);
        let (m, s) = mean_sd(&d);
        let y = 0.4;
        let x = sorted(&d);
        for kind in [WeightKind::BothTails, WeightKind::LeftTail, WeightKind::RightTail] {
            let lo = x[0].min(y);
            let hi = x[x.len() - 1].max(y);
            let steps = 400_000;
            let dz = (hi - lo) / steps as f64;
            let mut acc = 0.0;
            for i in 0..steps {
                let z = lo + (i as f64 + 0.5) * dz;
                let f = x.partition_point(|v| *v <= z) as f64 / x.len() as f64;
                let ind = if y <= z { 1.0 } else { 0.0 };
                acc += kind.weight((z - m) / s) * (f - ind).powi(2) * dz;
            }
            let exact = weighted_crps(&d, y, kind).unwrap();
            assert!((exact - acc).abs() < 1e-5, "{kind:?}: {exact} vs {acc}");
        }
    }

    #[test]
    fn weighted_log_score_examples() {
        let d = normals(1000, 5);
        let (m, s) = mean_sd(&d);
        assert_eq!(weighted_log_score(&d, m, WeightKind::BothTails).unwrap(), 0.0);
        assert_eq!(
            weighted_log_score(&d, 0.3, WeightKind::Uniform).unwrap(),
            log_score(&d, 0.3).unwrap()
        );
        let y = m + 2.0 * s;
        let ratio = weighted_log_score(&d, y, WeightKind::BothTails).unwrap() / log_score(&d, y).unwrap();
        assert!((ratio - (1.0 - (-2.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn metric_names_roundtrip() {
        for m in Metric::all() {
            assert_eq!(Metric::parse(&m.name()), Some(m));
        }
        assert_eq!(Metric::parse_list("all").unwrap().len(), 9);
        assert!(Metric::parse_list("rmse,bogus").is_err());
    }
}
