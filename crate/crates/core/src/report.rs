//! Reproduction harness: numeric vs asymptotic comparisons, convergence
//! fits, parameter sweeps and deterministic CSV/JSON output.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dispersion::{solve_collision, CollisionPoint, ModelSetup};
use crate::error::{Error, Result};
use crate::ffh::{extract_isola, IsolaMeasurement, IsolaSeed, ENDPOINT_TOL, THRESHOLD_REL};
use crate::perturbation::{coupled_s, isola_asymptotics, IsolaAsymptotics};
use crate::stokes::{stokes_coefficients, StokesSeries};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Amplitude at which the reference intervals were published.
pub const TABLE1_EPS: f64 = 1e-3;

/// Published Floquet intervals at `eps = 1e-3`, in the order printed.
pub const TABLE1: [(f64, i64, f64, f64); 6] = [
    (0.5, 2, -0.106478813547533, -0.106478633575956),
    (1.0, 2, -0.260909131823605, -0.260908917941151),
    (2.0, 2, -0.330352196060556, -0.330352275321770),
    (0.5, 3, -0.375448877009085, -0.375448875412116),
    (1.0, 3, 0.257196721100572, 0.257196721343587),
    (2.0, 3, 0.044058331346416, 0.044058331384758),
];

/// Absolute endpoint tolerance for the direct computation.
pub fn table_tolerance(p: i64) -> f64 {
    if p.abs() == 2 {
        5e-9
    } else {
        5e-11
    }
}

/// Multiplier on [`table_tolerance`] allowed for the asymptotic interval.
pub const ASYMPTOTIC_TOL_FACTOR: f64 = 2.0;

/// Asymptotic prediction evaluated at one amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedAsymptotics {
    pub floquet_lo: f64,
    pub floquet_hi: f64,
    pub mu_star: f64,
    pub lambda_star: Complex64,
    pub growth: f64,
    pub s_p: f64,
    pub degenerate: bool,
}

impl EvaluatedAsymptotics {
    pub fn new(asym: &IsolaAsymptotics, eps: f64) -> Self {
        let (floquet_lo, floquet_hi) = asym.floquet_interval(eps);
        Self {
            floquet_lo,
            floquet_hi,
            mu_star: asym.mu_star(eps),
            lambda_star: asym.lambda_star(eps),
            growth: asym.growth(eps),
            s_p: asym.s_p,
            degenerate: asym.degenerate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diffs {
    pub endpoint_lo: f64,
    pub endpoint_hi: f64,
    pub mu_star: f64,
    pub growth: f64,
    pub im_center: f64,
}

impl Diffs {
    pub fn endpoint_gap(&self) -> f64 {
        self.endpoint_lo.max(self.endpoint_hi)
    }
}

/// Direct and asymptotic results for one `(alpha, p, eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub p: i64,
    pub alpha: f64,
    pub eps: f64,
    pub modes: usize,
    pub threshold_rel: f64,
    pub endpoint_tol: f64,
    pub numeric: IsolaMeasurement,
    pub asymptotic: EvaluatedAsymptotics,
    pub diffs: Diffs,
}

/// Seed interval around the asymptotic prediction, padded by its own width.
pub fn asymptotic_seed(asym: &IsolaAsymptotics, eps: f64) -> IsolaSeed {
    let (lo, hi) = asym.floquet_interval(eps);
    let pad = (hi - lo).max(0.1 * eps.powi(asym.p.unsigned_abs() as i32));
    IsolaSeed {
        p: asym.p,
        mu_lo: lo - pad,
        mu_hi: hi + pad,
        center_im: asym.collision.lambda0.im,
    }
}

struct Problem {
    series: StokesSeries,
    collision: CollisionPoint,
}

fn problem(alpha: f64, p: i64) -> Result<Problem> {
    let setup = ModelSetup::new(alpha)?;
    Ok(Problem {
        series: stokes_coefficients(&setup)?,
        collision: solve_collision(p, &setup)?,
    })
}

/// Run both methods and record their differences.
pub fn compare(p: i64, alpha: f64, eps: f64, modes: usize) -> Result<ComparisonRecord> {
    let pr = problem(alpha, p)?;
    let asym = isola_asymptotics(&pr.collision, &pr.series)?;
    compare_with(&pr.series, &asym, eps, modes)
}

fn compare_with(series: &StokesSeries, asym: &IsolaAsymptotics, eps: f64, modes: usize) -> Result<ComparisonRecord> {
    let numeric = extract_isola(series, eps, &asymptotic_seed(asym, eps), modes)?;
    let asymptotic = EvaluatedAsymptotics::new(asym, eps);
    let diffs = Diffs {
        endpoint_lo: (numeric.floquet_lo - asymptotic.floquet_lo).abs(),
        endpoint_hi: (numeric.floquet_hi - asymptotic.floquet_hi).abs(),
        mu_star: (numeric.mu_star - asymptotic.mu_star).abs(),
        growth: (numeric.growth() - asymptotic.growth).abs(),
        im_center: (numeric.lambda_star.im - asymptotic.lambda_star.im).abs(),
    };
    Ok(ComparisonRecord {
        p: asym.p,
        alpha: asym.collision.setup.alpha,
        eps,
        modes,
        threshold_rel: THRESHOLD_REL,
        endpoint_tol: ENDPOINT_TOL,
        numeric,
        asymptotic,
        diffs,
    })
}

/// Largest endpoint error between two intervals compared as unordered pairs.
pub fn unordered_error(a: (f64, f64), b: (f64, f64)) -> f64 {
    let sort = |(x, y): (f64, f64)| if x <= y { (x, y) } else { (y, x) };
    let (a, b) = (sort(a), sort(b));
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub record: ComparisonRecord,
    pub reference: (f64, f64),
    pub numeric_error: f64,
    pub asymptotic_error: f64,
    pub numeric_tol: f64,
    pub asymptotic_tol: f64,
    pub numeric_pass: bool,
    pub asymptotic_pass: bool,
}

/// All six published intervals recomputed by both methods.
pub fn reproduce_table1(modes: usize) -> Result<Vec<Table1Row>> {
    TABLE1
        .par_iter()
        .map(|&(alpha, p, lo, hi)| {
            let record = compare(p, alpha, TABLE1_EPS, modes)?;
            let numeric_error = if record.numeric.present {
                unordered_error((record.numeric.floquet_lo, record.numeric.floquet_hi), (lo, hi))
            } else {
                f64::INFINITY
            };
            let asymptotic_error =
                unordered_error((record.asymptotic.floquet_lo, record.asymptotic.floquet_hi), (lo, hi));
            let numeric_tol = table_tolerance(p);
            let asymptotic_tol = ASYMPTOTIC_TOL_FACTOR * numeric_tol;
            Ok(Table1Row {
                record,
                reference: (lo, hi),
                numeric_error,
                asymptotic_error,
                numeric_tol,
                asymptotic_tol,
                numeric_pass: numeric_error <= numeric_tol,
                asymptotic_pass: asymptotic_error <= asymptotic_tol,
            })
        })
        .collect()
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero for an exact fit or two points.
    pub stderr: f64,
    pub points: usize,
}

pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len();
    if n < 3 {
        return Err(Error::DegenerateFit(format!("{n} usable points, need at least 3")));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae coincide".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (ss / (nf - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        points: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub p: i64,
    pub alpha: f64,
    pub modes: usize,
    pub records: Vec<ComparisonRecord>,
    pub width: SlopeFit,
    pub growth: SlopeFit,
    /// `None` when too few gaps rise above zero to fit.
    pub gap: Option<SlopeFit>,
}

/// Scaling of width, growth and numeric/asymptotic gap with amplitude.
pub fn convergence_study(p: i64, alpha: f64, eps_list: &[f64], modes: usize) -> Result<ConvergenceReport> {
    if eps_list.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "{} amplitudes, need at least 3",
            eps_list.len()
        )));
    }
    let pr = problem(alpha, p)?;
    let asym = isola_asymptotics(&pr.collision, &pr.series)?;
    let records: Vec<ComparisonRecord> = eps_list
        .iter()
        .map(|&eps| compare_with(&pr.series, &asym, eps, modes))
        .collect::<Result<_>>()?;
    if let Some(r) = records.iter().find(|r| !r.numeric.present) {
        return Err(Error::NoInstability { p: r.p });
    }
    let eps: Vec<f64> = records.iter().map(|r| r.eps).collect();
    let widths: Vec<f64> = records.iter().map(|r| r.numeric.width()).collect();
    let growths: Vec<f64> = records.iter().map(|r| r.numeric.growth()).collect();
    let gaps: Vec<f64> = records.iter().map(|r| r.diffs.endpoint_gap()).collect();
    Ok(ConvergenceReport {
        p,
        alpha,
        modes,
        width: loglog_fit(&eps, &widths)?,
        growth: loglog_fit(&eps, &growths)?,
        gap: loglog_fit(&eps, &gaps).ok(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub p: i64,
    /// `(alpha, signed S_p)` on the sweep grid.
    pub samples: Vec<(f64, f64)>,
    /// Refined locations of sign changes.
    pub roots: Vec<f64>,
}

/// Points spaced evenly in `ln alpha`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Signed `S_p` over a log grid with bisection on each sign change.
pub fn s_sweep(p: i64, alpha_min: f64, alpha_max: f64, points: usize) -> Result<SweepReport> {
    if !(alpha_min > 0.0 && alpha_max > alpha_min) || points < 2 {
        return Err(Error::InvalidInput(format!(
            "bad sweep range [{alpha_min}, {alpha_max}] with {points} points"
        )));
    }
    let grid = log_grid(alpha_min, alpha_max, points);
    let samples = crate::perturbation::signed_s_sweep(p, &grid)?;
    let sign_n = |alpha: f64| -> Result<f64> {
        let pr = problem(alpha, p)?;
        Ok(coupled_s(&pr.collision, &pr.series)?.1.signum())
    };
    let roots = samples
        .windows(2)
        .filter(|w| w[0].1.signum() != w[1].1.signum())
        .collect::<Vec<_>>()
        .par_iter()
        .map(|w| {
            let (mut a, mut b) = (w[0].0, w[1].0);
            let sa = sign_n(a)?;
            while b - a > 1e-12 * b {
                let mid = 0.5 * (a + b);
                if sign_n(mid)? == sa {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            Ok(0.5 * (a + b))
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport { p, samples, roots })
}

/// Direct isola points against the asymptotic curve at one amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveComparison {
    pub p: i64,
    pub alpha: f64,
    pub eps: f64,
    pub numeric: Vec<(f64, Complex64)>,
    /// Ellipse through order `eps^p`.
    pub asymptotic: Vec<(f64, Complex64)>,
    /// Largest distance from a direct point to the order `eps^p` ellipse.
    pub distance: f64,
    /// Same distance once the fourth-order terms are added (`p = 3` only).
    pub distance_fourth: Option<f64>,
}

fn segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((z - a) * d.conj()).re / len2
    };
    (z - (a + d * t.clamp(0.0, 1.0))).norm()
}

/// Closed polyline through the ellipse samples: one branch out, the other back.
fn closed_curve(samples: &[(f64, Complex64)]) -> Vec<Complex64> {
    let up: Vec<Complex64> = samples.iter().step_by(2).map(|s| s.1).collect();
    let down: Vec<Complex64> = samples.iter().skip(1).step_by(2).map(|s| s.1).collect();
    let mut curve = up;
    curve.extend(down.into_iter().rev());
    if let Some(&first) = curve.first() {
        curve.push(first);
    }
    curve
}

fn max_curve_distance(points: &[(f64, Complex64)], curve: &[Complex64]) -> f64 {
    points
        .iter()
        .map(|(_, z)| {
            curve
                .windows(2)
                .map(|w| segment_distance(*z, w[0], w[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

pub const CURVE_SAMPLES: usize = 2001;

pub fn curve_comparison(p: i64, alpha: f64, eps: f64, modes: usize) -> Result<CurveComparison> {
    use crate::perturbation::asymptotic_ellipse;
    let pr = problem(alpha, p)?;
    let asym = isola_asymptotics(&pr.collision, &pr.series)?;
    let m = extract_isola(&pr.series, eps, &asymptotic_seed(&asym, eps), modes)?;
    if !m.present {
        return Err(Error::NoInstability { p });
    }
    let numeric: Vec<(f64, Complex64)> = m.points.iter().map(|pt| (pt.mu, pt.lambda)).collect();
    let mut leading = asym.clone();
    if p.abs() == 3 {
        leading.mu4 = 0.0;
        leading.lambda4 = Complex64::new(0.0, 0.0);
    }
    let asymptotic = asymptotic_ellipse(&leading, eps, CURVE_SAMPLES);
    let distance = max_curve_distance(&numeric, &closed_curve(&asymptotic));
    let distance_fourth = (p.abs() == 3)
        .then(|| max_curve_distance(&numeric, &closed_curve(&asymptotic_ellipse(&asym, eps, CURVE_SAMPLES))));
    Ok(CurveComparison {
        p,
        alpha,
        eps,
        numeric,
        asymptotic,
        distance,
        distance_fourth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Float rendering used in every output file: 17 significant digits.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

/// A named output with metadata, a flat table for CSV and a structured
/// body for JSON.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub kind: String,
    pub meta: Vec<(String, Cell)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub body: Value,
}

impl Dataset {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            meta: vec![
                ("kind".into(), Cell::from(kind)),
                ("version".into(), Cell::from(VERSION)),
            ],
            columns: Vec::new(),
            rows: Vec::new(),
            body: Value::Null,
        }
    }

    pub fn meta(mut self, key: &str, value: impl Into<Cell>) -> Self {
        self.meta.push((key.to_string(), value.into()));
        self
    }

    pub fn columns(mut self, names: &[&str]) -> Self {
        self.columns = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn body(mut self, body: &impl Serialize) -> Result<Self> {
        self.body = serde_json::to_value(body).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(self)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => Ok(self.render_csv()),
            Format::Json => self.render_json(),
        }
    }

    fn render_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={}", v.render());
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    fn render_json(&self) -> Result<String> {
        let mut meta = serde_json::Map::new();
        for (k, v) in &self.meta {
            let value = match v {
                Cell::Int(i) => Value::from(*i),
                Cell::Float(f) => Value::from(*f),
                Cell::Text(s) => Value::from(s.clone()),
                Cell::Bool(b) => Value::from(*b),
            };
            meta.insert(k.clone(), value);
        }
        let mut root = serde_json::Map::new();
        root.insert("meta".into(), Value::Object(meta));
        root.insert("data".into(), self.body.clone());
        let mut s = to_json(&Value::Object(root))?;
        s.push('\n');
        Ok(s)
    }
}

/// serde_json formatter that writes floats with 17 significant digits.
struct FixedDigits(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for FixedDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        if v.is_finite() {
            write!(w, "{v:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with fixed-precision floats.
pub fn to_json(value: &impl Serialize) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits(Default::default()));
    value
        .serialize(&mut ser)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    String::from_utf8(buf).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Write `dataset` to `path`, or return the text when `path` is `None`.
pub fn emit(dataset: &Dataset, path: Option<&Path>, format: Format) -> Result<String> {
    let text = dataset.render(format)?;
    if let Some(path) = path {
        std::fs::write(path, &text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    Ok(text)
}

fn common(kind: &str, modes: usize) -> Dataset {
    Dataset::new(kind)
        .meta("modes", modes)
        .meta("threshold_rel", THRESHOLD_REL)
        .meta("endpoint_tol", ENDPOINT_TOL)
}

pub fn table1_dataset(rows: &[Table1Row], modes: usize) -> Result<Dataset> {
    let mut d = common("table1", modes).meta("eps", TABLE1_EPS).columns(&[
        "alpha",
        "p",
        "eps",
        "modes",
        "numeric_lo",
        "numeric_hi",
        "asymptotic_lo",
        "asymptotic_hi",
        "reference_lo",
        "reference_hi",
        "numeric_error",
        "asymptotic_error",
        "numeric_tol",
        "asymptotic_tol",
        "numeric_pass",
        "asymptotic_pass",
        "numeric_growth",
        "asymptotic_growth",
    ]);
    for r in rows {
        let rec = &r.record;
        d.row(vec![
            rec.alpha.into(),
            rec.p.into(),
            rec.eps.into(),
            rec.modes.into(),
            rec.numeric.floquet_lo.into(),
            rec.numeric.floquet_hi.into(),
            rec.asymptotic.floquet_lo.into(),
            rec.asymptotic.floquet_hi.into(),
            r.reference.0.into(),
            r.reference.1.into(),
            r.numeric_error.into(),
            r.asymptotic_error.into(),
            r.numeric_tol.into(),
            r.asymptotic_tol.into(),
            r.numeric_pass.into(),
            r.asymptotic_pass.into(),
            rec.numeric.growth().into(),
            rec.asymptotic.growth.into(),
        ]);
    }
    d.body(&rows)
}

pub fn convergence_dataset(report: &ConvergenceReport) -> Result<Dataset> {
    let mut d = common("convergence", report.modes)
        .meta("alpha", report.alpha)
        .meta("p", report.p)
        .meta("width_slope", report.width.slope)
        .meta("width_slope_stderr", report.width.stderr)
        .meta("growth_slope", report.growth.slope)
        .meta("growth_slope_stderr", report.growth.stderr)
        .meta("gap_slope", report.gap.map_or(f64::NAN, |g| g.slope))
        .meta("gap_slope_stderr", report.gap.map_or(f64::NAN, |g| g.stderr))
        .columns(&[
            "eps",
            "numeric_lo",
            "numeric_hi",
            "width",
            "growth",
            "asymptotic_lo",
            "asymptotic_hi",
            "gap_lo",
            "gap_hi",
        ]);
    for r in &report.records {
        d.row(vec![
            r.eps.into(),
            r.numeric.floquet_lo.into(),
            r.numeric.floquet_hi.into(),
            r.numeric.width().into(),
            r.numeric.growth().into(),
            r.asymptotic.floquet_lo.into(),
            r.asymptotic.floquet_hi.into(),
            r.diffs.endpoint_lo.into(),
            r.diffs.endpoint_hi.into(),
        ]);
    }
    d.body(report)
}

pub fn sweep_dataset(report: &SweepReport) -> Result<Dataset> {
    let roots: Vec<String> = report.roots.iter().map(|r| format_float(*r)).collect();
    let mut d = Dataset::new("s_sweep")
        .meta("p", report.p)
        .meta("points", report.samples.len())
        .meta("roots", roots.join(";").as_str())
        .columns(&["alpha", "s"]);
    for &(a, s) in &report.samples {
        d.row(vec![a.into(), s.into()]);
    }
    d.body(report)
}

pub fn spectrum_dataset(alpha: f64, eps: f64, slices: &[crate::ffh::SpectrumSlice], modes: usize) -> Result<Dataset> {
    let mut d = common("spectrum", modes)
        .meta("alpha", alpha)
        .meta("eps", eps)
        .columns(&["mu", "re_lambda", "im_lambda"]);
    for s in slices {
        for z in &s.eigenvalues {
            d.row(vec![s.mu.into(), z.re.into(), z.im.into()]);
        }
    }
    d.body(&slices)
}

pub fn stokes_dataset(series: &StokesSeries, eps: f64, samples: usize) -> Result<Dataset> {
    let (eta, u) = series.summed_harmonics(eps);
    let mut d = Dataset::new("stokes")
        .meta("alpha", series.alpha())
        .meta("eps", eps)
        .meta("c", series.wave_speed(eps))
        .columns(&["x", "eta", "u"]);
    let mut body = Vec::with_capacity(samples);
    for i in 0..samples {
        let x = 2.0 * std::f64::consts::PI * i as f64 / samples as f64;
        let (e, v) = (eta.eval(x), u.eval(x));
        d.row(vec![x.into(), e.into(), v.into()]);
        body.push([x, e, v]);
    }
    d.body(&body)
}

pub fn coefficients_dataset(series: &StokesSeries) -> Result<Dataset> {
    let coeffs = series.named_coefficients();
    let mut d = Dataset::new("stokes_coefficients")
        .meta("alpha", series.alpha())
        .columns(&["name", "value"]);
    let mut body = serde_json::Map::new();
    for (name, v) in &coeffs {
        d.row(vec![name.as_str().into(), (*v).into()]);
        body.insert(name.clone(), Value::from(*v));
    }
    d.body(&body)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionSummary {
    pub alpha: f64,
    pub p: i64,
    pub k: f64,
    pub mu0: f64,
    pub n: i64,
    pub m: i64,
    pub lambda0_im: f64,
    pub residual: f64,
    pub tie: bool,
}

impl From<&CollisionPoint> for CollisionSummary {
    fn from(c: &CollisionPoint) -> Self {
        Self {
            alpha: c.setup.alpha,
            p: c.p,
            k: c.k,
            mu0: c.mu0,
            n: c.n,
            m: c.m,
            lambda0_im: c.lambda0.im,
            residual: c.residual,
            tie: c.tie,
        }
    }
}

pub fn collision_dataset(points: &[CollisionPoint]) -> Result<Dataset> {
    let rows: Vec<CollisionSummary> = points.iter().map(CollisionSummary::from).collect();
    let mut d =
        Dataset::new("collision").columns(&["alpha", "p", "k", "mu0", "n", "m", "lambda0_im", "residual", "tie"]);
    if let Some(first) = rows.first() {
        d = d.meta("alpha", first.alpha);
    }
    for r in &rows {
        d.row(vec![
            r.alpha.into(),
            r.p.into(),
            r.k.into(),
            r.mu0.into(),
            r.n.into(),
            r.m.into(),
            r.lambda0_im.into(),
            r.residual.into(),
            r.tie.into(),
        ]);
    }
    d.body(&rows)
}

fn isola_row_columns() -> [&'static str; 8] {
    [
        "method",
        "present",
        "floquet_lo",
        "floquet_hi",
        "mu_star",
        "re_lambda_star",
        "im_lambda_star",
        "growth",
    ]
}

pub fn numeric_isola_dataset(alpha: f64, m: &IsolaMeasurement) -> Result<Dataset> {
    let mut d = common("isola", m.modes)
        .meta("alpha", alpha)
        .meta("eps", m.eps)
        .meta("p", m.p)
        .columns(&isola_row_columns());
    d.row(numeric_row(m));
    d.body(m)
}

fn numeric_row(m: &IsolaMeasurement) -> Vec<Cell> {
    vec![
        "numeric".into(),
        m.present.into(),
        m.floquet_lo.into(),
        m.floquet_hi.into(),
        m.mu_star.into(),
        m.lambda_star.re.into(),
        m.lambda_star.im.into(),
        m.growth().into(),
    ]
}

fn asymptotic_row(a: &EvaluatedAsymptotics) -> Vec<Cell> {
    vec![
        "asymptotic".into(),
        (a.floquet_hi > a.floquet_lo).into(),
        a.floquet_lo.into(),
        a.floquet_hi.into(),
        a.mu_star.into(),
        a.lambda_star.re.into(),
        a.lambda_star.im.into(),
        a.growth.into(),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticIsola {
    pub alpha: f64,
    pub eps: f64,
    pub evaluated: EvaluatedAsymptotics,
    pub asymptotics: IsolaAsymptotics,
}

pub fn asymptotic_isola_dataset(asym: &IsolaAsymptotics, eps: f64) -> Result<Dataset> {
    let evaluated = EvaluatedAsymptotics::new(asym, eps);
    let alpha = asym.collision.setup.alpha;
    let mut d = Dataset::new("isola")
        .meta("alpha", alpha)
        .meta("eps", eps)
        .meta("p", asym.p)
        .columns(&isola_row_columns());
    d.row(asymptotic_row(&evaluated));
    d.body(&AsymptoticIsola {
        alpha,
        eps,
        evaluated,
        asymptotics: asym.clone(),
    })
}

pub fn comparison_dataset(rec: &ComparisonRecord) -> Result<Dataset> {
    let mut d = common("isola", rec.modes)
        .meta("alpha", rec.alpha)
        .meta("eps", rec.eps)
        .meta("p", rec.p)
        .meta("diff_endpoint_lo", rec.diffs.endpoint_lo)
        .meta("diff_endpoint_hi", rec.diffs.endpoint_hi)
        .meta("diff_mu_star", rec.diffs.mu_star)
        .meta("diff_growth", rec.diffs.growth)
        .meta("diff_im_center", rec.diffs.im_center)
        .columns(&isola_row_columns());
    d.row(numeric_row(&rec.numeric));
    d.row(asymptotic_row(&rec.asymptotic));
    d.body(rec)
}

pub fn curves_dataset(c: &CurveComparison, modes: usize) -> Result<Dataset> {
    let mut d = common("curves", modes)
        .meta("alpha", c.alpha)
        .meta("eps", c.eps)
        .meta("p", c.p)
        .meta("distance", c.distance)
        .meta("distance_fourth", c.distance_fourth.unwrap_or(f64::NAN))
        .columns(&["source", "mu", "re_lambda", "im_lambda"]);
    for (src, pts) in [("numeric", &c.numeric), ("asymptotic", &c.asymptotic)] {
        for (mu, z) in pts.iter() {
            d.row(vec![src.into(), (*mu).into(), z.re.into(), z.im.into()]);
        }
    }
    d.body(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_power() {
        let x = [1e-3, 2e-3, 4e-3, 8e-3];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(3)).collect();
        let f = loglog_fit(&x, &y).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
        assert!(f.stderr < 1e-10);
    }

    #[test]
    fn fit_rejects_two_points() {
        assert!(matches!(
            loglog_fit(&[1.0, 2.0], &[1.0, 4.0]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(
            loglog_fit(&[1.0, 2.0, 3.0], &[1.0, 0.0, 4.0]),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn unordered_pairs() {
        assert_eq!(unordered_error((2.0, 1.0), (1.0, 2.0)), 0.0);
        assert!((unordered_error((1.0, 2.5), (2.0, 1.0)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-2.5), "-2.5000000000000000e0");
        let s = to_json(&vec![0.1f64, 1e-300]).unwrap();
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![0.1, 1e-300]);
    }

    #[test]
    fn csv_layout() {
        let mut d = Dataset::new("demo").meta("alpha", 1.0).columns(&["a", "b"]);
        d.row(vec![Cell::from(1i64), Cell::from(0.5)]);
        let s = d.render(Format::Csv).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# kind=demo");
        assert!(lines[1].starts_with("# version="));
        assert_eq!(lines[2], "# alpha=1.0000000000000000e0");
        assert_eq!(lines[3], "a,b");
        assert_eq!(lines[4], "1,5.0000000000000000e-1");
        assert!(s.ends_with('\n'));
    }

    #[test]
    fn segment_distance_cases() {
        let a = Complex64::new(0.0, 0.0);
        let b = Complex64::new(2.0, 0.0);
        assert!((segment_distance(Complex64::new(1.0, 1.0), a, b) - 1.0).abs() < 1e-15);
        assert!((segment_distance(Complex64::new(3.0, 0.0), a, b) - 1.0).abs() < 1e-15);
        assert_eq!(segment_distance(Complex64::new(1.0, 0.0), a, a), 1.0);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.05, 5.0, 400);
        assert_eq!(g.len(), 400);
        assert!((g[0] - 0.05).abs() < 1e-15 && (g[399] - 5.0).abs() < 1e-13);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
