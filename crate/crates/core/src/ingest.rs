//! Data preparation: CSV series loading, splicing, annual-to-quarterly
//! interpolation, transforms, and declarative recipes producing a [`Dataset`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::period::{Period, Quarter};

/// One raw series at a single frequency, sorted by date.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub periods: Vec<Period>,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(name: &str, periods: Vec<Period>, values: Vec<f64>) -> Result<Self> {
        if periods.len() != values.len() {
            return Err(Error::dim("series values", periods.len(), values.len()));
        }
        let s = Self {
            name: name.to_string(),
            periods,
            values,
        };
        s.check_order()?;
        Ok(s)
    }

    pub fn quarterly(name: &str, start: Quarter, values: Vec<f64>) -> Self {
        let periods = (0..values.len())
            .map(|i| Period::Quarter(start.offset(i as i64)))
            .collect();
        Self {
            name: name.to_string(),
            periods,
            values,
        }
    }

    pub fn annual(name: &str, start: i32, values: Vec<f64>) -> Self {
        let periods = (0..values.len()).map(|i| Period::Year(start + i as i32)).collect();
        Self {
            name: name.to_string(),
            periods,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_at(&self, p: Period) -> Option<f64> {
        self.periods.iter().position(|q| *q == p).map(|i| self.values[i])
    }

    fn is_annual(&self) -> bool {
        matches!(self.periods.first(), Some(Period::Year(_)))
    }

    fn check_order(&self) -> Result<()> {
        let annual = self.is_annual();
        for w in self.periods.windows(2) {
            if matches!(w[1], Period::Year(_)) != annual {
                return Err(Error::invalid(format!(
                    "series `{}` mixes annual and quarterly dates",
                    self.name
                )));
            }
            if w[1] <= w[0] {
                return Err(Error::invalid(format!(
                    "series `{}` is not strictly increasing at {}",
                    self.name, w[1]
                )));
            }
        }
        Ok(())
    }
}

/// Which CSV columns hold the date and the value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    #[serde(default = "default_date_column")]
    pub date_column: String,
    pub value_column: String,
}

fn default_date_column() -> String {
    "date".into()
}

/// Loads one series, sorted by date. Line numbers in errors are 1-based file lines.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Series> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(parse_err(1, "empty file".into()));
    }
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            parse_err(
                1,
                format!(
                    "missing column `{name}` (found: {})",
                    headers.iter().collect::<Vec<_>>().join(", ")
                ),
            )
        })
    };
    let (dc, vc) = (col(&schema.date_column)?, col(&schema.value_column)?);
    let mut rows: Vec<(Period, f64, usize)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let date = rec.get(dc).unwrap_or("");
        let value = rec.get(vc).unwrap_or("");
        let p: Period = date.parse().map_err(|e: Error| parse_err(line, e.to_string()))?;
        if value.is_empty() {
            return Err(parse_err(line, format!("missing value for {p}")));
        }
        let v: f64 = value
            .parse()
            .map_err(|_| parse_err(line, format!("unparseable value `{value}`")))?;
        if !v.is_finite() {
            return Err(parse_err(line, format!("non-finite value `{value}`")));
        }
        rows.push((p, v, line));
    }
    if rows.is_empty() {
        return Err(parse_err(1, "file has no data rows".into()));
    }
    rows.sort_by_key(|r| r.0);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(parse_err(
                w[1].2,
                format!("duplicate date {} (also on line {})", w[1].0, w[0].2),
            ));
        }
    }
    Series::new(
        &schema.value_column,
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
    )
    .map_err(|e| parse_err(0, e.to_string()))
}

pub fn write_csv(series: &Series, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", series.name.as_str()])?;
    for (p, v) in series.periods.iter().zip(&series.values) {
        w.write_record([p.to_string(), format!("{v}")])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpliceMethod {
    /// Concatenate levels as they are.
    Level,
    /// Rescale the earlier block so it matches the later source at the link date.
    RatioLink,
}

/// Joins two sources; the later one wins from its first date.
///
/// The link date for `RatioLink` is the last date both cover; for adjacent
/// sources without overlap the earlier block's last value is linked to the later
/// block's first.
pub fn splice(earlier: &Series, later: &Series, method: SpliceMethod) -> Result<Series> {
    if earlier.is_empty() || later.is_empty() {
        return Err(Error::invalid("cannot splice an empty series"));
    }
    if earlier.is_annual() != later.is_annual() {
        return Err(Error::invalid(format!(
            "cannot splice `{}` and `{}` at different frequencies",
            earlier.name, later.name
        )));
    }
    let first_later = later.periods[0];
    let last_earlier = *earlier.periods.last().unwrap();
    if last_earlier.next() < first_later {
        return Err(Error::invalid(format!(
            "gap between `{}` (ends {last_earlier}) and `{}` (starts {first_later})",
            earlier.name, later.name
        )));
    }
    if earlier.periods[0] >= first_later {
        return Err(Error::invalid(format!(
            "`{}` contributes nothing before `{}` starts at {first_later}",
            earlier.name, later.name
        )));
    }
    let factor = match method {
        SpliceMethod::Level => 1.0,
        SpliceMethod::RatioLink => {
            let link = earlier
                .periods
                .iter()
                .rev()
                .find(|p| later.periods.binary_search(p).is_ok())
                .copied();
            let (num, den) = match link {
                Some(p) => (later.value_at(p).unwrap(), earlier.value_at(p).unwrap()),
                None => (later.values[0], *earlier.values.last().unwrap()),
            };
            if den == 0.0 {
                return Err(Error::invalid(format!(
                    "ratio link divides by a zero value of `{}`",
                    earlier.name
                )));
            }
            num / den
        }
    };
    let mut periods = Vec::new();
    let mut values = Vec::new();
    for (p, v) in earlier.periods.iter().zip(&earlier.values) {
        if *p < first_later {
            periods.push(*p);
            values.push(v * factor);
        }
    }
    periods.extend_from_slice(&later.periods);
    values.extend_from_slice(&later.values);
    Series::new(&later.name, periods, values)
}

/// Linear interpolation in levels of an annual series placed at quarter `anchor`
/// of each year, restricted to `window` (inclusive years) when given.
pub fn interpolate_quarterly(annual: &Series, anchor: u8, window: Option<(i32, i32)>) -> Result<Series> {
    if !annual.is_annual() {
        return Err(Error::invalid(format!("`{}` is not an annual series", annual.name)));
    }
    let (lo, hi) = match window {
        Some(w) => w,
        None => (
            annual.periods.first().map(|p| p.year()).unwrap_or(0),
            annual.periods.last().map(|p| p.year()).unwrap_or(-1),
        ),
    };
    if hi <= lo {
        return Err(Error::invalid("interpolation needs at least two annual endpoints"));
    }
    let mut points = Vec::new();
    for y in lo..=hi {
        let v = annual
            .value_at(Period::Year(y))
            .ok_or_else(|| Error::invalid(format!("`{}` has no value for {y}", annual.name)))?;
        points.push(v);
    }
    let start = Quarter::new(lo, anchor)?;
    let mut values = Vec::with_capacity(4 * points.len());
    for w in points.windows(2) {
        for j in 0..4 {
            values.push(w[0] + (w[1] - w[0]) * j as f64 / 4.0);
        }
    }
    values.push(*points.last().unwrap());
    Ok(Series::quarterly(&annual.name, start, values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// `100 · (log yₜ − log yₜ₋₁)`
    LogDiff100,
    Difference,
    Identity,
}

/// Applies a one-series transform; differencing drops the first period.
pub fn transform(series: &Series, kind: Transform) -> Result<Series> {
    match kind {
        Transform::Identity => Ok(series.clone()),
        Transform::Difference | Transform::LogDiff100 => {
            if kind == Transform::LogDiff100 {
                if let Some(i) = series.values.iter().position(|v| !(*v > 0.0)) {
                    return Err(Error::invalid(format!(
                        "log transform of nonpositive value {} in `{}` at {}",
                        series.values[i], series.name, series.periods[i]
                    )));
                }
            }
            let mut periods = Vec::new();
            let mut values = Vec::new();
            for i in 1..series.len() {
                if series.periods[i - 1].next() != series.periods[i] {
                    return Err(Error::invalid(format!(
                        "`{}` has a gap before {}; differences would span it",
                        series.name, series.periods[i]
                    )));
                }
                periods.push(series.periods[i]);
                values.push(match kind {
                    Transform::LogDiff100 => 100.0 * (series.values[i].ln() - series.values[i - 1].ln()),
                    _ => series.values[i] - series.values[i - 1],
                });
            }
            Series::new(&series.name, periods, values)
        }
    }
}

/// `a − b` on the dates both cover.
pub fn spread(a: &Series, b: &Series) -> Result<Series> {
    let mut periods = Vec::new();
    let mut values = Vec::new();
    for (p, v) in a.periods.iter().zip(&a.values) {
        if let Some(w) = b.value_at(*p) {
            periods.push(*p);
            values.push(v - w);
        }
    }
    if periods.is_empty() {
        return Err(Error::invalid(format!("`{}` and `{}` share no dates", a.name, b.name)));
    }
    Series::new(&format!("{}_minus_{}", a.name, b.name), periods, values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub path: PathBuf,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    pub value_column: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Interpolate {
        input: String,
        #[serde(rename = "as")]
        output: String,
        #[serde(default = "default_anchor")]
        anchor: u8,
        #[serde(default)]
        window: Option<(i32, i32)>,
    },
    Splice {
        earlier: String,
        later: String,
        #[serde(rename = "as")]
        output: String,
        /// Defaults to ratio linking for levels and plain concatenation for transformed series.
        #[serde(default)]
        method: Option<SpliceMethod>,
    },
    Transform {
        input: String,
        #[serde(rename = "as")]
        output: String,
        kind: Transform,
    },
    Spread {
        a: String,
        b: String,
        #[serde(rename = "as")]
        output: String,
    },
}

fn default_anchor() -> u8 {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub variables: Vec<String>,
    #[serde(default)]
    pub start: Option<Quarter>,
    #[serde(default)]
    pub end: Option<Quarter>,
}

/// Declarative pipeline: named sources, ordered steps, and the output variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub sources: BTreeMap<String, SourceSpec>,
    #[serde(default)]
    pub steps: Vec<Step>,
    pub output: OutputSpec,
}

/// Runs a recipe; relative source paths resolve against `base`.
pub fn run_recipe(recipe: &Recipe, base: &Path) -> Result<Dataset> {
    let mut env: BTreeMap<String, Series> = BTreeMap::new();
    let mut transformed: BTreeSet<String> = BTreeSet::new();
    for (name, src) in &recipe.sources {
        let path = if src.path.is_absolute() {
            src.path.clone()
        } else {
            base.join(&src.path)
        };
        let mut s = load_csv(
            &path,
            &CsvSchema {
                date_column: src.date_column.clone(),
                value_column: src.value_column.clone(),
            },
        )?;
        s.name = name.clone();
        env.insert(name.clone(), s);
    }
    let get = |env: &BTreeMap<String, Series>, n: &str| -> Result<Series> {
        env.get(n)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("recipe refers to unknown series `{n}`")))
    };
    for step in &recipe.steps {
        let (name, mut s, is_transformed) = match step {
            Step::Interpolate {
                input,
                output,
                anchor,
                window,
            } => (
                output,
                interpolate_quarterly(&get(&env, input)?, *anchor, *window)?,
                transformed.contains(input),
            ),
            Step::Splice {
                earlier,
                later,
                output,
                method,
            } => {
                let was = transformed.contains(earlier) || transformed.contains(later);
                let m = method.unwrap_or(if was {
                    SpliceMethod::Level
                } else {
                    SpliceMethod::RatioLink
                });
                (output, splice(&get(&env, earlier)?, &get(&env, later)?, m)?, was)
            }
            Step::Transform { input, output, kind } => (
                output,
                transform(&get(&env, input)?, *kind)?,
                *kind != Transform::Identity || transformed.contains(input),
            ),
            Step::Spread { a, b, output } => (output, spread(&get(&env, a)?, &get(&env, b)?)?, true),
        };
        s.name = name.clone();
        if is_transformed {
            transformed.insert(name.clone());
        }
        env.insert(name.clone(), s);
    }
    assemble(&recipe.output, &env)
}

fn assemble(output: &OutputSpec, env: &BTreeMap<String, Series>) -> Result<Dataset> {
    if output.variables.is_empty() {
        return Err(Error::invalid("recipe output lists no variables"));
    }
    let mut series = Vec::new();
    for v in &output.variables {
        let s = env
            .get(v)
            .ok_or_else(|| Error::invalid(format!("output variable `{v}` is never produced")))?;
        if s.is_annual() {
            return Err(Error::invalid(format!(
                "output variable `{v}` is annual; interpolate it first"
            )));
        }
        series.push(s);
    }
    let first = series.iter().map(|s| s.periods[0]).max().unwrap();
    let last = series.iter().map(|s| *s.periods.last().unwrap()).min().unwrap();
    let start = output.start.map(Period::Quarter).unwrap_or(first).max(first);
    let end = output.end.map(Period::Quarter).unwrap_or(last).min(last);
    let (Some(start), Some(end)) = (start.as_quarter(), end.as_quarter()) else {
        unreachable!("quarterly series checked above")
    };
    if output.start.is_some_and(|s| Period::Quarter(s) < first) || output.end.is_some_and(|e| Period::Quarter(e) > last)
    {
        return Err(Error::invalid(format!(
            "requested output window exceeds the common coverage {first}..{last}"
        )));
    }
    let t = start.count_to(end);
    if t == 0 {
        return Err(Error::invalid("output variables share no common dates"));
    }
    let dates: Vec<Quarter> = (0..t).map(|i| start.offset(i as i64)).collect();
    let mut y = DMatrix::zeros(t, series.len());
    for (j, s) in series.iter().enumerate() {
        for (i, d) in dates.iter().enumerate() {
            y[(i, j)] = s
                .value_at(Period::Quarter(*d))
                .ok_or_else(|| Error::invalid(format!("`{}` is missing {d}", output.variables[j])))?;
        }
    }
    Dataset::new(y, output.variables.clone(), dates)
}

/// Loads a recipe file and runs it.
pub fn run_recipe_file(path: &Path) -> Result<Dataset> {
    let recipe: Recipe = serde_json::from_str(&fs::read_to_string(path)?)?;
    run_recipe(&recipe, path.parent().unwrap_or(Path::new(".")))
}

/// Writes `date,<vars>` rows with shortest round-trip floats.
pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(data.labels.iter().cloned());
    w.write_record(&header)?;
    for (i, d) in data.dates.iter().enumerate() {
        let mut rec = vec![d.to_string()];
        rec.extend(data.y.row(i).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "date" {
        return Err(parse_err(1, "expected header `date,<variables>`".into()));
    }
    let labels: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    let mut dates = Vec::new();
    let mut vals = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        dates.push(rec[0].parse::<Quarter>().map_err(|e| parse_err(line, e.to_string()))?);
        for (j, f) in rec.iter().skip(1).enumerate() {
            vals.push(
                f.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("unparseable value `{f}` for {}", labels[j])))?,
            );
        }
    }
    if dates.is_empty() {
        return Err(parse_err(1, "dataset has no rows".into()));
    }
    let y = DMatrix::from_row_slice(dates.len(), labels.len(), &vals);
    Dataset::new(y, labels, dates)
}

/// SHA-256 of a file's bytes, hex-encoded.
pub fn file_hash(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}
