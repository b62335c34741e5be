//! File formats shared by the CLI and the FFI layer.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gmm::{FitResult, Point2D, Scatterplot};
use crate::vqm::{scalar_score, RankedList, VqmScore};

/// Format like C's `%.9g`: 9 significant digits, trailing zeros trimmed,
/// scientific notation outside `[1e-5, 1e9)`.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    // Round to 9 significant digits first; the exponent may move (9.9999999999 -> 10).
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Read `x,y` points, one per row. A first row that is not numeric is taken
/// as a header. Rows are numbered from 1 (physical line) in errors.
pub fn read_points_csv<R: Read>(reader: R) -> Result<Scatterplot> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut points = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() < 2 {
            return Err(Error::Parse { row, message: "expected two columns `x,y`".into() });
        }
        let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
        match parsed {
            (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => points.push(Point2D::new(x, y)),
            (Ok(_), Ok(_)) => {
                return Err(Error::Parse { row, message: "non-finite coordinate".into() });
            }
            _ if row == 1 => {}
            _ => {
                return Err(Error::Parse {
                    row,
                    message: format!("non-numeric cell in `{}`", rec.iter().collect::<Vec<_>>().join(",")),
                });
            }
        }
    }
    if points.is_empty() {
        return Err(Error::Parse { row: 0, message: "no points".into() });
    }
    Scatterplot::new(points)
}

pub fn write_points_csv<W: Write>(writer: W, scatterplot: &Scatterplot) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "y"])?;
    for p in scatterplot.points() {
        w.write_record([fmt_sig9(p.x), fmt_sig9(p.y)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ComponentJson {
    weight: f64,
    mean: [f64; 2],
    covariance: CovJson,
}

#[derive(Serialize)]
struct CovJson {
    xx: f64,
    xy: f64,
    yy: f64,
}

#[derive(Serialize)]
struct FitJson<'a> {
    k_star: usize,
    components: Vec<ComponentJson>,
    log_likelihood: f64,
    bic: f64,
    per_k_bic: Vec<(usize, f64)>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    warnings: &'a [crate::gmm::FitWarning],
}

/// JSON export of a model-selection result.
pub fn fit_result_json(result: &FitResult) -> serde_json::Value {
    let doc = FitJson {
        k_star: result.k_star,
        components: result
            .model
            .components
            .iter()
            .map(|c| ComponentJson {
                weight: c.weight,
                mean: [c.mean.x, c.mean.y],
                covariance: CovJson { xx: c.cov.xx, xy: c.cov.xy, yy: c.cov.yy },
            })
            .collect(),
        log_likelihood: result.model.log_likelihood,
        bic: result.bic,
        per_k_bic: result.per_k_bic.clone(),
        warnings: &result.warnings,
    };
    serde_json::to_value(doc).expect("fit result is serializable")
}

/// `id,k_star,m,scalar_score`, one row per scored scatterplot.
pub fn write_scores_csv<W: Write>(writer: W, scores: &[(String, VqmScore)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "k_star", "m", "scalar_score"])?;
    for (id, s) in scores {
        w.write_record([id.clone(), s.k_star.to_string(), s.m.to_string(), fmt_sig9(scalar_score(*s))])?;
    }
    w.flush()?;
    Ok(())
}

/// Read `id,k_star,m[,...]`; extra columns are ignored.
pub fn read_scores_csv<R: Read>(reader: R) -> Result<Vec<(String, VqmScore)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse { row: 0, message: format!("missing `{name}` column") })
    };
    let (id_col, k_col, m_col) = (col("id")?, col("k_star")?, col("m")?);
    let mut out = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec?;
        let int = |c: usize| -> Result<usize> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse().map_err(|_| Error::Parse { row, message: format!("`{raw}` is not a count") })
        };
        let score = VqmScore::new(int(m_col)?, int(k_col)?).map_err(|e| Error::Parse { row, message: e.to_string() })?;
        out.push((rec.get(id_col).unwrap_or("").to_string(), score));
    }
    Ok(out)
}

/// `rank,id,k_star,m,scalar_score`, ranks starting at 1.
pub fn write_ranking_csv<W: Write>(writer: W, ranked: &RankedList) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "id", "k_star", "m", "scalar_score"])?;
    for (i, e) in ranked.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            e.id.clone(),
            e.score.k_star.to_string(),
            e.score.m.to_string(),
            fmt_sig9(scalar_score(e.score)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
