//! Human-judgment ingestion, majority-vote labels, symmetry replication and
//! deduplication of the merger's training corpus, plus the two-component
//! scatterplot generator used to produce judged stimuli.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{Point2D, Scatterplot};
use crate::io::fmt_sig9;
use crate::pairspace::{align_training_record, compose_covariance, AlignedPairFeatures, PairFeatures, FEATURE_NAMES};
use crate::seed;

/// Scale-equality tolerance for treating an aligned component as isotropic.
pub const ISOTROPY_TOLERANCE: f64 = 1e-9;

/// Angles substituted for the orientation of an isotropic component.
pub const ISOTROPIC_ANGLES: [f64; 9] = [
    -PI / 2.0,
    -3.0 * PI / 8.0,
    -PI / 4.0,
    -PI / 8.0,
    0.0,
    PI / 8.0,
    PI / 4.0,
    3.0 * PI / 8.0,
    PI / 2.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote {
    One,
    MoreThanOne,
}

/// Merge decision `H`: 0 = do not merge, 1 = merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum MergeLabel {
    DoNotMerge = 0,
    Merge = 1,
}

impl MergeLabel {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_bool(merge: bool) -> Self {
        if merge {
            MergeLabel::Merge
        } else {
            MergeLabel::DoNotMerge
        }
    }
}

impl From<MergeLabel> for u8 {
    fn from(l: MergeLabel) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for MergeLabel {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(MergeLabel::DoNotMerge),
            1 => Ok(MergeLabel::Merge),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

/// Majority vote: do-not-merge only when strictly more than half of the
/// votes see more than one cluster. Ties merge.
pub fn summarize_judgments(judgments: &[Vote]) -> Result<MergeLabel> {
    if judgments.is_empty() {
        return Err(Error::InvalidArgument("no judgments to summarize".into()));
    }
    let more = judgments.iter().filter(|&&v| v == Vote::MoreThanOne).count();
    Ok(MergeLabel::from_bool(2 * more <= judgments.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgmentRecord {
    pub id: String,
    /// Generator parameters (centers on the y-axis, angles in `[0, pi/2]`).
    pub params: PairFeatures,
    pub judgments: Vec<Vote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub features: AlignedPairFeatures,
    pub label: MergeLabel,
    pub origin_id: String,
}

/// Dedup key: every feature rounded to 9 decimals, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey([i64; 8]);

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            let sign = if *v < 0 { "-" } else { "" };
            let a = v.unsigned_abs();
            write!(f, "{sign}{}.{:09}", a / 1_000_000_000, a % 1_000_000_000)?;
        }
        Ok(())
    }
}

pub fn canonical_key(features: &AlignedPairFeatures) -> CanonicalKey {
    // Rounding to an integer count of 1e-9 also folds -0.0 into 0.
    CanonicalKey(features.to_array().map(|v| (v * 1e9).round() as i64))
}

fn is_isotropic(sigma_x: f64, sigma_y: f64) -> bool {
    (sigma_x - sigma_y).abs() <= ISOTROPY_TOLERANCE
}

/// All symmetry replicas of an aligned record, in a fixed order: the record,
/// its y-axis reflection, the component swap of both, then the nine-angle
/// substitutions for each isotropic component. Duplicates are kept.
pub fn replicate(record: &LabeledPair) -> Vec<LabeledPair> {
    let f = *record.features.features();
    let reflect = |p: PairFeatures| {
        let mut r = p;
        r.shape_u.theta = -p.shape_u.theta;
        r.shape_v.theta = -p.shape_v.theta;
        r
    };
    let swap = |p: PairFeatures| PairFeatures {
        tau: 1.0 - p.tau,
        mu: p.mu,
        shape_u: p.shape_v,
        shape_v: p.shape_u,
    };

    let mut out = vec![f, reflect(f), swap(f), swap(reflect(f))];
    if is_isotropic(f.shape_u.sigma_x, f.shape_u.sigma_y) {
        out.extend(ISOTROPIC_ANGLES.iter().map(|&t| {
            let mut r = f;
            r.shape_u.theta = t;
            r
        }));
    }
    if is_isotropic(f.shape_v.sigma_x, f.shape_v.sigma_y) {
        out.extend(ISOTROPIC_ANGLES.iter().map(|&t| {
            let mut r = f;
            r.shape_v.theta = t;
            r
        }));
    }
    out.into_iter()
        .map(|p| LabeledPair {
            features: AlignedPairFeatures::from_symmetry(p),
            label: record.label,
            origin_id: record.origin_id.clone(),
        })
        .collect()
}

/// A judgment row dropped because its aligned parameters repeat an earlier one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestDuplicate {
    pub row: usize,
    pub id: String,
    pub kept_id: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    pub records: Vec<JudgmentRecord>,
    pub rows_read: usize,
    pub duplicates: Vec<IngestDuplicate>,
    pub warnings: Vec<String>,
}

const PARAM_COLUMNS: [&str; 8] =
    ["tau", "mu", "sigma_ux", "sigma_uy", "sigma_vx", "sigma_vy", "theta_u", "theta_v"];

/// Parse a judgment benchmark CSV.
///
/// Columns: `id`, the eight generator parameters, optional `alpha` and `n`
/// (dropped), then vote columns `j1..jK` holding 1 for "one cluster" and 0
/// for "more than one". Rows whose aligned parameters coincide with an
/// earlier row are dropped (first occurrence kept) and listed in the report.
/// Data rows are numbered from 1 in errors.
pub fn ingest_benchmark<R: Read>(reader: R) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut report = IngestReport::default();
    let mut rows = rdr.records();
    let header = match rows.next() {
        None => return Ok(report),
        Some(h) => h?,
    };

    let mut id_col = None;
    let mut param_cols = [usize::MAX; 8];
    let mut vote_cols = Vec::new();
    for (i, name) in header.iter().enumerate() {
        let lname = name.to_ascii_lowercase();
        if lname == "id" {
            id_col = Some(i);
        } else if let Some(p) = PARAM_COLUMNS.iter().position(|c| *c == lname) {
            param_cols[p] = i;
        } else if lname == "alpha" || lname == "n" {
            // Image rotation and point count do not change the mixture.
        } else if lname.len() > 1 && lname.starts_with('j') && lname[1..].parse::<u32>().is_ok() {
            vote_cols.push(i);
        } else {
            report.warnings.push(format!("ignoring unknown column `{name}`"));
        }
    }
    let id_col = id_col.ok_or_else(|| Error::Parse { row: 0, message: "missing `id` column".into() })?;
    if let Some(p) = param_cols.iter().position(|&c| c == usize::MAX) {
        return Err(Error::Parse { row: 0, message: format!("missing `{}` column", PARAM_COLUMNS[p]) });
    }
    if vote_cols.is_empty() {
        return Err(Error::Parse { row: 0, message: "no judgment columns `j1..jK`".into() });
    }

    let mut seen: HashMap<CanonicalKey, String> = HashMap::new();
    for (idx, rec) in rows.enumerate() {
        let row = idx + 1;
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        report.rows_read += 1;
        let field = |col: usize| -> Result<&str> {
            rec.get(col).ok_or_else(|| Error::Parse { row, message: format!("missing column {}", col + 1) })
        };
        let id = field(id_col)?.to_string();
        let mut values = [0.0; 8];
        for (slot, (&col, name)) in values.iter_mut().zip(param_cols.iter().zip(PARAM_COLUMNS)) {
            let raw = field(col)?;
            *slot = raw
                .parse::<f64>()
                .map_err(|_| Error::Parse { row, message: format!("`{name}` = `{raw}` is not a number") })?;
        }
        let params = PairFeatures::from_array(values);
        let aligned = align_training_record(&params).map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let judgments = vote_cols
            .iter()
            .map(|&c| match field(c)? {
                "1" => Ok(Vote::One),
                "0" => Ok(Vote::MoreThanOne),
                other => Err(Error::Parse { row, message: format!("vote `{other}` is not 0 or 1") }),
            })
            .collect::<Result<Vec<_>>>()?;

        let key = canonical_key(&aligned);
        if let Some(kept) = seen.get(&key) {
            report.duplicates.push(IngestDuplicate { row, id, kept_id: kept.clone() });
            continue;
        }
        seen.insert(key, id.clone());
        report.records.push(JudgmentRecord { id, params, judgments });
    }
    Ok(report)
}

/// Write a judgment benchmark CSV readable by [`ingest_benchmark`].
pub fn write_benchmark<W: Write>(writer: W, records: &[JudgmentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n_votes = records.iter().map(|r| r.judgments.len()).max().unwrap_or(0);
    let mut header: Vec<String> = vec!["id".into()];
    header.extend(PARAM_COLUMNS.iter().map(|s| s.to_string()));
    header.extend((1..=n_votes).map(|j| format!("j{j}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.id.clone()];
        row.extend(r.params.to_array().iter().map(|v| fmt_sig9(*v)));
        row.extend(r.judgments.iter().map(|v| if *v == Vote::One { "1" } else { "0" }.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Deduplicated labeled pairs with their source scatterplots.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingCorpus {
    pub records: Vec<LabeledPair>,
    /// origin id -> indices into `records`.
    pub provenance: BTreeMap<String, Vec<usize>>,
}

impl TrainingCorpus {
    /// Build from labeled pairs, dropping repeated keys (first occurrence wins).
    pub fn from_pairs(pairs: impl IntoIterator<Item = LabeledPair>) -> Self {
        let mut corpus = TrainingCorpus::default();
        let mut seen = HashSet::new();
        for p in pairs {
            if seen.insert(canonical_key(&p.features)) {
                corpus.provenance.entry(p.origin_id.clone()).or_default().push(corpus.records.len());
                corpus.records.push(p);
            }
        }
        corpus
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Count of `(do_not_merge, merge)` labels.
    pub fn class_counts(&self) -> (usize, usize) {
        let merge = self.records.iter().filter(|r| r.label == MergeLabel::Merge).count();
        (self.records.len() - merge, merge)
    }
}

/// Align, label and replicate every record, then deduplicate the union.
pub fn build_corpus(records: &[JudgmentRecord]) -> Result<TrainingCorpus> {
    let mut all = Vec::with_capacity(records.len() * 4);
    for r in records {
        let features = align_training_record(&r.params)?;
        let label = summarize_judgments(&r.judgments)?;
        all.extend(replicate(&LabeledPair { features, label, origin_id: r.id.clone() }));
    }
    Ok(TrainingCorpus::from_pairs(all))
}

/// Write the corpus as CSV: eight feature columns, `label`, `origin_id`.
pub fn write_corpus<W: Write>(writer: W, corpus: &TrainingCorpus) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.extend(["label", "origin_id"]);
    w.write_record(&header)?;
    for r in &corpus.records {
        let mut row: Vec<String> = r.features.to_array().iter().map(|v| fmt_sig9(*v)).collect();
        row.push(r.label.as_u8().to_string());
        row.push(r.origin_id.clone());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus<R: Read>(reader: R) -> Result<TrainingCorpus> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse { row: 0, message: format!("missing `{name}` column") })
    };
    let feature_cols = FEATURE_NAMES.iter().map(|n| col(n)).collect::<Result<Vec<_>>>()?;
    let label_col = col("label")?;
    let origin_col = col("origin_id")?;
    let mut pairs = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec?;
        let get = |c: usize| rec.get(c).ok_or_else(|| Error::Parse { row, message: "short row".into() });
        let mut a = [0.0; 8];
        for (slot, &c) in a.iter_mut().zip(&feature_cols) {
            let raw = get(c)?;
            *slot = raw
                .parse()
                .map_err(|_| Error::Parse { row, message: format!("`{raw}` is not a number") })?;
        }
        let features = AlignedPairFeatures::from_array(a).map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let label = match get(label_col)? {
            "0" => MergeLabel::DoNotMerge,
            "1" => MergeLabel::Merge,
            other => return Err(Error::Parse { row, message: format!("label `{other}` is not 0 or 1") }),
        };
        pairs.push(LabeledPair { features, label, origin_id: get(origin_col)?.to_string() });
    }
    Ok(TrainingCorpus::from_pairs(pairs))
}

/// Sample `n_points` from the two-component mixture described by generator
/// parameters: component `u` centered at the origin with probability `tau`,
/// component `v` centered at `(0, mu)`.
pub fn generate_scatterplot(params: &PairFeatures, n_points: usize, seed_value: u64) -> Result<Scatterplot> {
    params.validate()?;
    if n_points == 0 {
        return Err(Error::InvalidArgument("n_points must be >= 1".into()));
    }
    let chol_u = compose_covariance(&params.shape_u).cholesky()?;
    let chol_v = compose_covariance(&params.shape_v).cholesky()?;
    let mut rng = seed::rng(seed_value, &[]);
    let points = (0..n_points)
        .map(|_| {
            let from_u = rng.random::<f64>() < params.tau;
            let (cy, (l11, l21, l22)) = if from_u { (0.0, chol_u) } else { (params.mu, chol_v) };
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            Point2D::new(l11 * z1, cy + l21 * z1 + l22 * z2)
        })
        .collect();
    Scatterplot::new(points)
}

/// Value grid of the judged two-component benchmark.
pub mod grid {
    use std::f64::consts::PI;

    pub const TAU: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
    pub const MU: [f64; 8] = [0.0, 1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0];
    pub const SIGMA: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
    pub const THETA: [f64; 5] = [0.0, PI / 8.0, PI / 4.0, 3.0 * PI / 8.0, PI / 2.0];
    pub const ALPHA: [f64; 3] = [0.0, PI / 2.0, 5.0 * PI / 4.0];
    pub const N_POINTS: [usize; 2] = [100, 1000];
}

/// One random draw from the benchmark grid: parameters, image rotation and
/// point count.
pub fn sample_grid<R: Rng + ?Sized>(rng: &mut R) -> (PairFeatures, f64, usize) {
    use crate::pairspace::ShapeParams;
    fn pick<R: Rng + ?Sized>(rng: &mut R, vals: &[f64]) -> f64 {
        vals[rng.random_range(0..vals.len())]
    }
    let tau = pick(rng, &grid::TAU);
    let mu = pick(rng, &grid::MU);
    let sux = pick(rng, &grid::SIGMA);
    let suy = pick(rng, &grid::SIGMA);
    let svx = pick(rng, &grid::SIGMA);
    let svy = pick(rng, &grid::SIGMA);
    let tu = pick(rng, &grid::THETA);
    let tv = pick(rng, &grid::THETA);
    let alpha = pick(rng, &grid::ALPHA);
    let n = grid::N_POINTS[rng.random_range(0..2)];
    let params = PairFeatures {
        tau,
        mu,
        shape_u: ShapeParams::new(tu, sux, suy),
        shape_v: ShapeParams::new(tv, svx, svy),
    };
    (params, alpha, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairspace::ShapeParams;
    use std::f64::consts::FRAC_PI_4;

    fn votes(one: usize, more: usize) -> Vec<Vote> {
        let mut v = vec![Vote::One; one];
        v.extend(vec![Vote::MoreThanOne; more]);
        v
    }

    fn aligned(a: [f64; 8]) -> LabeledPair {
        LabeledPair {
            features: AlignedPairFeatures::from_array(a).unwrap(),
            label: MergeLabel::Merge,
            origin_id: "r".into(),
        }
    }

    fn unique(pairs: &[LabeledPair]) -> usize {
        pairs.iter().map(|p| canonical_key(&p.features)).collect::<HashSet<_>>().len()
    }

    #[test]
    fn majority_vote() {
        assert_eq!(summarize_judgments(&votes(4, 30)).unwrap(), MergeLabel::DoNotMerge);
        assert_eq!(summarize_judgments(&votes(20, 14)).unwrap(), MergeLabel::Merge);
        assert_eq!(summarize_judgments(&votes(17, 17)).unwrap(), MergeLabel::Merge);
        assert!(summarize_judgments(&[]).is_err());
    }

    #[test]
    fn generic_record_has_four_distinct_replicas() {
        let r = aligned([0.3, 1.0, 0.8, 0.4, 0.6, 0.2, 0.3, -0.7]);
        let reps = replicate(&r);
        assert_eq!(reps.len(), 4);
        assert_eq!(unique(&reps), 4);
        assert!(reps.iter().all(|p| p.label == r.label && p.origin_id == r.origin_id));
        assert!((reps[2].features.features().tau - 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_angle_record_collapses_reflections() {
        let reps = replicate(&aligned([0.4, 1.0, 0.8, 0.4, 0.6, 0.2, 0.0, 0.0]));
        assert_eq!(reps.len(), 4);
        assert_eq!(canonical_key(&reps[0].features), canonical_key(&reps[1].features));
        assert_eq!(canonical_key(&reps[2].features), canonical_key(&reps[3].features));
        assert_eq!(unique(&reps), 2);
    }

    #[test]
    fn isotropic_u_adds_nine_angles() {
        let reps = replicate(&aligned([0.4, 1.0, 0.5, 0.5, 0.6, 0.2, 0.0, FRAC_PI_4]));
        assert_eq!(reps.len(), 13);
        assert_eq!(unique(&reps), 12);
    }

    #[test]
    fn doubly_isotropic_zero_angle_record() {
        let reps = replicate(&aligned([0.5, 1.0, 0.5, 0.5, 0.5, 0.5, 0.0, 0.0]));
        assert_eq!(reps.len(), 22);
        // Oracle: every (theta_u, theta_v) with at least one angle zero.
        let mut expected = HashSet::new();
        for t in ISOTROPIC_ANGLES {
            expected.insert([(t * 1e9).round() as i64, 0]);
            expected.insert([0, (t * 1e9).round() as i64]);
        }
        assert_eq!(unique(&reps), expected.len());
        assert_eq!(unique(&reps), 17);
    }

    #[test]
    fn canonical_key_rounding() {
        let a = AlignedPairFeatures::from_array([0.3, 1.0, 0.5, 0.4, 0.2, 0.1, 0.0, 0.0]).unwrap();
        let b = AlignedPairFeatures::from_array([0.3, 1.0, 0.5 + 1e-12, 0.4, 0.2, 0.1, -0.0, 0.0]).unwrap();
        let c = AlignedPairFeatures::from_array([0.301, 1.0, 0.5, 0.4, 0.2, 0.1, 0.0, 0.0]).unwrap();
        assert_eq!(canonical_key(&a), canonical_key(&b));
        assert_ne!(canonical_key(&a), canonical_key(&c));
        assert_eq!(
            canonical_key(&a).to_string(),
            "0.300000000|1.000000000|0.500000000|0.400000000|0.200000000|0.100000000|0.000000000|0.000000000"
        );
    }

    const HEADER: &str = "id,tau,mu,sigma_ux,sigma_uy,sigma_vx,sigma_vy,theta_u,theta_v,alpha,n,j1,j2,j3";

    #[test]
    fn ingest_drops_point_count_duplicates() {
        let csv = format!(
            "{HEADER}\na,0.3,2,1,1,2,1,0,0.3926990817,0,100,1,1,0\nb,0.3,2,1,1,2,1,0,0.3926990817,0,1000,0,0,0\nc,0.5,0,1,1,1,1,0,0,0,100,1,1,1\n"
        );
        let rep = ingest_benchmark(csv.as_bytes()).unwrap();
        assert_eq!(rep.rows_read, 3);
        assert_eq!(rep.records.len(), 2);
        assert_eq!(rep.duplicates, vec![IngestDuplicate { row: 2, id: "b".into(), kept_id: "a".into() }]);
        assert_eq!(rep.records[0].judgments, vec![Vote::One, Vote::One, Vote::MoreThanOne]);
    }

    #[test]
    fn ingest_merges_alignment_duplicates() {
        // An isotropic component's generator angle disappears after alignment.
        let csv = format!(
            "{HEADER}\na,0.3,2,1,1,2,1,0,0,0,100,1,1,0\nb,0.3,2,1,1,2,1,0.7853981634,0,0,100,1,1,0\n"
        );
        let rep = ingest_benchmark(csv.as_bytes()).unwrap();
        assert_eq!(rep.records.len(), 1);
    }

    #[test]
    fn ingest_errors_and_edge_cases() {
        assert!(ingest_benchmark("".as_bytes()).unwrap().records.is_empty());
        let bad = format!("{HEADER}\na,0.3,2,1,1,2,1,0,0,0,100,1,1,0\nb,0.3,x,1,1,2,1,0,0,0,100,1,1,0\n");
        match ingest_benchmark(bad.as_bytes()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        let extra = "id,tau,mu,sigma_ux,sigma_uy,sigma_vx,sigma_vy,theta_u,theta_v,notes,j1\na,0.3,2,1,1,2,1,0,0,hi,1\n";
        let rep = ingest_benchmark(extra.as_bytes()).unwrap();
        assert_eq!(rep.warnings.len(), 1);
        assert_eq!(rep.records.len(), 1);
        let bad_vote = format!("{HEADER}\na,0.3,2,1,1,2,1,0,0,0,100,1,2,0\n");
        assert!(ingest_benchmark(bad_vote.as_bytes()).is_err());
    }

    #[test]
    fn corpus_is_unique_and_extends_tau() {
        let record = |id: &str, tau, su: (f64, f64, f64), votes_one| JudgmentRecord {
            id: id.into(),
            params: PairFeatures {
                tau,
                mu: 3.0,
                shape_u: ShapeParams::new(su.0, su.1, su.2),
                shape_v: ShapeParams::new(PI / 8.0, 2.0, 1.0),
            },
            judgments: votes(votes_one, 34 - votes_one),
        };
        let records = vec![
            record("a", 0.2, (0.0, 1.0, 1.0), 30),
            record("b", 0.4, (PI / 4.0, 2.0, 0.5), 3),
        ];
        let corpus = build_corpus(&records).unwrap();
        let keys: HashSet<_> = corpus.records.iter().map(|r| canonical_key(&r.features)).collect();
        assert_eq!(keys.len(), corpus.len());
        assert!(corpus.records.iter().any(|r| r.features.features().tau > 0.5));
        for (origin, idx) in &corpus.provenance {
            let src = records.iter().find(|r| &r.id == origin).unwrap();
            let label = summarize_judgments(&src.judgments).unwrap();
            assert!(idx.iter().all(|&i| corpus.records[i].label == label));
        }
        // a: isotropic u -> 4 base (reflection distinct since theta_v != 0) + 8 angles
        assert_eq!(corpus.provenance["a"].len(), 12);
        assert_eq!(corpus.provenance["b"].len(), 4);

        let mut buf = Vec::new();
        write_corpus(&mut buf, &corpus).unwrap();
        let back = read_corpus(buf.as_slice()).unwrap();
        assert_eq!(back.len(), corpus.len());
        assert_eq!(back.class_counts(), corpus.class_counts());
    }

    #[test]
    fn generator_geometry() {
        let params = PairFeatures {
            tau: 0.5,
            mu: 21.0,
            shape_u: ShapeParams::new(0.0, 1.0, 1.0),
            shape_v: ShapeParams::new(0.0, 1.0, 1.0),
        };
        let sp = generate_scatterplot(&params, 1000, 9).unwrap();
        let (lo, hi): (Vec<_>, Vec<_>) = sp.points().iter().partition(|p| p.y < 10.5);
        let mean = |v: &[&Point2D]| {
            let n = v.len() as f64;
            (v.iter().map(|p| p.x).sum::<f64>() / n, v.iter().map(|p| p.y).sum::<f64>() / n)
        };
        let (lx, ly) = mean(&lo);
        let (hx, hy) = mean(&hi);
        assert!(lx.abs() < 0.2 && ly.abs() < 0.2);
        assert!(hx.abs() < 0.2 && (hy - 21.0).abs() < 0.2);
        assert_eq!(generate_scatterplot(&params, 50, 3).unwrap(), generate_scatterplot(&params, 50, 3).unwrap());

        for tau in [0.0, 1.0] {
            assert!(matches!(generate_scatterplot(&PairFeatures { tau, ..params }, 10, 0), Err(Error::Domain(_))));
        }
    }
}
