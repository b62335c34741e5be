//! Agreement between the score and human raters: Vanbelle kappa, bootstrap
//! summaries, replica majority votes and rank-alteration analysis.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::vqm::{compare, VqmScore};

/// Items × raters votes over a shared category list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRatings {
    categories: Vec<String>,
    /// `votes[item][rater]` indexes `categories`.
    votes: Vec<Vec<usize>>,
}

impl GroupRatings {
    /// Every row must have the same non-zero rater count.
    pub fn new(categories: Vec<String>, votes: Vec<Vec<usize>>) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::InvalidArgument("no categories".into()));
        }
        let raters = votes.first().map_or(0, Vec::len);
        if raters == 0 {
            return Err(Error::InvalidArgument("group ratings need at least one item and one rater".into()));
        }
        for (i, row) in votes.iter().enumerate() {
            if row.len() != raters {
                return Err(Error::DimensionMismatch { expected: raters, got: row.len() });
            }
            if row.iter().any(|&c| c >= categories.len()) {
                return Err(Error::InvalidArgument(format!("item {i}: vote outside the category list")));
            }
        }
        Ok(Self { categories, votes })
    }

    /// Build from symbols; categories are the sorted distinct symbols plus `extra`.
    pub fn from_symbols<S: AsRef<str>>(rows: &[Vec<S>], extra: &[&str]) -> Result<Self> {
        let mut categories: Vec<String> = rows
            .iter()
            .flatten()
            .map(|s| s.as_ref().to_string())
            .chain(extra.iter().map(|s| s.to_string()))
            .collect();
        categories.sort();
        categories.dedup();
        let votes = rows
            .iter()
            .map(|r| r.iter().map(|s| categories.binary_search(&s.as_ref().to_string()).unwrap()).collect())
            .collect();
        Self::new(categories, votes)
    }

    pub fn items(&self) -> usize {
        self.votes.len()
    }

    pub fn raters(&self) -> usize {
        self.votes[0].len()
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn votes(&self) -> &[Vec<usize>] {
        &self.votes
    }

    pub fn category_index(&self, symbol: &str) -> Result<usize> {
        self.categories
            .iter()
            .position(|c| c == symbol)
            .ok_or_else(|| Error::InvalidArgument(format!("category `{symbol}` not in the group's list")))
    }

    /// Isolated ratings from symbols, using this group's category list.
    pub fn isolated_from_symbols<S: AsRef<str>>(&self, symbols: &[S]) -> Result<IsolatedRatings> {
        let votes = symbols.iter().map(|s| self.category_index(s.as_ref())).collect::<Result<_>>()?;
        Ok(IsolatedRatings { votes })
    }
}

/// One category index per item, same list as the group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolatedRatings {
    pub votes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementLabel {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl AgreementLabel {
    pub fn name(self) -> &'static str {
        match self {
            Self::Poor => "poor",
            Self::Slight => "slight",
            Self::Fair => "fair",
            Self::Moderate => "moderate",
            Self::Substantial => "substantial",
            Self::AlmostPerfect => "almost perfect",
        }
    }
}

impl fmt::Display for AgreementLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Landis-Koch scale with right-closed intervals; 0 and below are poor.
pub fn landis_koch_label(kappa: f64) -> AgreementLabel {
    match kappa {
        k if k <= 0.0 => AgreementLabel::Poor,
        k if k <= 0.2 => AgreementLabel::Slight,
        k if k <= 0.4 => AgreementLabel::Fair,
        k if k <= 0.6 => AgreementLabel::Moderate,
        k if k <= 0.8 => AgreementLabel::Substantial,
        _ => AgreementLabel::AlmostPerfect,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub label: AgreementLabel,
}

fn check_dims(group: &GroupRatings, isolated: &IsolatedRatings) -> Result<()> {
    if isolated.votes.len() != group.items() {
        return Err(Error::DimensionMismatch { expected: group.items(), got: isolated.votes.len() });
    }
    if isolated.votes.iter().any(|&c| c >= group.categories.len()) {
        return Err(Error::InvalidArgument("isolated vote outside the category list".into()));
    }
    Ok(())
}

/// Kappa over the items listed in `indices` (repeats allowed).
pub fn kappa_for_resample(group: &GroupRatings, isolated: &IsolatedRatings, indices: &[usize]) -> Result<KappaResult> {
    check_dims(group, isolated)?;
    if indices.is_empty() {
        return Err(Error::InvalidArgument("no items".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= group.items()) {
        return Err(Error::InvalidArgument(format!("item index {bad} out of range")));
    }
    let n_cat = group.categories.len();
    // Integer tallies keep p_o and p_e exact when agreement is total.
    let total_votes = (group.raters() * indices.len()) as f64;
    let mut group_counts = vec![0usize; n_cat];
    let mut isolated_counts = vec![0usize; n_cat];
    let mut agreeing = 0usize;
    for &i in indices {
        let iso = isolated.votes[i];
        isolated_counts[iso] += 1;
        for &c in &group.votes[i] {
            group_counts[c] += 1;
        }
        agreeing += group.votes[i].iter().filter(|&&c| c == iso).count();
    }
    let p_o = agreeing as f64 / total_votes;
    let p_e: f64 = group_counts
        .iter()
        .zip(&isolated_counts)
        .map(|(&q, &r)| (q as f64 / total_votes) * (r as f64 / indices.len() as f64))
        .sum();
    let kappa = if p_e >= 1.0 {
        if p_o >= 1.0 { 1.0 } else { 0.0 }
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    Ok(KappaResult { kappa, observed_agreement: p_o, expected_agreement: p_e, label: landis_koch_label(kappa) })
}

/// Agreement between one isolated rater and a group, corrected for chance
/// using the group's mean category proportions and the isolated marginals.
pub fn vanbelle_kappa(group: &GroupRatings, isolated: &IsolatedRatings) -> Result<KappaResult> {
    let all: Vec<usize> = (0..group.items()).collect();
    kappa_for_resample(group, isolated, &all)
}

pub const PERCENTILES: [f64; 7] = [2.5, 5.0, 25.0, 50.0, 75.0, 95.0, 97.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub percentiles: Vec<(f64, f64)>,
}

/// Linear interpolation between order statistics at `(n - 1) * p / 100`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p / 100.0;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(values: &[f64]) -> DistributionSummary {
    assert!(!values.is_empty(), "summary of an empty sample");
    let n = values.len();
    // Shifted by the first value so a constant sample has mean and sd exact.
    let mean = values[0] + values.iter().map(|v| v - values[0]).sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    DistributionSummary {
        n,
        mean,
        sd,
        min: sorted[0],
        max: sorted[n - 1],
        percentiles: PERCENTILES.iter().map(|&p| (p, percentile(&sorted, p))).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point: KappaResult,
    pub summary: DistributionSummary,
    pub kappas: Vec<f64>,
}

/// Items resampled with replacement `b` times; resample `i` draws from its
/// own derived stream, so results are independent of scheduling.
pub fn bootstrap_kappa(group: &GroupRatings, isolated: &IsolatedRatings, b: usize, seed_value: u64) -> Result<BootstrapResult> {
    if b == 0 {
        return Err(Error::InvalidArgument("bootstrap needs b >= 1".into()));
    }
    let point = vanbelle_kappa(group, isolated)?;
    let n = group.items();
    let kappas = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed_value, &[i as u64]);
            let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            kappa_for_resample(group, isolated, &indices).map(|k| k.kappa)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BootstrapResult { point, summary: summarize(&kappas), kappas })
}

/// Per origin, 1 iff at least half of its replica predictions are 1.
pub fn majority_vote_by_origin<S: AsRef<str>>(predictions: &[(S, u8)]) -> BTreeMap<String, u8> {
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (origin, h) in predictions {
        let entry = tally.entry(origin.as_ref().to_string()).or_default();
        entry.0 += usize::from(*h == 1);
        entry.1 += 1;
    }
    tally.into_iter().map(|(origin, (ones, total))| (origin, u8::from(2 * ones >= total))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Less,
    #[serde(rename = "=")]
    Equal,
    #[serde(rename = ">")]
    Greater,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Self::Less, Self::Equal, Self::Greater];

    pub fn symbol(self) -> &'static str {
        match self {
            Self::Less => "<",
            Self::Equal => "=",
            Self::Greater => ">",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.symbol() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("`{s}` is not one of <, =, >")))
    }

    pub fn from_ordering(o: Ordering) -> Self {
        match o {
            Ordering::Less => Self::Less,
            Ordering::Equal => Self::Equal,
            Ordering::Greater => Self::Greater,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// All `C(n, 2)` pairs `(ids[i], ids[j])`, `i < j`, row-major.
pub fn all_pairs<S: AsRef<str>>(ids: &[S]) -> Vec<(String, String)> {
    let mut out = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1) / 2);
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            out.push((a.as_ref().to_string(), b.as_ref().to_string()));
        }
    }
    out
}

/// Relation of each pair under [`compare`].
pub fn pairwise_relations(scores: &[(String, VqmScore)], pairs: &[(String, String)]) -> Result<Vec<Relation>> {
    let lookup: BTreeMap<&str, VqmScore> = scores.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    let get = |id: &str| lookup.get(id).copied().ok_or_else(|| Error::UnknownId(id.to_string()));
    pairs.iter().map(|(a, b)| Ok(Relation::from_ordering(compare(get(a)?, get(b)?)))).collect()
}

/// Human pair judgments: `votes[pair][rater]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairJudgmentSet {
    pub pairs: Vec<(String, String)>,
    pub votes: Vec<Vec<Relation>>,
}

impl PairJudgmentSet {
    /// Group ratings over the fixed category list `<`, `=`, `>`.
    pub fn group(&self) -> Result<GroupRatings> {
        let categories = Relation::ALL.iter().map(|r| r.symbol().to_string()).collect();
        let votes = self.votes.iter().map(|row| row.iter().map(|r| *r as usize).collect()).collect();
        GroupRatings::new(categories, votes)
    }
}

/// Isolated ratings for relations, indexed into `group`'s categories.
pub fn relations_as_ratings(group: &GroupRatings, relations: &[Relation]) -> Result<IsolatedRatings> {
    let symbols: Vec<&str> = relations.iter().map(|r| r.symbol()).collect();
    group.isolated_from_symbols(&symbols)
}

/// Change exactly `k` distinct positions, each to one of the two other
/// relations with equal probability.
pub fn alter_decisions(relations: &[Relation], k: usize, seed_value: u64) -> Result<Vec<Relation>> {
    if k > relations.len() {
        return Err(Error::InvalidArgument(format!("cannot alter {k} of {} relations", relations.len())));
    }
    let mut rng = seed::rng(seed_value, &[]);
    let mut out = relations.to_vec();
    for pos in sample(&mut rng, relations.len(), k) {
        let others: Vec<Relation> = Relation::ALL.into_iter().filter(|r| *r != out[pos]).collect();
        out[pos] = others[rng.random_range(0..2)];
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

/// For each `k`, kappa of `b` independently altered copies of `relations`
/// against the group.
pub fn alteration_curve(
    relations: &[Relation],
    group: &GroupRatings,
    k_values: &[usize],
    b: usize,
    seed_value: u64,
) -> Result<Vec<CurvePoint>> {
    if b == 0 {
        return Err(Error::InvalidArgument("alteration curve needs b >= 1".into()));
    }
    k_values
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            let kappas = (0..b)
                .into_par_iter()
                .map(|i| {
                    let altered = alter_decisions(relations, k, seed::derive(seed_value, &[ki as u64, i as u64]))?;
                    Ok(vanbelle_kappa(group, &relations_as_ratings(group, &altered)?)?.kappa)
                })
                .collect::<Result<Vec<f64>>>()?;
            let s = summarize(&kappas);
            Ok(CurvePoint { k, mean: s.mean, sd: s.sd, min: s.min, max: s.max })
        })
        .collect()
}

/// Smallest k in `curve` whose mean kappa is at or below `threshold`.
pub fn crossing_point(curve: &[CurvePoint], threshold: f64) -> Option<usize> {
    curve.iter().find(|p| p.mean <= threshold).map(|p| p.k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    /// Pairwise rankings altered.
    pub r: f64,
    /// Largest rank displacement, in percent of the list length.
    pub q: f64,
    /// Large-n form of `q`: `sqrt(50 p)`.
    pub q_approx: f64,
}

/// Alterations `r = n(n-1)p/200` for `p` percent of pairs, and the worst-case
/// displacement `q = 100 sqrt(r) / n`.
pub fn worst_case_formulas(n_plots: usize, p: f64) -> Result<WorstCase> {
    if n_plots < 2 {
        return Err(Error::Domain(format!("need at least 2 plots, got {n_plots}")));
    }
    if !(0.0..=50.0).contains(&p) {
        return Err(Error::Domain(format!("percentage {p} outside [0, 50]")));
    }
    let n = n_plots as f64;
    let r = n * (n - 1.0) * p / 200.0;
    Ok(WorstCase { r, q: 100.0 * r.sqrt() / n, q_approx: (50.0 * p).sqrt() })
}

/// Percent of the `C(n, 2)` pairs that `r` alterations represent.
pub fn alterations_to_percent(n_plots: usize, r: f64) -> Result<f64> {
    if n_plots < 2 {
        return Err(Error::Domain(format!("need at least 2 plots, got {n_plots}")));
    }
    let pairs = (n_plots * (n_plots - 1) / 2) as f64;
    Ok(100.0 * r / pairs)
}

/// Fewest pairwise-ranking changes that push `pushed` items out of a top
/// group: each must pass each of `pushed` outsiders.
pub fn min_alterations_to_displace(pushed: usize) -> usize {
    pushed * pushed
}

/// Read `item_id,rater_1..rater_R` with category symbols; `extra` adds
/// categories no rater used.
pub fn read_group_ratings<R: Read>(reader: R, extra: &[&str]) -> Result<(Vec<String>, GroupRatings)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Parse { row: idx + 2, message: "expected an id and at least one vote".into() });
        }
        ids.push(rec[0].to_string());
        rows.push(rec.iter().skip(1).map(str::to_string).collect::<Vec<_>>());
    }
    Ok((ids, GroupRatings::from_symbols(&rows, extra)?))
}

/// Read `idA,idB,vote_1..vote_R` with `<`, `=`, `>` votes.
pub fn read_pair_judgments<R: Read>(reader: R) -> Result<PairJudgmentSet> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut set = PairJudgmentSet { pairs: Vec::new(), votes: Vec::new() };
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = idx + 2;
        if rec.len() < 3 {
            return Err(Error::Parse { row, message: "expected idA,idB and at least one vote".into() });
        }
        let votes = rec
            .iter()
            .skip(2)
            .map(|v| Relation::parse(v).map_err(|e| Error::Parse { row, message: e.to_string() }))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = set.votes.first() {
            if first.len() != votes.len() {
                return Err(Error::Parse { row, message: "vote count differs from the first row".into() });
            }
        }
        set.pairs.push((rec[0].to_string(), rec[1].to_string()));
        set.votes.push(votes);
    }
    if set.pairs.is_empty() {
        return Err(Error::Parse { row: 0, message: "no pair judgments".into() });
    }
    Ok(set)
}

pub fn write_pair_judgments<W: std::io::Write>(writer: W, set: &PairJudgmentSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let raters = set.votes.first().map_or(0, Vec::len);
    let mut header = vec!["idA".to_string(), "idB".to_string()];
    header.extend((1..=raters).map(|i| format!("vote_{i}")));
    w.write_record(&header)?;
    for ((a, b), votes) in set.pairs.iter().zip(&set.votes) {
        let mut row = vec![a.clone(), b.clone()];
        row.extend(votes.iter().map(|v| v.symbol().to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
