//! Significance testing for same/different listening judgments.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("invalid counts k={k}, n={n}")]
    InvalidCounts { k: u64, n: u64 },
    #[error("invalid probability {0}")]
    InvalidP(f64),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

fn check_p(p: f64) -> Result<(), StatsError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(StatsError::InvalidP(p))
    }
}

fn log_pmf(i: u64, n: u64, p0: f64) -> f64 {
    let term = |count: u64, p: f64| if count == 0 { 0.0 } else { count as f64 * p.ln() };
    ln_binomial(n, i) + term(i, p0) + term(n - i, 1.0 - p0)
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Exact upper-tail probability `P(X >= k)` for `X ~ Binomial(n, p0)`,
/// summed in log space.
pub fn binomial_test_one_sided(k: u64, n: u64, p0: f64) -> Result<f64, StatsError> {
    if k > n {
        return Err(StatsError::InvalidCounts { k, n });
    }
    check_p(p0)?;
    if k == 0 {
        return Ok(1.0);
    }
    if p0 == 0.0 {
        return Ok(0.0);
    }
    if p0 == 1.0 {
        return Ok(1.0);
    }
    let log_p = log_sum_exp((k..=n).map(|i| log_pmf(i, n, p0)));
    Ok(log_p.exp().min(1.0))
}

/// Two-sided exact test: total probability of outcomes no more likely than
/// `k`.
pub fn binomial_test_two_sided(k: u64, n: u64, p0: f64) -> Result<f64, StatsError> {
    if k > n {
        return Err(StatsError::InvalidCounts { k, n });
    }
    check_p(p0)?;
    if p0 == 0.0 || p0 == 1.0 {
        let certain = if p0 == 0.0 { 0 } else { n };
        return Ok(if k == certain { 1.0 } else { 0.0 });
    }
    let observed = log_pmf(k, n, p0);
    // relative slack so that ties in exact arithmetic are not lost to rounding
    let cut = observed + 1e-7f64.ln_1p();
    let terms = (0..=n).map(|i| log_pmf(i, n, p0)).filter(|t| *t <= cut);
    Ok(log_sum_exp(terms).exp().min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolmResult {
    /// Rejection flag per input, in input order.
    pub reject: Vec<bool>,
    /// Step-down adjusted p-values, clipped to 1, in input order.
    pub adjusted: Vec<f64>,
}

/// Holm's step-down procedure at family-wise level `alpha`.
pub fn holm_bonferroni(pvalues: &[f64], alpha: f64) -> Result<HolmResult, StatsError> {
    for &p in pvalues {
        check_p(p)?;
    }
    check_p(alpha)?;
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let mut reject = vec![false; m];
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    let mut rejecting = true;
    for (rank, &i) in order.iter().enumerate() {
        let factor = (m - rank) as f64;
        running = running.max((factor * pvalues[i]).min(1.0));
        adjusted[i] = running;
        rejecting = rejecting && pvalues[i] <= alpha / factor;
        reject[i] = rejecting;
    }
    Ok(HolmResult { reject, adjusted })
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn binomial_ci(k: u64, n: u64, confidence: f64) -> Result<(f64, f64), StatsError> {
    if n == 0 || k > n {
        return Err(StatsError::InvalidCounts { k, n });
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::InvalidP(confidence));
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if k == 0 { 0.0 } else { (centre - half).clamp(0.0, p) };
    let hi = if k == n { 1.0 } else { (centre + half).clamp(p, 1.0) };
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum System {
    AeKmeans,
    VaeVamp,
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::AeKmeans => "ae-kmeans",
            System::VaeVamp => "vae-vamp",
        })
    }
}

impl FromStr for System {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ae-kmeans" => Ok(System::AeKmeans),
            "vae-vamp" => Ok(System::VaeVamp),
            other => Err(format!("unknown system `{other}` (expected ae-kmeans or vae-vamp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgmentRecord {
    pub system: System,
    pub pair_id: String,
    pub listener_id: String,
    pub judged_different: bool,
}

/// Parse `system pair listener judged_different` tab-separated lines. A
/// first line starting with `system` is taken as a header.
pub fn parse_judgments(text: &str) -> Result<Vec<JudgmentRecord>, StatsError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("system")) {
            continue;
        }
        let err = |message: String| StatsError::Format { line: i + 1, message };
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        let [system, pair, listener, judged] = f[..] else {
            return Err(err(format!("expected 4 tab-separated fields, got {}", f.len())));
        };
        if pair.is_empty() || listener.is_empty() {
            return Err(err("empty pair or listener id".into()));
        }
        let judged_different = match judged {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("judgment must be 0 or 1, got `{other}`"))),
        };
        out.push(JudgmentRecord {
            system: system.parse().map_err(err)?,
            pair_id: pair.to_string(),
            listener_id: listener.to_string(),
            judged_different,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub alpha: f64,
    pub p0: f64,
    pub two_sided: bool,
    pub confidence: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            alpha: 0.005,
            p0: 0.5,
            two_sided: false,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRow {
    pub system: System,
    pub pair_id: String,
    pub k: u64,
    pub n: u64,
    pub p: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemRow {
    pub system: System,
    pub k: u64,
    pub n: u64,
    pub p: f64,
    pub ci: (f64, f64),
}

fn test(k: u64, n: u64, options: &ReportOptions) -> Result<f64, StatsError> {
    if options.two_sided {
        binomial_test_two_sided(k, n, options.p0)
    } else {
        binomial_test_one_sided(k, n, options.p0)
    }
}

/// One test per `(system, pair)`, corrected jointly across every pair of
/// every system. Rows are ordered by system, then pair id.
pub fn per_pair_report(records: &[JudgmentRecord], options: &ReportOptions) -> Result<Vec<PairRow>, StatsError> {
    let mut groups: BTreeMap<(System, &str), (u64, u64)> = BTreeMap::new();
    for r in records {
        let slot = groups.entry((r.system, r.pair_id.as_str())).or_default();
        slot.0 += u64::from(r.judged_different);
        slot.1 += 1;
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((system, pair), (k, n)) in groups {
        rows.push(PairRow {
            system,
            pair_id: pair.to_string(),
            k,
            n,
            p: test(k, n, options)?,
            p_adjusted: 1.0,
            significant: false,
        });
    }
    let ps: Vec<f64> = rows.iter().map(|r| r.p).collect();
    let holm = holm_bonferroni(&ps, options.alpha)?;
    for (row, (reject, adj)) in rows.iter_mut().zip(holm.reject.into_iter().zip(holm.adjusted)) {
        row.significant = reject;
        row.p_adjusted = adj;
    }
    Ok(rows)
}

/// All records of each system pooled into one test, with a Wilson interval
/// on the proportion judged different.
pub fn per_system_report(records: &[JudgmentRecord], options: &ReportOptions) -> Result<Vec<SystemRow>, StatsError> {
    let mut groups: BTreeMap<System, (u64, u64)> = BTreeMap::new();
    for r in records {
        let slot = groups.entry(r.system).or_default();
        slot.0 += u64::from(r.judged_different);
        slot.1 += 1;
    }
    groups
        .into_iter()
        .map(|(system, (k, n))| {
            Ok(SystemRow {
                system,
                k,
                n,
                p: test(k, n, options)?,
                ci: binomial_ci(k, n, options.confidence)?,
            })
        })
        .collect()
}

pub const PAIR_REPORT_HEADER: &str = "system\tpair\tk\tn\tp\tp_holm\tsignificant";
pub const SYSTEM_REPORT_HEADER: &str = "system\tk\tn\tp\tci_low\tci_high";

pub fn pair_report_tsv(rows: &[PairRow]) -> String {
    let mut out = format!("{PAIR_REPORT_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:e}\t{:e}\t{}",
            r.system,
            r.pair_id,
            r.k,
            r.n,
            r.p,
            r.p_adjusted,
            u8::from(r.significant)
        );
    }
    out
}

pub fn system_report_tsv(rows: &[SystemRow]) -> String {
    let mut out = format!("{SYSTEM_REPORT_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:e}\t{:.6}\t{:.6}",
            r.system, r.k, r.n, r.p, r.ci.0, r.ci.1
        );
    }
    out
}
