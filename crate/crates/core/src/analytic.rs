//! Closed-form MAC-layer throughput from per-packet success-probability
//! tables.
//!
//! Every formula here is linear in the table entries: throughput is a sum of
//! `coefficient * P(cell)` where the coefficients are products of binomial
//! probabilities. The coefficient lists are exposed so callers can propagate
//! the sampling error of measured tables.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use statrs::function::factorial::ln_binomial;

use crate::config::{ConfigError, NetworkConfig};
use crate::protocols::ProtocolKind;

const TABLE_TAG: &str = "# success-table v1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("success table is missing cells (m, j): {}", fmt_cells(.missing))]
    IncompleteTable { missing: Vec<(usize, usize)> },
    #[error("expected a {expected} table, got {got}")]
    WrongKind { expected: String, got: String },
    #[error("malformed success table at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn fmt_cells(cells: &[(usize, usize)]) -> String {
    cells.iter().map(|(m, j)| format!("({m}, {j})")).collect::<Vec<_>>().join(", ")
}

/// Binomial probability mass `C(n, k) p^k (1-p)^(n-k)`, assembled in log
/// space.
pub fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln = ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p();
    ln.exp()
}

/// Which success probability a table holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// `P_{m,M}` for `m` total concurrent users, keyed `(m, 0)`.
    MprByTotal,
    /// `P_{m,dim}`: decoding `m` interference-free streams in a
    /// `dim`-dimensional space, keyed `(m, 0)`.
    MprByDim(usize),
    /// `P_{m,j}`: `m` users in the tagged network, `j` in the others.
    Oia,
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MprByTotal => f.write_str("mpr_by_total"),
            Self::MprByDim(d) => write!(f, "mpr_by_dim dim={d}"),
            Self::Oia => f.write_str("oia"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Measured,
    Hypothetical,
}

impl Provenance {
    fn as_str(&self) -> &'static str {
        match self {
            Self::Measured => "measured",
            Self::Hypothetical => "hypothetical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub prob: f64,
    /// Decoded-or-not trials behind `prob` (0 for hypothetical entries).
    pub trials: u64,
}

impl Cell {
    pub fn stderr(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            (self.prob * (1.0 - self.prob) / self.trials as f64).sqrt()
        }
    }
}

/// Success probabilities keyed by `(m, j)`. Absent cells are absent, never
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessTable {
    pub kind: TableKind,
    pub provenance: Provenance,
    /// Free-form `key=value` scenario description echoed in the header.
    pub scenario: Vec<(String, String)>,
    cells: BTreeMap<(usize, usize), Cell>,
}

impl SuccessTable {
    pub fn new(kind: TableKind, provenance: Provenance) -> Self {
        Self { kind, provenance, scenario: Vec::new(), cells: BTreeMap::new() }
    }

    /// Hypothetical table with every listed cell set to `value`.
    pub fn constant(kind: TableKind, cells: &[(usize, usize)], value: f64) -> Self {
        let mut t = Self::new(kind, Provenance::Hypothetical);
        for &c in cells {
            t.insert(c.0, c.1, Cell { prob: value, trials: 0 });
        }
        t
    }

    pub fn with_scenario(mut self, cfg: &NetworkConfig) -> Self {
        self.scenario = vec![
            ("K".into(), cfg.k.to_string()),
            ("N".into(), cfg.n.to_string()),
            ("M".into(), cfg.m.to_string()),
            ("L".into(), cfg.l.to_string()),
            ("S".into(), cfg.s.to_string()),
            ("p".into(), format!("{:.6}", cfg.p)),
        ];
        self
    }

    pub fn insert(&mut self, m: usize, j: usize, cell: Cell) {
        assert!((0.0..=1.0).contains(&cell.prob), "probability {} out of [0, 1]", cell.prob);
        self.cells.insert((m, j), cell);
    }

    pub fn get(&self, m: usize, j: usize) -> Option<f64> {
        self.cells.get(&(m, j)).map(|c| c.prob)
    }

    pub fn cell(&self, m: usize, j: usize) -> Option<&Cell> {
        self.cells.get(&(m, j))
    }

    pub fn cells(&self) -> impl Iterator<Item = (&(usize, usize), &Cell)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write!(out, "{TABLE_TAG} kind={}", self.kind).unwrap();
        for (k, v) in &self.scenario {
            write!(out, " {k}={v}").unwrap();
        }
        writeln!(out, " provenance={}", self.provenance.as_str()).unwrap();
        for ((m, j), c) in &self.cells {
            writeln!(out, "{m} {j} {:.6} {}", c.prob, c.trials).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, AnalyticError> {
        let err = |line: usize, msg: &str| AnalyticError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file"))?;
        let rest = header.strip_prefix(TABLE_TAG).ok_or_else(|| err(1, "missing header tag"))?;
        let mut kind_name = None;
        let mut dim = None;
        let mut provenance = Provenance::Measured;
        let mut scenario = Vec::new();
        for field in rest.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| err(1, "header fields must be key=value"))?;
            match k {
                "kind" => kind_name = Some(v.to_string()),
                "dim" => dim = Some(v.parse::<usize>().map_err(|_| err(1, "bad dim"))?),
                "provenance" => {
                    provenance = match v {
                        "measured" => Provenance::Measured,
                        "hypothetical" => Provenance::Hypothetical,
                        _ => return Err(err(1, "bad provenance")),
                    }
                }
                _ => scenario.push((k.to_string(), v.to_string())),
            }
        }
        let kind = match kind_name.as_deref() {
            Some("mpr_by_total") => TableKind::MprByTotal,
            Some("mpr_by_dim") => TableKind::MprByDim(dim.ok_or_else(|| err(1, "mpr_by_dim needs dim"))?),
            Some("oia") => TableKind::Oia,
            _ => return Err(err(1, "unknown or missing kind")),
        };
        let mut table = Self { kind, provenance, scenario, cells: BTreeMap::new() };
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(err(i + 1, "expected 'm j P count'"));
            }
            let m = f[0].parse().map_err(|_| err(i + 1, "bad m"))?;
            let j = f[1].parse().map_err(|_| err(i + 1, "bad j"))?;
            let prob: f64 = f[2].parse().map_err(|_| err(i + 1, "bad P"))?;
            let trials = f[3].parse().map_err(|_| err(i + 1, "bad count"))?;
            if !(0.0..=1.0).contains(&prob) {
                return Err(err(i + 1, "P outside [0, 1]"));
            }
            table.cells.insert((m, j), Cell { prob, trials });
        }
        Ok(table)
    }
}

impl FromStr for SuccessTable {
    type Err = AnalyticError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_text(s)
    }
}

/// One term of a throughput sum: `coef * P_table[cell]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    /// 0 for the first table argument, 1 for the second.
    pub table: usize,
    pub cell: (usize, usize),
    pub coef: f64,
}

/// Value of a linear throughput form and the standard error implied by the
/// trial counts of measured tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticValue {
    pub throughput: f64,
    pub stderr: f64,
}

fn evaluate(terms: &[Term], tables: &[&SuccessTable]) -> Result<AnalyticValue, AnalyticError> {
    let mut missing = Vec::new();
    let mut total = 0.0;
    let mut var = 0.0;
    for t in terms {
        match tables[t.table].cell(t.cell.0, t.cell.1) {
            Some(c) => {
                total += t.coef * c.prob;
                var += (t.coef * c.stderr()).powi(2);
            }
            None => missing.push(t.cell),
        }
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(AnalyticError::IncompleteTable { missing });
    }
    Ok(AnalyticValue { throughput: total, stderr: var.sqrt() })
}

fn require_kind(table: &SuccessTable, ok: bool, expected: &str) -> Result<(), AnalyticError> {
    if ok {
        Ok(())
    } else {
        Err(AnalyticError::WrongKind { expected: expected.to_string(), got: table.kind.to_string() })
    }
}

/// `T = sum_{m=1}^{M} m C(NK, m) p^m (1-p)^{NK-m} P_{m,M}`.
pub fn mpr_terms(cfg: &NetworkConfig) -> Vec<Term> {
    let nk = cfg.total_users() as u64;
    (1..=cfg.m.min(cfg.total_users()))
        .map(|m| Term { table: 0, cell: (m, 0), coef: m as f64 * binomial_pmf(nk, m as u64, cfg.p) })
        .collect()
}

/// Interference nulling: `K { sum_{m<=S} m b_N(m) P_{m,S} + sum_{S<m<=M} m
/// b_N(m) sum_{j<=M-m} b_{N(K-1)}(j) P_{m+j,M} }`.
pub fn in_terms(cfg: &NetworkConfig) -> Vec<Term> {
    let n = cfg.n as u64;
    let others = (cfg.n * (cfg.k - 1)) as u64;
    let k = cfg.k as f64;
    let mut terms = Vec::new();
    for m in 1..=cfg.s.min(cfg.n) {
        terms.push(Term { table: 0, cell: (m, 0), coef: k * m as f64 * binomial_pmf(n, m as u64, cfg.p) });
    }
    for m in cfg.s + 1..=cfg.m.min(cfg.n) {
        let own = k * m as f64 * binomial_pmf(n, m as u64, cfg.p);
        for j in 0..=(cfg.m - m).min(others as usize) {
            terms.push(Term { table: 1, cell: (m + j, 0), coef: own * binomial_pmf(others, j as u64, cfg.p) });
        }
    }
    terms
}

/// OIA: the full-array regime `m + j <= M` (first table) plus the
/// signal-space regime `m <= S`, `m + j > M` (second table).
pub fn oia_terms(cfg: &NetworkConfig, first_by_total: bool) -> Vec<Term> {
    let n = cfg.n as u64;
    let others = cfg.n * (cfg.k - 1);
    let k = cfg.k as f64;
    let mut terms = Vec::new();
    for m in 1..=cfg.m.min(cfg.n) {
        let own = k * m as f64 * binomial_pmf(n, m as u64, cfg.p);
        for j in 0..=(cfg.m - m).min(others) {
            let cell = if first_by_total { (m + j, 0) } else { (m, j) };
            terms.push(Term { table: 0, cell, coef: own * binomial_pmf(others as u64, j as u64, cfg.p) });
        }
    }
    for m in 1..=cfg.s.min(cfg.n) {
        let own = k * m as f64 * binomial_pmf(n, m as u64, cfg.p);
        for j in (cfg.m - m + 1)..=others {
            terms.push(Term { table: 1, cell: (m, j), coef: own * binomial_pmf(others as u64, j as u64, cfg.p) });
        }
    }
    terms
}

pub fn mpr_cells(cfg: &NetworkConfig) -> Vec<(usize, usize)> {
    mpr_terms(cfg).into_iter().map(|t| t.cell).collect()
}

fn cells_of(terms: &[Term], table: usize) -> Vec<(usize, usize)> {
    let mut c: Vec<_> = terms.iter().filter(|t| t.table == table).map(|t| t.cell).collect();
    c.sort();
    c.dedup();
    c
}

/// Cells of the full-array regime of the OIA formula, keyed `(m, j)`.
pub fn oia_first_cells(cfg: &NetworkConfig) -> Vec<(usize, usize)> {
    cells_of(&oia_terms(cfg, false), 0)
}

/// Cells of the signal-space regime of the OIA formula.
pub fn oia_second_cells(cfg: &NetworkConfig) -> Vec<(usize, usize)> {
    cells_of(&oia_terms(cfg, false), 1)
}

pub fn in_dim_s_cells(cfg: &NetworkConfig) -> Vec<(usize, usize)> {
    cells_of(&in_terms(cfg), 0)
}

pub fn in_dim_m_cells(cfg: &NetworkConfig) -> Vec<(usize, usize)> {
    cells_of(&in_terms(cfg), 1)
}

pub fn throughput_mpr(cfg: &NetworkConfig, table: &SuccessTable) -> Result<f64, AnalyticError> {
    Ok(throughput_mpr_detailed(cfg, table)?.throughput)
}

pub fn throughput_mpr_detailed(cfg: &NetworkConfig, table: &SuccessTable) -> Result<AnalyticValue, AnalyticError> {
    cfg.validate()?;
    require_kind(table, table.kind == TableKind::MprByTotal, "mpr_by_total")?;
    evaluate(&mpr_terms(cfg), &[table])
}

pub fn throughput_in(
    cfg: &NetworkConfig,
    table_dim_s: &SuccessTable,
    table_dim_m: &SuccessTable,
) -> Result<f64, AnalyticError> {
    Ok(throughput_in_detailed(cfg, table_dim_s, table_dim_m)?.throughput)
}

pub fn throughput_in_detailed(
    cfg: &NetworkConfig,
    table_dim_s: &SuccessTable,
    table_dim_m: &SuccessTable,
) -> Result<AnalyticValue, AnalyticError> {
    cfg.validate()?;
    cfg.require_nulling_feasible()?;
    require_kind(table_dim_s, table_dim_s.kind == TableKind::MprByDim(cfg.s), &format!("mpr_by_dim dim={}", cfg.s))?;
    require_kind(
        table_dim_m,
        matches!(table_dim_m.kind, TableKind::MprByTotal) || table_dim_m.kind == TableKind::MprByDim(cfg.m),
        "mpr_by_total",
    )?;
    evaluate(&in_terms(cfg), &[table_dim_s, table_dim_m])
}

/// `first` covers the full-array regime and may be keyed by total load
/// (`mpr_by_total`) or by split (`oia`); `second` is an `oia` table.
pub fn throughput_oia(cfg: &NetworkConfig, first: &SuccessTable, second: &SuccessTable) -> Result<f64, AnalyticError> {
    Ok(throughput_oia_detailed(cfg, first, second)?.throughput)
}

pub fn throughput_oia_detailed(
    cfg: &NetworkConfig,
    first: &SuccessTable,
    second: &SuccessTable,
) -> Result<AnalyticValue, AnalyticError> {
    cfg.validate()?;
    require_kind(first, matches!(first.kind, TableKind::MprByTotal | TableKind::Oia), "mpr_by_total or oia")?;
    require_kind(second, second.kind == TableKind::Oia, "oia")?;
    let by_total = first.kind == TableKind::MprByTotal;
    evaluate(&oia_terms(cfg, by_total), &[first, second])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Source {
    Analytic,
    Simulated,
}

/// Throughput at one operating point.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ThroughputRecord {
    pub protocol: ProtocolKind,
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub s: usize,
    pub p: f64,
    pub slots: u64,
    pub replications: u64,
    pub seed: u64,
    /// Packets per slot summed over all networks.
    pub throughput: f64,
    pub stderr: f64,
    pub source: Source,
}

impl ThroughputRecord {
    pub fn analytic(protocol: ProtocolKind, cfg: &NetworkConfig, throughput: f64) -> Self {
        Self {
            protocol,
            k: cfg.k,
            n: cfg.n,
            m: cfg.m,
            l: cfg.l,
            s: cfg.s,
            p: cfg.p,
            slots: 0,
            replications: 0,
            seed: cfg.seed,
            throughput,
            stderr: 0.0,
            source: Source::Analytic,
        }
    }

    /// `throughput <= min(M K, N K p)` up to rounding and three standard
    /// errors.
    pub fn within_sanity_bound(&self) -> bool {
        let bound = ((self.m * self.k) as f64).min((self.n * self.k) as f64 * self.p);
        self.throughput <= bound * (1.0 + 1e-9) + 3.0 * self.stderr + 1e-12
    }

    pub const CSV_HEADER: &'static str = "protocol,K,N,M,L,S,p,slots,replications,seed,throughput,stderr";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{},{},{},{:.6},{:.6}",
            self.protocol, self.k, self.n, self.m, self.l, self.s, self.p, self.slots, self.replications,
            self.seed, self.throughput, self.stderr
        )
    }
}
