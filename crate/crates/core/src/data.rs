//! Dataset ingestion, discretization, splitting, and on-demand
//! sufficient-statistics computation with work-counter instrumentation.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{EdgeId, VariableSpec};
use crate::{Error, Result};

/// Fully observed discrete dataset; `N` rows of 0-based state indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteDataset {
    spec: VariableSpec,
    values: Vec<u32>, // row-major, n_rows × n_vars
    n_rows: usize,
}

impl DiscreteDataset {
    pub fn new(spec: VariableSpec, rows: Vec<Vec<u32>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidData("no instances".into()));
        }
        let n = spec.len();
        let mut values = Vec::with_capacity(rows.len() * n);
        for (m, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidData(format!(
                    "row {m} has {} values, expected {n}",
                    row.len()
                )));
            }
            for (i, &v) in row.iter().enumerate() {
                if v as usize >= spec.card(i) {
                    return Err(Error::InvalidData(format!(
                        "row {m}, column {} ({}): value {v} out of range [0, {})",
                        i,
                        spec.names()[i],
                        spec.card(i)
                    )));
                }
            }
            values.extend_from_slice(row);
        }
        let n_rows = rows.len();
        Ok(Self {
            spec,
            values,
            n_rows,
        })
    }

    pub fn spec(&self) -> &VariableSpec {
        &self.spec
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn num_vars(&self) -> usize {
        self.spec.len()
    }

    pub fn row(&self, m: usize) -> &[u32] {
        let n = self.spec.len();
        &self.values[m * n..(m + 1) * n]
    }

    pub fn value(&self, m: usize, i: usize) -> usize {
        self.values[m * self.spec.len() + i] as usize
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.values.chunks_exact(self.spec.len())
    }

    /// Seeded-shuffle split into disjoint, exhaustive train/test parts.
    /// Sizes round toward train, but the test part is never emptied.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {train_fraction} not in (0, 1)"
            )));
        }
        if self.n_rows < 2 {
            return Err(Error::InvalidData(
                "need at least 2 rows to split".into(),
            ));
        }
        let mut order: Vec<usize> = (0..self.n_rows).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let n_train =
            ((train_fraction * self.n_rows as f64).ceil() as usize).min(self.n_rows - 1);
        let take = |idx: &[usize]| -> Self {
            let mut values = Vec::with_capacity(idx.len() * self.spec.len());
            for &m in idx {
                values.extend_from_slice(self.row(m));
            }
            Self {
                spec: self.spec.clone(),
                values,
                n_rows: idx.len(),
            }
        };
        Ok((take(&order[..n_train]), take(&order[n_train..])))
    }

    /// Writes the dataset as CSV: header of variable names, one row per
    /// instance, integer state indices.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.spec.names())?;
        let mut record = csv::StringRecord::new();
        for row in self.rows() {
            record.clear();
            for v in row {
                record.push_field(&v.to_string());
            }
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::InvalidData(format!("csv: {e}"))
    }
}

/// Per-column ingestion rule.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnRule {
    /// Cells are already 0-based integer state indices.
    Integer,
    /// Continuous cells binned into `bins` equal-width intervals over
    /// `[lo, hi]` (values clamped to the interval).
    Interval { lo: f64, hi: f64, bins: usize },
}

/// How to interpret a CSV file's columns.
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    /// Declared cardinalities (one per column, in file order). When absent,
    /// cardinalities are inferred as `max observed + 1`.
    pub cardinalities: Option<Vec<usize>>,
    /// Rules keyed by column name; columns without a rule parse as integers.
    pub rules: HashMap<String, ColumnRule>,
}

/// Equal-width binning of `value` over `[lo, hi]` into `k` states;
/// out-of-range values clamp, and `value == hi` maps to state `k-1`.
pub fn discretize_interval(value: f64, lo: f64, hi: f64, k: usize) -> Result<usize> {
    if !value.is_finite() {
        return Err(Error::InvalidData(format!("non-finite value {value}")));
    }
    if !(lo < hi) || k < 2 {
        return Err(Error::Config(format!(
            "bad interval [{lo}, {hi}] with {k} bins"
        )));
    }
    let clamped = value.clamp(lo, hi);
    let state = ((clamped - lo) / (hi - lo) * k as f64).floor() as usize;
    Ok(state.min(k - 1))
}

/// Loads a CSV file with a header row of variable names.
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<DiscreteDataset> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, schema)
}

pub fn load_csv_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<DiscreteDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let names: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if names.is_empty() {
        return Err(Error::InvalidData("empty header".into()));
    }
    let rules: Vec<ColumnRule> = names
        .iter()
        .map(|name| {
            schema
                .rules
                .get(name)
                .cloned()
                .unwrap_or(ColumnRule::Integer)
        })
        .collect();
    if let Some(cards) = &schema.cardinalities {
        if cards.len() != names.len() {
            return Err(Error::InvalidData(format!(
                "{} declared cardinalities for {} columns",
                cards.len(),
                names.len()
            )));
        }
    }

    let mut rows: Vec<Vec<u32>> = Vec::new();
    for (m, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != names.len() {
            return Err(Error::InvalidData(format!(
                "row {m} has {} cells, expected {}",
                record.len(),
                names.len()
            )));
        }
        let mut row = Vec::with_capacity(names.len());
        for (i, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let state = match &rules[i] {
                ColumnRule::Integer => cell.parse::<u32>().map_err(|_| {
                    Error::InvalidData(format!(
                        "row {m}, column {}: non-integer cell {cell:?} without a discretization rule",
                        names[i]
                    ))
                })?,
                ColumnRule::Interval { lo, hi, bins } => {
                    let value = cell.parse::<f64>().map_err(|_| {
                        Error::InvalidData(format!(
                            "row {m}, column {}: unparseable cell {cell:?}",
                            names[i]
                        ))
                    })?;
                    discretize_interval(value, *lo, *hi, *bins)? as u32
                }
            };
            row.push(state);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidData("no instances".into()));
    }

    let cardinalities = match &schema.cardinalities {
        Some(cards) => cards.clone(),
        None => {
            let mut cards = vec![0usize; names.len()];
            for (i, rule) in rules.iter().enumerate() {
                cards[i] = match rule {
                    ColumnRule::Interval { bins, .. } => *bins,
                    ColumnRule::Integer => rows
                        .iter()
                        .map(|r| r[i] as usize + 1)
                        .max()
                        .unwrap_or(0),
                };
            }
            cards
        }
    };
    let spec = VariableSpec::new(names, cardinalities)?;
    DiscreteDataset::new(spec, rows)
}

/// Empirical node and pairwise marginal tables, computed on demand and
/// cached, with counters for complexity instrumentation.
///
/// Tables are stored as probabilities (counts / N). `tables_computed`
/// counts distinct edge tables built; `rows_scanned` counts row passes
/// spent building them.
#[derive(Debug, Clone)]
pub struct SufficientStatsStore {
    node_marginals: Vec<Vec<f64>>,
    edge_tables: HashMap<EdgeId, Vec<f64>>,
    insertion_order: Vec<EdgeId>,
    cap: Option<usize>,
    tables_computed: u64,
    rows_scanned: u64,
}

impl SufficientStatsStore {
    pub fn new(data: &DiscreteDataset) -> Self {
        Self::with_cap(data, None)
    }

    /// `cap` bounds the number of cached edge tables (oldest evicted first);
    /// `None` keeps every table, which is at most `C(n,2)`.
    pub fn with_cap(data: &DiscreteDataset, cap: Option<usize>) -> Self {
        let node_marginals = node_marginals(data);
        let rows_scanned = (data.num_vars() * data.n_rows()) as u64;
        Self {
            node_marginals,
            edge_tables: HashMap::new(),
            insertion_order: Vec::new(),
            cap,
            tables_computed: 0,
            rows_scanned,
        }
    }

    pub fn node_marginal(&self, i: usize) -> &[f64] {
        &self.node_marginals[i]
    }

    pub fn node_marginals(&self) -> &[Vec<f64>] {
        &self.node_marginals
    }

    /// Pairwise marginal table for `e` (row-major `s_i × s_j`), computed on
    /// first request and cached afterwards.
    pub fn edge_table(&mut self, data: &DiscreteDataset, e: EdgeId) -> &[f64] {
        if !self.edge_tables.contains_key(&e) {
            let table = edge_table_direct(data, e);
            self.tables_computed += 1;
            self.rows_scanned += data.n_rows() as u64;
            if let Some(cap) = self.cap {
                while self.edge_tables.len() >= cap && !self.insertion_order.is_empty() {
                    let oldest = self.insertion_order.remove(0);
                    self.edge_tables.remove(&oldest);
                }
            }
            self.insertion_order.push(e);
            self.edge_tables.insert(e, table);
        }
        self.edge_tables.get(&e).unwrap()
    }

    pub fn is_cached(&self, e: &EdgeId) -> bool {
        self.edge_tables.contains_key(e)
    }

    /// Builds every `C(n,2)` table up front.
    pub fn precompute_all(&mut self, data: &DiscreteDataset) {
        for e in crate::model::all_edges(data.num_vars()) {
            self.edge_table(data, e);
        }
    }

    pub fn tables_computed(&self) -> u64 {
        self.tables_computed
    }

    pub fn rows_scanned(&self) -> u64 {
        self.rows_scanned
    }

    pub fn cached_tables(&self) -> usize {
        self.edge_tables.len()
    }
}

/// Per-node empirical marginals: entry `a` of vector `i` is
/// `#{rows with x_i = a} / N`.
pub fn node_marginals(data: &DiscreteDataset) -> Vec<Vec<f64>> {
    let n = data.num_vars();
    let inv_n = 1.0 / data.n_rows() as f64;
    let mut counts: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![0.0; data.spec().card(i)])
        .collect();
    for row in data.rows() {
        for (i, &v) in row.iter().enumerate() {
            counts[i][v as usize] += inv_n;
        }
    }
    counts
}

fn edge_table_direct(data: &DiscreteDataset, e: EdgeId) -> Vec<f64> {
    let (si, sj) = (data.spec().card(e.i()), data.spec().card(e.j()));
    let inv_n = 1.0 / data.n_rows() as f64;
    let mut table = vec![0.0; si * sj];
    for row in data.rows() {
        let a = row[e.i()] as usize;
        let b = row[e.j()] as usize;
        table[a * sj + b] += inv_n;
    }
    table
}
